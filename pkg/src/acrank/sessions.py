"""Autocomplete session ingestion and pairwise training-data extraction.

A session log line (JSON, one record per line; see docs/session_log_format.md)
describes one keystroke-to-submission journey: the impressions shown while the
customer typed, the query finally submitted, and the sales amount attributed to
the session.  The submitted query is treated as the only relevant suggestion in
every impression that displayed it; every co-displayed suggestion becomes a
negative.  Grouping each positive with each negative of the same impression
yields the training pairs, weighted by the session's attributed sales.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator

MAX_DISPLAY_DEPTH = 10

WEIGHT_MODES = ("gmv", "unit", "log1p_gmv")

_WS_RE = re.compile(r"\s+")


def normalize_match(text: str) -> str:
    """Canonical form used for query equality: lowercase, trimmed, inner
    whitespace collapsed to single spaces."""
    return _WS_RE.sub(" ", text.strip().lower())


class SessionLogError(ValueError):
    """A malformed session log line."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


@dataclass(frozen=True)
class Impression:
    """One displayed (prefix, suggestion list) event.  Rank 1 is the top slot."""

    prefix: str
    candidates: tuple[str, ...]


@dataclass(frozen=True)
class ACSession:
    session_id: str
    user_id: str
    timestamp: int  # epoch ms of submission
    past_queries: tuple[tuple[str, int], ...]  # (query, epoch ms), oldest first
    impressions: tuple[Impression, ...]
    submitted_query: str
    gmv: float


@dataclass(frozen=True)
class LabeledImpression:
    """An impression with the submitted query located (if displayed).

    ``positive_rank`` is the 1-based slot of the submitted query, or None when
    the impression never showed it; every other candidate appears in
    ``negatives`` as (query, rank).
    """

    impression: Impression
    positive_rank: int | None
    negatives: tuple[tuple[str, int], ...]


@dataclass(frozen=True)
class TrainingPair:
    """One (relevant, irrelevant) suggestion pair from a single impression."""

    session_id: str
    positive_query: str
    negative_query: str
    rank_p: int
    rank_n: int
    weight: float
    prefix: str
    context: tuple[tuple[str, int], ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "positive": self.positive_query,
            "negative": self.negative_query,
            "rank_p": self.rank_p,
            "rank_n": self.rank_n,
            "weight": self.weight,
            "prefix": self.prefix,
            "context": [[q, ts] for q, ts in self.context],
        }

    @classmethod
    def from_dict(cls, record: dict) -> "TrainingPair":
        return cls(
            session_id=record["session_id"],
            positive_query=record["positive"],
            negative_query=record["negative"],
            rank_p=int(record["rank_p"]),
            rank_n=int(record["rank_n"]),
            weight=float(record["weight"]),
            prefix=record["prefix"],
            context=tuple((q, int(ts)) for q, ts in record["context"]),
        )


def _parse_record(record: dict, line_no: int, max_depth: int) -> ACSession:
    for key in ("session_id", "user_id", "ts", "impressions", "submitted", "gmv"):
        if key not in record:
            raise SessionLogError(line_no, f"missing field {key!r}")
    gmv = record["gmv"]
    if not isinstance(gmv, (int, float)) or isinstance(gmv, bool):
        raise SessionLogError(line_no, "gmv must be a number")
    if gmv < 0:
        raise SessionLogError(line_no, "negative gmv")
    if not math.isfinite(gmv):
        raise SessionLogError(line_no, "non-finite gmv")

    past = []
    for entry in record.get("past_queries", []):
        if not (isinstance(entry, (list, tuple)) and len(entry) == 2):
            raise SessionLogError(line_no, "past_queries entries must be [query, ts]")
        q, ts = entry
        if not isinstance(q, str) or not isinstance(ts, int):
            raise SessionLogError(line_no, "past_queries entries must be [str, int]")
        past.append((q, ts))

    impressions = []
    raw_impressions = record["impressions"]
    if not isinstance(raw_impressions, list):
        raise SessionLogError(line_no, "impressions must be an array")
    for imp in raw_impressions:
        if not isinstance(imp, dict) or "prefix" not in imp or "candidates" not in imp:
            raise SessionLogError(line_no, "impression must have prefix and candidates")
        candidates = imp["candidates"]
        if not isinstance(candidates, list) or not candidates:
            raise SessionLogError(line_no, "impression candidates must be nonempty")
        if any(not isinstance(c, str) for c in candidates):
            raise SessionLogError(line_no, "impression candidates must be strings")
        if len(set(candidates)) != len(candidates):
            raise SessionLogError(line_no, "duplicate candidates in impression")
        # Commercial display lists are bounded; anything deeper is discarded.
        impressions.append(Impression(prefix=imp["prefix"], candidates=tuple(candidates[:max_depth])))

    return ACSession(
        session_id=str(record["session_id"]),
        user_id=str(record["user_id"]),
        timestamp=int(record["ts"]),
        past_queries=tuple(past),
        impressions=tuple(impressions),
        submitted_query=str(record["submitted"]),
        gmv=float(gmv),
    )


def parse_session_log(
    lines: Iterable[str | bytes],
    strict: bool = False,
    errors: list[SessionLogError] | None = None,
    max_depth: int = MAX_DISPLAY_DEPTH,
) -> Iterator[ACSession]:
    """Parse a line-oriented session log, preserving input order.

    In the default skip-and-report mode a malformed line is recorded in
    ``errors`` (when given) and skipped; ``strict=True`` raises instead.
    """
    for line_no, raw in enumerate(lines, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        if not raw.strip():
            continue
        try:
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise SessionLogError(line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(record, dict):
                raise SessionLogError(line_no, "record must be an object")
            yield _parse_record(record, line_no, max_depth)
        except SessionLogError as exc:
            if strict:
                raise
            if errors is not None:
                errors.append(exc)


def session_to_dict(session: ACSession) -> dict:
    """Inverse of the parser, used by the synthetic generator and fixtures."""
    return {
        "session_id": session.session_id,
        "user_id": session.user_id,
        "ts": session.timestamp,
        "past_queries": [[q, ts] for q, ts in session.past_queries],
        "impressions": [
            {"prefix": imp.prefix, "candidates": list(imp.candidates)}
            for imp in session.impressions
        ],
        "submitted": session.submitted_query,
        "gmv": session.gmv,
    }


def label_impressions(session: ACSession) -> list[LabeledImpression]:
    """Locate the submitted query in each impression.

    Matching is on ``normalize_match`` equality.  An impression that never
    displayed the submitted query is still returned (positive_rank None, all
    candidates negative): absence of a positive is a valid outcome.
    """
    target = normalize_match(session.submitted_query)
    labeled = []
    for imp in session.impressions:
        positive_rank = None
        negatives = []
        for rank, candidate in enumerate(imp.candidates, start=1):
            if positive_rank is None and normalize_match(candidate) == target:
                positive_rank = rank
            else:
                negatives.append((candidate, rank))
        labeled.append(LabeledImpression(imp, positive_rank, tuple(negatives)))
    return labeled


def pair_weight(gmv: float, weight_mode: str) -> float:
    if weight_mode == "gmv":
        return gmv
    if weight_mode == "unit":
        return 1.0
    if weight_mode == "log1p_gmv":
        return 1.0 + math.log1p(gmv)
    raise ValueError(f"unknown weight_mode {weight_mode!r}")


def extract_pairs(session: ACSession, weight_mode: str = "log1p_gmv") -> list[TrainingPair]:
    """All (positive, negative) combinations per impression with a positive.

    The session's attributed sales become the pair weight: raw (``gmv``),
    constant 1 (``unit``), or 1 + ln(1 + gmv) (``log1p_gmv``, the default;
    raw sales span orders of magnitude and would dominate gradients).
    """
    weight = pair_weight(session.gmv, weight_mode)
    pairs = []
    for labeled in label_impressions(session):
        if labeled.positive_rank is None:
            continue
        positive = labeled.impression.candidates[labeled.positive_rank - 1]
        for negative, rank_n in labeled.negatives:
            pairs.append(
                TrainingPair(
                    session_id=session.session_id,
                    positive_query=positive,
                    negative_query=negative,
                    rank_p=labeled.positive_rank,
                    rank_n=rank_n,
                    weight=weight,
                    prefix=labeled.impression.prefix,
                    context=session.past_queries,
                )
            )
    return pairs


def session_unit(session_id: str, seed: int) -> float:
    """Deterministic uniform draw in [0, 1) keyed by (seed, session id)."""
    digest = hashlib.sha256(f"{seed}:{session_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def split_corpus(
    pairs: Iterable[TrainingPair],
    validation_fraction: float,
    seed: int,
) -> tuple[list[TrainingPair], list[TrainingPair]]:
    """Deterministic train/validation split keyed by session id.

    All pairs of one session land on the same side, so per-session signal
    never leaks across the split.
    """
    if not 0.0 <= validation_fraction <= 1.0:
        raise ValueError("validation_fraction must be in [0, 1]")
    train, validation = [], []
    for pair in pairs:
        if session_unit(pair.session_id, seed) < validation_fraction:
            validation.append(pair)
        else:
            train.append(pair)
    return train, validation
