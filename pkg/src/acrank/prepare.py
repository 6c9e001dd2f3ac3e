"""Offline data preparation: session splitting, behavioral stat rollups,
evaluation sample extraction, and the JSONL file formats tying the
pipeline stages together.
"""

from __future__ import annotations

import json
import math
from typing import Iterable, Sequence, TextIO

from .embedding import SESSION_GAP_MS, sessionize
from .features import CONTEXT_QUERIES, HISTORY_DAYS, ContextState
from .metrics import EvalSample
from .sessions import (
    ACSession,
    TrainingPair,
    extract_pairs,
    normalize_match,
    pair_weight,
    session_unit,
)

DAY_MS = 86_400_000
EVAL_WEIGHT_MODES = ("unit", "gmv", "log1p_gmv")


def split_sessions(
    sessions: Sequence[ACSession],
    validation_fraction: float,
    eval_fraction: float,
    seed: int,
) -> tuple[list[ACSession], list[ACSession], list[ACSession]]:
    """Hash-based three-way split keyed on session_id.

    Every impression of a session lands in the same slice, so evaluation
    sessions contribute nothing to training pairs or behavioral stats.
    """
    if validation_fraction < 0 or eval_fraction < 0:
        raise ValueError("fractions must be >= 0")
    if validation_fraction + eval_fraction >= 1.0:
        raise ValueError("fractions must sum to < 1")
    train: list[ACSession] = []
    validation: list[ACSession] = []
    evaluation: list[ACSession] = []
    for session in sessions:
        unit = session_unit(session.session_id, seed)
        if unit < validation_fraction:
            validation.append(session)
        elif unit < validation_fraction + eval_fraction:
            evaluation.append(session)
        else:
            train.append(session)
    return train, validation, evaluation


def build_stats(
    sessions: Sequence[ACSession],
    reference_ts: int,
    horizon: int = HISTORY_DAYS,
) -> dict[str, tuple[list[float], list[float]]]:
    """Daily submission counts and sales value per normalized query.

    Day buckets count back from the reference timestamp's day; the last
    series element is the reference day itself.  Submissions older than
    the horizon fall outside the window and are dropped.
    """
    reference_day = reference_ts // DAY_MS
    stats: dict[str, tuple[list[float], list[float]]] = {}
    for session in sessions:
        key = normalize_match(session.submitted_query)
        if not key:
            continue
        age = reference_day - session.timestamp // DAY_MS
        if age < 0 or age >= horizon:
            continue
        index = horizon - 1 - int(age)
        counts, gmv = stats.setdefault(key, ([0.0] * horizon, [0.0] * horizon))
        counts[index] += 1.0
        gmv[index] += session.gmv
    return stats


def build_eval_samples(
    sessions: Sequence[ACSession],
    weight_mode: str = "unit",
    context_queries: int = CONTEXT_QUERIES,
) -> list[EvalSample]:
    """One sample per session: the final (deepest-prefix) impression's
    candidates, the submitted query as target, context from past searches."""
    if weight_mode not in EVAL_WEIGHT_MODES:
        raise ValueError(f"unknown weight mode {weight_mode!r}")
    samples = []
    for session in sessions:
        if not session.impressions:
            continue
        impression = session.impressions[-1]
        if weight_mode == "unit":
            weight = 1.0
        elif weight_mode == "gmv":
            weight = session.gmv
        else:
            weight = 1.0 + math.log1p(session.gmv)
        samples.append(EvalSample(
            candidates=impression.candidates,
            target_query=session.submitted_query,
            weight=weight,
            prefix=impression.prefix,
            context=ContextState.from_past_queries(
                session.past_queries, context_queries),
        ))
    return samples


def extract_query_runs(
    sessions: Sequence[ACSession],
    gap_ms: int = SESSION_GAP_MS,
) -> list[list[str]]:
    """Per-user submission streams cut into co-occurrence runs.

    Streams are grouped by user, ordered by time, and split at gaps; runs
    never span users.
    """
    streams: dict[str, list[tuple[str, int]]] = {}
    for session in sessions:
        streams.setdefault(session.user_id, []).append(
            (session.submitted_query, session.timestamp))
    runs: list[list[str]] = []
    for user in sorted(streams):
        events = sorted(streams[user], key=lambda item: item[1])
        runs.extend(sessionize(events, gap_ms))
    return runs


def gmv_positive(sessions: Iterable[ACSession]) -> list[ACSession]:
    return [s for s in sessions if s.gmv > 0]


def sessions_to_pairs(
    sessions: Sequence[ACSession], weight_mode: str = "log1p_gmv"
) -> list[TrainingPair]:
    pairs: list[TrainingPair] = []
    for session in sessions:
        pairs.extend(extract_pairs(session, weight_mode))
    return pairs


def write_pairs(pairs: Sequence[TrainingPair], stream: TextIO) -> None:
    for pair in pairs:
        stream.write(json.dumps(pair.to_dict(), sort_keys=True) + "\n")


def read_pairs(stream: Iterable[str]) -> list[TrainingPair]:
    pairs = []
    for line_no, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            pairs.append(TrainingPair.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"bad pair record at line {line_no}: {exc}") from exc
    return pairs


def write_eval_samples(samples: Sequence[EvalSample], stream: TextIO) -> None:
    for sample in samples:
        stream.write(json.dumps(sample.to_dict(), sort_keys=True) + "\n")


def read_eval_samples(stream: Iterable[str]) -> list[EvalSample]:
    samples = []
    for line_no, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            samples.append(EvalSample.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"bad eval sample at line {line_no}: {exc}") from exc
    return samples


__all__ = [
    "EVAL_WEIGHT_MODES",
    "split_sessions",
    "build_stats",
    "build_eval_samples",
    "extract_query_runs",
    "gmv_positive",
    "sessions_to_pairs",
    "write_pairs",
    "read_pairs",
    "write_eval_samples",
    "read_eval_samples",
    "pair_weight",
]
