"""Fixed feature layout consumed by the rankers.

A candidate under a typed prefix is described by three blocks:

  dense   [candidate length, decayed popularity, decayed sales,
           exact-match flag]
  series  daily popularity counts for the last H days (oldest first), the
           input to the recurrent layer
  context cosine similarity to each of the K most recent searches (newest
           first), their max and mean, and a context-presence flag

The dense block deliberately carries no prefix-derived scalars (typed
length, typed/candidate length ratio).  The typed length is constant
across every candidate of one ranking call, and the ratio only rescales
the candidate length that is already present; the one thing either adds
is a tag for how deep the typer was when the evidence was logged, which
lets a pairwise-trained scorer keep contradictory ordering rules per
surface instead of reconciling them into one ranking.

The layout is versioned into every checkpoint so a scorer can refuse
features it was not trained on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .embedding import EmbeddingTable, cosine_flagged
from .sessions import normalize_match

HISTORY_DAYS = 7
CONTEXT_QUERIES = 3
HALF_LIFE_DAYS = 7.0

DENSE_FEATURES = (
    "candidate_length",
    "decayed_popularity",
    "decayed_gmv",
    "exact_match",
)
DENSE_DECAYED_POPULARITY = DENSE_FEATURES.index("decayed_popularity")


def decayed_aggregate(daily_values: Iterable[float], half_life_days: float) -> float:
    """Exponentially decayed sum of a daily series, most recent day last
    (age 0): sum_d value_d * 2^(-age_d / half_life)."""
    if half_life_days <= 0:
        raise ValueError("half_life_days must be positive")
    values = list(daily_values)
    total = 0.0
    for age, value in enumerate(reversed(values)):
        total += value * 2.0 ** (-age / half_life_days)
    return total


@dataclass(frozen=True)
class BehaviorStats:
    """Daily popularity/sales history for one query, zero-padded to H days."""

    daily_counts: tuple[float, ...]
    daily_gmv: tuple[float, ...]
    decayed_popularity: float
    decayed_gmv: float

    @classmethod
    def from_daily(
        cls,
        daily_counts: Iterable[float],
        daily_gmv: Iterable[float],
        horizon: int = HISTORY_DAYS,
        half_life_days: float = HALF_LIFE_DAYS,
    ) -> "BehaviorStats":
        counts = _pad_series(daily_counts, horizon)
        gmv = _pad_series(daily_gmv, horizon)
        return cls(
            daily_counts=counts,
            daily_gmv=gmv,
            decayed_popularity=decayed_aggregate(counts, half_life_days),
            decayed_gmv=decayed_aggregate(gmv, half_life_days),
        )

    @classmethod
    def zero(cls, horizon: int = HISTORY_DAYS) -> "BehaviorStats":
        zeros = (0.0,) * horizon
        return cls(daily_counts=zeros, daily_gmv=zeros, decayed_popularity=0.0, decayed_gmv=0.0)


def _pad_series(values: Iterable[float], horizon: int) -> tuple[float, ...]:
    values = [float(v) for v in values]
    if any(v < 0 for v in values):
        raise ValueError("daily series entries must be nonnegative")
    if len(values) > horizon:
        values = values[-horizon:]  # keep the most recent days
    return tuple([0.0] * (horizon - len(values)) + values)


@dataclass(frozen=True)
class ContextState:
    """The last K submitted queries, newest first."""

    queries: tuple[tuple[str, int], ...] = ()

    @classmethod
    def from_past_queries(
        cls, past_queries: Iterable[tuple[str, int]], k: int = CONTEXT_QUERIES
    ) -> "ContextState":
        """Build from an oldest-first (query, epoch ms) history."""
        ordered = sorted(past_queries, key=lambda item: item[1], reverse=True)
        return cls(queries=tuple(ordered[:k]))

    @property
    def present(self) -> bool:
        return bool(self.queries)


@dataclass(frozen=True)
class FeatureLayout:
    """Shape contract between featurization and a trained scorer."""

    series_len: int = HISTORY_DAYS
    context_queries: int = CONTEXT_QUERIES
    embedding_dim: int | None = None
    dense_features: tuple[str, ...] = DENSE_FEATURES

    @property
    def dense_len(self) -> int:
        return len(self.dense_features)

    @property
    def context_len(self) -> int:
        return self.context_queries + 3  # per-query cosines + max + mean + presence

    def to_dict(self) -> dict:
        return {
            "series_len": self.series_len,
            "context_queries": self.context_queries,
            "embedding_dim": self.embedding_dim,
            "dense_features": list(self.dense_features),
        }

    @classmethod
    def from_dict(cls, record: dict) -> "FeatureLayout":
        return cls(
            series_len=int(record["series_len"]),
            context_queries=int(record["context_queries"]),
            embedding_dim=record.get("embedding_dim"),
            dense_features=tuple(record["dense_features"]),
        )


@dataclass(frozen=True)
class FeatureVector:
    dense: np.ndarray
    series: np.ndarray
    context: np.ndarray


def featurize(
    candidate: str,
    prefix: str,
    stats: BehaviorStats,
    ctx: ContextState,
    table: EmbeddingTable | None,
    layout: FeatureLayout | None = None,
) -> FeatureVector:
    """Pure mapping from one candidate to the fixed feature layout.

    Context cosines are 0 when a query is absent or out of vocabulary; the
    max/mean aggregates run over the context queries actually present.  An
    empty context gives an all-zero block with presence flag 0.
    """
    if not candidate:
        raise ValueError("candidate must be nonempty")
    layout = layout or FeatureLayout()
    norm_candidate = normalize_match(candidate)
    norm_prefix = normalize_match(prefix)

    dense = np.array(
        [
            float(len(norm_candidate)),
            stats.decayed_popularity,
            stats.decayed_gmv,
            1.0 if norm_candidate == norm_prefix else 0.0,
        ],
        dtype=np.float64,
    )

    series = np.asarray(stats.daily_counts, dtype=np.float64)
    if len(series) != layout.series_len:
        raise ValueError(f"series length {len(series)} != layout {layout.series_len}")

    k = layout.context_queries
    cosines = np.zeros(k, dtype=np.float64)
    candidate_vec = table.vector_for_query(candidate) if table is not None else None
    if candidate_vec is not None and table is not None and layout.embedding_dim is not None:
        if len(candidate_vec) != layout.embedding_dim:
            raise ValueError(
                f"embedding dim {len(candidate_vec)} != layout {layout.embedding_dim}"
            )
    n_present = 0
    for i, (past_query, _) in enumerate(ctx.queries[:k]):
        n_present += 1
        if candidate_vec is None or table is None:
            continue
        past_vec = table.vector_for_query(past_query)
        if past_vec is None:
            continue
        cosines[i], _ = cosine_flagged(candidate_vec, past_vec)
    present_cos = cosines[:n_present]
    context = np.concatenate(
        [
            cosines,
            [
                float(np.max(present_cos)) if n_present else 0.0,
                float(np.mean(present_cos)) if n_present else 0.0,
                1.0 if ctx.present else 0.0,
            ],
        ]
    )

    vec = FeatureVector(dense=dense, series=series, context=context)
    for block in (vec.dense, vec.series, vec.context):
        if not np.all(np.isfinite(block)):
            raise ValueError("non-finite feature value")
    return vec


class StatsStore:
    """Immutable query -> BehaviorStats map; unknown queries read as zeros."""

    def __init__(
        self,
        stats: dict[str, BehaviorStats],
        horizon: int = HISTORY_DAYS,
        half_life_days: float = HALF_LIFE_DAYS,
    ):
        self.horizon = horizon
        self.half_life_days = half_life_days
        self._stats = stats
        self._zero = BehaviorStats.zero(horizon)

    def get(self, query: str) -> BehaviorStats:
        return self._stats.get(normalize_match(query), self._zero)

    def __contains__(self, query: str) -> bool:
        return normalize_match(query) in self._stats

    def __len__(self) -> int:
        return len(self._stats)

    def queries(self) -> list[str]:
        return sorted(self._stats)


def load_stats(
    stream: IO[str],
    horizon: int = HISTORY_DAYS,
    half_life_days: float = HALF_LIFE_DAYS,
) -> StatsStore:
    """Read the per-line {"query", "daily_counts", "daily_gmv"} records."""
    stats: dict[str, BehaviorStats] = {}
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            stats[normalize_match(record["query"])] = BehaviorStats.from_daily(
                record["daily_counts"], record["daily_gmv"], horizon, half_life_days
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"stats line {line_no}: {exc}") from exc
    return StatsStore(stats, horizon, half_life_days)


def dump_stats(records: dict[str, tuple[list[float], list[float]]], stream: IO[str]) -> None:
    """Write stats records sorted by query for reproducible files."""
    for query in sorted(records):
        counts, gmv = records[query]
        if len(counts) != len(gmv):
            raise ValueError(f"stats for {query!r}: series lengths differ")
        if any(not math.isfinite(v) for v in list(counts) + list(gmv)):
            raise ValueError(f"stats for {query!r}: non-finite value")
        stream.write(
            json.dumps(
                {"query": query, "daily_counts": list(counts), "daily_gmv": list(gmv)},
                sort_keys=True,
            )
            + "\n"
        )
