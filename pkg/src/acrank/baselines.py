"""Heuristic benchmark rankers: decayed popularity (mpc) and decayed
sales value (mpgc) over the behavioral stats store.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .features import ContextState, StatsStore
from .ranking import RankedList, order_candidates
from .sessions import normalize_match


@dataclass(frozen=True)
class PopularityIndex:
    """Immutable query -> (decayed_popularity, decayed_gmv) lookup.

    Built from a stats store; unknown queries read as (0, 0).  Keys are
    match-normalized so lookups tolerate case and spacing differences.
    """

    entries: dict[str, tuple[float, float]]

    @classmethod
    def from_stats(cls, stats: StatsStore) -> "PopularityIndex":
        entries = {}
        for query in stats.queries():
            record = stats.get(query)
            entries[normalize_match(query)] = (
                record.decayed_popularity, record.decayed_gmv)
        return cls(entries=entries)

    def popularity(self, query: str) -> float:
        return self.entries.get(normalize_match(query), (0.0, 0.0))[0]

    def gmv(self, query: str) -> float:
        return self.entries.get(normalize_match(query), (0.0, 0.0))[1]


def mpc_rank(candidates: Sequence[str], index: PopularityIndex) -> RankedList:
    """Decayed popularity descending; absent candidates score 0; ties
    break lexicographically."""
    scores = [index.popularity(c) for c in candidates]
    return order_candidates(candidates, scores)


def mpgc_rank(candidates: Sequence[str], index: PopularityIndex) -> RankedList:
    """As mpc_rank but keyed on decayed sales value."""
    scores = [index.gmv(c) for c in candidates]
    return order_candidates(candidates, scores)


@dataclass(frozen=True)
class MostPopularRanker:
    index: PopularityIndex
    ranker_id: str = "mpc"

    def rank(self, prefix: str, candidates: Sequence[str],
             ctx: ContextState) -> RankedList:
        return mpc_rank(candidates, self.index)


@dataclass(frozen=True)
class MostValuableRanker:
    index: PopularityIndex
    ranker_id: str = "mpgc"

    def rank(self, prefix: str, candidates: Sequence[str],
             ctx: ContextState) -> RankedList:
        return mpgc_rank(candidates, self.index)
