"""Shared ranking types: scored candidate lists and the ranker interface."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

from .features import ContextState


@dataclass(frozen=True)
class ScoredQuery:
    query: str
    score: float


@dataclass(frozen=True)
class RankedList:
    """Candidates ordered best-first with nonincreasing scores."""

    entries: tuple[ScoredQuery, ...]

    @property
    def queries(self) -> list[str]:
        return [entry.query for entry in self.entries]

    @property
    def scores(self) -> list[float]:
        return [entry.score for entry in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def order_candidates(
    candidates: Sequence[str],
    scores: Sequence[float],
    tiebreak_keys: Sequence[float] | None = None,
) -> RankedList:
    """Total-order sort: score desc, then tiebreak key desc, then query asc.

    The full tie-break makes every ranking invariant to input permutation.
    """
    if len(candidates) != len(scores):
        raise ValueError("candidates and scores must have equal length")
    if tiebreak_keys is None:
        tiebreak_keys = [0.0] * len(candidates)
    order = sorted(
        range(len(candidates)),
        key=lambda i: (-scores[i], -tiebreak_keys[i], candidates[i]),
    )
    return RankedList(entries=tuple(ScoredQuery(candidates[i], float(scores[i])) for i in order))


@runtime_checkable
class Ranker(Protocol):
    """Anything that can order candidate queries for a typed prefix."""

    ranker_id: str

    def rank(self, prefix: str, candidates: Sequence[str], ctx: ContextState) -> RankedList: ...
