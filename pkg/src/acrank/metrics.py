"""Offline ranking metrics: weighted reciprocal rank, truncated discounted
gain with a single relevant item, and slice-wise evaluation reports.

Samples split into three views: all samples (AS), samples with past
searches in context (SWPS), and samples without (SWOPS).  The gain log
base is 2 everywhere, shared with the pairwise loss.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .features import ContextState
from .ranking import Ranker
from .sessions import normalize_match

SLICE_NAMES = ("AS", "SWPS", "SWOPS")
METRIC_NAMES = ("mrr", "ndcg_at_1", "ndcg_at_3")


@dataclass(frozen=True)
class EvalSample:
    """One ranked candidate list with its relevant query and weight.

    ``candidates`` is the order under evaluation (a ranker's output, or a
    display order when judging logs directly).  Candidates must be unique
    after match normalization; the target need not appear at all.
    """

    candidates: tuple[str, ...]
    target_query: str
    weight: float = 1.0
    prefix: str = ""
    context: ContextState = field(default_factory=ContextState)

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("candidate list must be nonempty")
        normalized = [normalize_match(c) for c in self.candidates]
        if len(set(normalized)) != len(normalized):
            raise ValueError("duplicate candidates in sample")
        if self.weight < 0:
            raise ValueError("weight must be >= 0")

    @property
    def context_present(self) -> bool:
        return self.context.present

    def with_candidates(self, candidates: Sequence[str]) -> "EvalSample":
        return EvalSample(
            candidates=tuple(candidates),
            target_query=self.target_query,
            weight=self.weight,
            prefix=self.prefix,
            context=self.context,
        )

    def to_dict(self) -> dict:
        return {
            "candidates": list(self.candidates),
            "target": self.target_query,
            "weight": self.weight,
            "prefix": self.prefix,
            "context": [[q, ts] for q, ts in self.context.queries],
        }

    @classmethod
    def from_dict(cls, record: dict) -> "EvalSample":
        return cls(
            candidates=tuple(record["candidates"]),
            target_query=record["target"],
            weight=float(record["weight"]),
            prefix=record.get("prefix", ""),
            context=ContextState(
                queries=tuple((q, int(ts)) for q, ts in record.get("context", []))),
        )


def hit_rank(candidates: Sequence[str], target: str) -> int | None:
    """1-based position of the target under match normalization, else None."""
    wanted = normalize_match(target)
    for position, candidate in enumerate(candidates, start=1):
        if normalize_match(candidate) == wanted:
            return position
    return None


def _check_weights(samples: Sequence[EvalSample]) -> float:
    if not samples:
        raise ValueError("empty sample set")
    total = sum(s.weight for s in samples)
    if total == 0.0:
        raise ValueError("degenerate weights: all sample weights are zero")
    return total


def mrr(samples: Sequence[EvalSample], normalization: str = "weighted_mean") -> float:
    """Weighted reciprocal rank of the target; missing targets score 0.

    ``weighted_mean`` divides by the weight total so the result stays in
    [0, 1]; ``paper_literal`` divides by the sample count instead, which
    is unbounded when weights exceed 1.
    """
    if normalization not in ("weighted_mean", "paper_literal"):
        raise ValueError(f"unknown normalization {normalization!r}")
    total_weight = _check_weights(samples)
    acc = 0.0
    for sample in samples:
        rank = hit_rank(sample.candidates, sample.target_query)
        if rank is not None:
            acc += sample.weight / rank
    if normalization == "paper_literal":
        return acc / len(samples)
    return acc / total_weight


def ndcg_at_p(samples: Sequence[EvalSample], p: int) -> float:
    """Weighted mean of 1/log2(rank+1) for hits at rank <= p, else 0.

    With a single relevant item of gain 1 the ideal ranking scores exactly
    1, so no per-sample normalization is needed.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    total_weight = _check_weights(samples)
    acc = 0.0
    for sample in samples:
        rank = hit_rank(sample.candidates, sample.target_query)
        if rank is not None and rank <= p:
            acc += sample.weight / math.log2(rank + 1)
    return acc / total_weight


@dataclass(frozen=True)
class SliceMetrics:
    name: str
    sample_count: int
    mrr: float | None
    ndcg_at_1: float | None
    ndcg_at_3: float | None

    @property
    def empty(self) -> bool:
        return self.sample_count == 0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "sample_count": self.sample_count,
            "mrr": self.mrr,
            "ndcg_at_1": self.ndcg_at_1,
            "ndcg_at_3": self.ndcg_at_3,
            "empty": self.empty,
        }


@dataclass(frozen=True)
class EvalReport:
    ranker_id: str
    slices: dict[str, SliceMetrics]
    error_count: int = 0

    def slice(self, name: str) -> SliceMetrics:
        return self.slices[name]

    def to_dict(self) -> dict:
        return {
            "ranker_id": self.ranker_id,
            "slices": {name: self.slices[name].to_dict() for name in SLICE_NAMES},
            "error_count": self.error_count,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, payload: dict) -> "EvalReport":
        slices = {}
        for name in SLICE_NAMES:
            entry = payload["slices"][name]
            slices[name] = SliceMetrics(
                name=name,
                sample_count=entry["sample_count"],
                mrr=entry["mrr"],
                ndcg_at_1=entry["ndcg_at_1"],
                ndcg_at_3=entry["ndcg_at_3"],
            )
        return cls(ranker_id=payload["ranker_id"], slices=slices,
                   error_count=payload.get("error_count", 0))


def _slice_metrics(name: str, samples: Sequence[EvalSample]) -> SliceMetrics:
    if not samples:
        return SliceMetrics(name, 0, None, None, None)
    return SliceMetrics(
        name=name,
        sample_count=len(samples),
        mrr=mrr(samples),
        ndcg_at_1=ndcg_at_p(samples, 1),
        ndcg_at_3=ndcg_at_p(samples, 3),
    )


def evaluate(
    ranker: Ranker,
    samples: Sequence[EvalSample],
    on_error: Callable[[EvalSample, Exception], None] | None = None,
) -> EvalReport:
    """Re-rank every sample's candidates and score the three slices.

    A ranker failure on one sample drops that sample and bumps the error
    tally rather than aborting the run; ``on_error`` observes each one.
    """
    scored: list[EvalSample] = []
    errors = 0
    for sample in samples:
        try:
            ranked = ranker.rank(sample.prefix, sample.candidates, sample.context)
        except Exception as exc:  # tallied, not fatal
            errors += 1
            if on_error is not None:
                on_error(sample, exc)
            continue
        scored.append(sample.with_candidates(ranked.queries))
    with_ctx = [s for s in scored if s.context_present]
    without_ctx = [s for s in scored if not s.context_present]
    slices = {
        "AS": _slice_metrics("AS", scored),
        "SWPS": _slice_metrics("SWPS", with_ctx),
        "SWOPS": _slice_metrics("SWOPS", without_ctx),
    }
    return EvalReport(ranker_id=ranker.ranker_id, slices=slices, error_count=errors)


def _format_cell(value: float | None, base: float | None) -> str:
    if value is None:
        return "      -      "
    text = f"{value:.4f}"
    if base is None or base == value:
        return f"{text:>13}"
    if base == 0.0:
        return f"{text} (  n/a )"
    delta = (value - base) / base * 100.0
    return f"{text} ({delta:+.2f}%)"


def render_table(reports: Sequence[EvalReport], baseline_id: str | None = None) -> str:
    """Plain-text comparison: one section per slice, one row per ranker,
    percent deltas against the named baseline ranker."""
    if not reports:
        raise ValueError("no reports to render")
    baseline = None
    if baseline_id is not None:
        matches = [r for r in reports if r.ranker_id == baseline_id]
        if not matches:
            raise ValueError(f"baseline ranker {baseline_id!r} not among reports")
        baseline = matches[0]
    lines = []
    name_width = max(len(r.ranker_id) for r in reports)
    name_width = max(name_width, len("ranker"))
    for slice_name in SLICE_NAMES:
        counts = {r.slice(slice_name).sample_count for r in reports}
        count_note = f"n={min(counts)}" if len(counts) == 1 else "n varies"
        lines.append(f"[{slice_name}] ({count_note})")
        header = (f"  {'ranker':<{name_width}}  {'MRR':>13}  "
                  f"{'NDCG@1':>13}  {'NDCG@3':>13}")
        lines.append(header)
        for report in reports:
            row = report.slice(slice_name)
            if row.empty:
                lines.append(f"  {report.ranker_id:<{name_width}}  (no samples)")
                continue
            base_row = baseline.slice(slice_name) if baseline is not None else None
            cells = [
                _format_cell(row.mrr, base_row.mrr if base_row else None),
                _format_cell(row.ndcg_at_1, base_row.ndcg_at_1 if base_row else None),
                _format_cell(row.ndcg_at_3, base_row.ndcg_at_3 if base_row else None),
            ]
            lines.append(f"  {report.ranker_id:<{name_width}}  " + "  ".join(cells))
        lines.append("")
    return "\n".join(lines)
