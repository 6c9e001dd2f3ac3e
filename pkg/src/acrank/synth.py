"""Synthetic session-log generator with a known ground truth.

Real autocompletion logs are proprietary, so every end-to-end check in
this package runs on sessions sampled here.  The generator plants three
recoverable structures:

  * a two-cluster intent space: each user episode commits to one cluster
    and draws its searches from that cluster's query variants, giving
    embeddings a co-occurrence signal and the ranker a context signal;
  * a hidden utility function over candidates (popularity plus an
    intent-match bonus) that drives which suggestion gets submitted, so a
    trained ranker can beat popularity-only ordering;
  * position-skewed labels: a configurable fraction of searches comes
    from browsing moods: the typer lingers at one and two characters
    and settles for a family's familiar flagship instead of typing
    through.
    Most lean mainstream and spot the head flagship right on top of
    the pooled shortlist after a couple of renders; the rest hunt a
    tail flagship parked near the bottom, hovering and backspacing
    while they scan, so the same pooled view re-renders over and over.
    The repeated deep-slot labels outnumber the shallow ones in raw
    pair counts, and weighting pair losses by display-rank gap is what
    keeps them from overruling the top of the list.

Everything is deterministic for a fixed config (single numpy generator,
fixed iteration order).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .sessions import MAX_DISPLAY_DEPTH

# Stems come in pairs sharing their first two letters, so one- and
# two-character prefixes pool two stem families and the display depth cap
# actually bites.  The first stem of each pair is the head family: its
# eight variants fill the pooled shortlist, leaving only the tail
# family's two best at the bottom slots.
STEMS = ("ban", "bar", "cal", "car", "del", "den",
         "fin", "fir", "gal", "gar", "hal", "ham")
CLUSTER_WORDS = (
    ("red", "blue", "green", "gold"),
    ("pro", "max", "mini", "ultra"),
)

# Within-family popularity profile, most popular first.  Odd slots host
# the other cluster, so every family alternates clusters down its list:
# the flagship (slot 0) is a cluster-0 variant and the strongest
# cluster-1 variant sits right behind it.  Adjacent steps keep a >= 1.4x
# gap so the jitter below can never reorder them.
POP_PROFILE = (1.0, 0.68, 0.46, 0.31, 0.21, 0.14, 0.10, 0.065)
TAIL_SCALE = 0.05  # keeps a whole tail family under its head family's weakest

BASE_TS_MS = 1_767_225_600_000  # 2026-01-01T00:00:00Z, arbitrary fixed origin
DAY_MS = 86_400_000


@dataclass(frozen=True)
class SynthQuery:
    text: str
    stem: str
    cluster: int
    popularity: float


@dataclass(frozen=True)
class SynthConfig:
    users: int = 150
    days: int = 10
    mean_episodes_per_user: float = 3.0
    mean_searches_per_episode: float = 3.0
    beta_popularity: float = 1.0
    beta_context: float = 2.5
    gumbel_scale: float = 1.0
    browse_rate: float = 0.0
    offlist_rate: float = 0.03
    gmv_zero_rate: float = 0.25
    seed: int = 0

    def validate(self) -> None:
        if self.users < 1 or self.days < 1:
            raise ValueError("users and days must be >= 1")
        for name in ("browse_rate", "offlist_rate", "gmv_zero_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")


def build_vocabulary(rng: np.random.Generator) -> list[SynthQuery]:
    """Every stem crossed with every cluster word.

    Popularity is tiered: within each letter pair, all eight head-family
    variants outrank everything in the tail family, and within a family
    the profile alternates clusters.  A small multiplicative jitter keeps
    values distinct between pairs without ever reordering a display list.
    """
    vocabulary = []
    for index, stem in enumerate(STEMS):
        base = 1000.0 / (1.0 + index // 2) ** 0.4
        if index % 2 == 1:
            base *= TAIL_SCALE
        used = [0, 0]
        for slot, step in enumerate(POP_PROFILE):
            cluster = slot % 2
            word = CLUSTER_WORDS[cluster][used[cluster]]
            used[cluster] += 1
            jitter = 1.0 + 0.02 * float(rng.uniform(-1.0, 1.0))
            vocabulary.append(SynthQuery(text=f"{stem} {word}", stem=stem,
                                         cluster=cluster,
                                         popularity=base * step * jitter))
    return vocabulary


def _prefix_pools(vocabulary: Sequence[SynthQuery]) -> dict[str, list[SynthQuery]]:
    """Map each 1..3-character prefix to its display list: popularity
    descending, text ascending, capped at the display depth."""
    pools: dict[str, list[SynthQuery]] = {}
    for query in vocabulary:
        for length in (1, 2, 3):
            pools.setdefault(query.text[:length], []).append(query)
    for prefix, queries in pools.items():
        queries.sort(key=lambda q: (-q.popularity, q.text))
        pools[prefix] = queries[:MAX_DISPLAY_DEPTH]
    return pools


def _stem_groups(vocabulary: Sequence[SynthQuery]) -> dict[str, list[SynthQuery]]:
    groups: dict[str, list[SynthQuery]] = {}
    for query in vocabulary:
        groups.setdefault(query.stem, []).append(query)
    for stem, queries in groups.items():
        queries.sort(key=lambda q: (-q.popularity, q.text))
    return groups


def _pick_target(
    group: Sequence[SynthQuery],
    cluster: int,
    config: SynthConfig,
    rng: np.random.Generator,
) -> SynthQuery:
    """Sample the submitted query from the hidden utility over the stem
    group: popularity, an intent-match bonus, and Gumbel noise."""
    utilities = np.array([
        config.beta_popularity * math.log1p(q.popularity)
        + config.beta_context * (1.0 if q.cluster == cluster else 0.0)
        for q in group
    ])
    utilities = utilities + rng.gumbel(0.0, config.gumbel_scale, size=len(group))
    return group[int(np.argmax(utilities))]


def generate_sessions(config: SynthConfig) -> tuple[list[dict], list[SynthQuery]]:
    """Sample the full log.  Returns (session records sorted by timestamp,
    vocabulary with ground-truth clusters and popularity)."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    vocabulary = build_vocabulary(rng)
    pools = _prefix_pools(vocabulary)
    groups = _stem_groups(vocabulary)
    stems = sorted(groups)

    head_stems = STEMS[0::2]
    tail_stems = STEMS[1::2]

    records: list[dict] = []
    serial = 0
    for user in range(config.users):
        episodes = 1 + rng.poisson(config.mean_episodes_per_user - 1.0)
        for _ in range(episodes):
            day = int(rng.integers(config.days))
            start = (BASE_TS_MS + day * DAY_MS
                     + int(rng.integers(6 * 3600_000, 22 * 3600_000)))
            cluster = int(rng.integers(len(CLUSTER_WORDS)))
            searches = 2 + rng.poisson(max(config.mean_searches_per_episode - 2.0, 0.0))
            past: list[tuple[str, int]] = []
            ts = start
            for _ in range(searches):
                browsing = (config.browse_rate > 0.0
                            and rng.random() < config.browse_rate)
                if browsing:
                    # Scanners settle for a familiar family flagship.
                    # Most lean mainstream: the head flagship tops the
                    # pooled list, so two renders suffice.  The rest
                    # want a tail flagship parked near the bottom and
                    # hover over it, backspacing and retyping, with
                    # every pause re-rendering the same pooled view.
                    if rng.random() < 0.6:
                        stem = head_stems[int(rng.integers(len(head_stems)))]
                        renders = 2
                    else:
                        stem = tail_stems[int(rng.integers(len(tail_stems)))]
                        renders = 6
                    group = groups[stem]
                    target = group[0]
                    walk = tuple(target.text[:1 + step % 2]
                                 for step in range(renders))
                else:
                    # Straight-through typing: views before the last
                    # keystroke fall inside the render debounce and are
                    # never logged.
                    stem = stems[int(rng.integers(len(stems)))]
                    group = groups[stem]
                    target = _pick_target(group, cluster, config, rng)
                    walk = (target.text[:3],)
                if rng.random() < config.offlist_rate:
                    submitted = f"{stem} custom{int(rng.integers(10))}"
                else:
                    submitted = target.text
                impressions = [
                    {"prefix": prefix,
                     "candidates": [q.text for q in pools[prefix]]}
                    for prefix in walk
                ]
                if rng.random() < config.gmv_zero_rate:
                    gmv = 0.0
                else:
                    gmv = round(float(rng.lognormal(3.0, 0.6)), 2)
                serial += 1
                records.append({
                    "session_id": f"s{serial:06d}",
                    "user_id": f"u{user:04d}",
                    "ts": ts,
                    "past_queries": [[q, t] for q, t in past],
                    "impressions": impressions,
                    "submitted": submitted,
                    "gmv": gmv,
                })
                past.append((submitted, ts))
                ts += int(rng.integers(45_000, 180_000))
    records.sort(key=lambda r: (r["ts"], r["session_id"]))
    return records, vocabulary


def cluster_map(vocabulary: Sequence[SynthQuery]) -> dict[str, int]:
    """Ground-truth cluster per normalized token (spaces -> underscores),
    for checking learned embedding geometry."""
    return {q.text.replace(" ", "_"): q.cluster for q in vocabulary}


def vocabulary_to_dicts(vocabulary: Sequence[SynthQuery]) -> list[dict]:
    return [
        {"text": q.text, "stem": q.stem, "cluster": q.cluster,
         "popularity": q.popularity}
        for q in vocabulary
    ]


def with_seed(config: SynthConfig, seed: int) -> SynthConfig:
    return replace(config, seed=seed)
