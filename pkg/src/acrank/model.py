"""Siamese pairwise ranker: shared-weight scoring towers over the three
feature blocks, trained on (positive, negative) pairs.

One network scores a single candidate; a training pair runs the same
parameters over both members, so "positive branch" and "negative branch"
are the same storage by construction.  Architecture:

    dense block   -> ReLU layer (query representation)
    series block  -> LSTM over the daily series, final hidden state
    context block -> ReLU layer (context representation)
    concat(all 3) -> ReLU merge layer -> linear scalar score

All math is plain numpy in float64.  `forward` keeps a cache so that
`backward` can produce exact analytic gradients; correctness is pinned by
finite-difference tests rather than an autograd dependency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .features import (
    DENSE_DECAYED_POPULARITY,
    ContextState,
    FeatureLayout,
    FeatureVector,
    StatsStore,
    featurize,
)
from .ranking import RankedList, order_candidates

LOG_BASE = 2

# Parameter names in canonical order.  Everything that iterates parameters
# (init, optimizer state, checkpoint layout, gradient checks) walks this
# tuple so the order is identical everywhere.
PARAM_KEYS = (
    "query_w",
    "query_b",
    "lstm_wx",
    "lstm_wh",
    "lstm_b",
    "ctx_w",
    "ctx_b",
    "merge1_w",
    "merge1_b",
    "merge2_w",
    "merge2_b",
)


@dataclass(frozen=True)
class NetworkConfig:
    """Shapes and switches for the scoring network."""

    dense_len: int
    series_len: int
    context_len: int
    query_repr_units: int = 128
    lstm_units: int = 16
    context_repr_units: int = 128
    merge_units: int = 64
    dropout_rate: float = 0.1
    seed: int = 0
    ablate_delta_ndcg: bool = False
    ablate_context: bool = False

    def validate(self) -> None:
        for name in ("dense_len", "series_len", "context_len", "query_repr_units",
                     "lstm_units", "context_repr_units", "merge_units"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "dense_len": self.dense_len,
            "series_len": self.series_len,
            "context_len": self.context_len,
            "query_repr_units": self.query_repr_units,
            "lstm_units": self.lstm_units,
            "context_repr_units": self.context_repr_units,
            "merge_units": self.merge_units,
            "dropout_rate": self.dropout_rate,
            "seed": self.seed,
            "ablate_delta_ndcg": self.ablate_delta_ndcg,
            "ablate_context": self.ablate_context,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "NetworkConfig":
        cfg = cls(**payload)
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class LossConfig:
    """Pairwise loss switches.

    ``use_delta_ndcg`` multiplies each pair's loss by the rank-gap term;
    turning it off trains the plain pairwise variant.  The logarithm base
    is fixed at 2 and shared with the evaluation metrics.
    """

    use_delta_ndcg: bool = True
    log_base: int = LOG_BASE
    weight_mode: str = "log1p_gmv"

    def validate(self) -> None:
        if self.log_base != 2:
            raise ValueError("log_base is fixed at 2")


def _sigmoid(x: np.ndarray | float) -> np.ndarray | float:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def _softplus(x: np.ndarray | float) -> np.ndarray | float:
    # log(1 + e^x) without overflow for large |x|.
    x = np.asarray(x, dtype=np.float64)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    if out.ndim == 0:
        return float(out)
    return out


def delta_ndcg(rank_p: int, rank_n: int) -> float:
    """Absolute gain gap between two display positions, log base 2."""
    if rank_p < 1 or rank_n < 1:
        raise ValueError("ranks are 1-based and must be >= 1")
    if rank_p == rank_n:
        raise ValueError("degenerate pair: rank_p == rank_n")
    return abs(1.0 / math.log2(rank_p + 1) - 1.0 / math.log2(rank_n + 1))


def pair_probability(f_p: float, f_n: float) -> float:
    """Probability that the positive member outranks the negative one."""
    return float(_sigmoid(float(f_p) - float(f_n)))


def pair_loss(
    f_p: float,
    f_n: float,
    rank_p: int,
    rank_n: int,
    weight: float,
    cfg: LossConfig | None = None,
) -> float:
    """Per-pair loss: -log sigma(f_p - f_n), scaled by the rank-gap term
    (when enabled) and the pair weight.  Nonnegative, strictly decreasing
    in the score margin."""
    cfg = cfg or LossConfig()
    cfg.validate()
    if weight < 0:
        raise ValueError("weight must be >= 0")
    margin = float(f_p) - float(f_n)
    base = float(_softplus(-margin))
    delta = delta_ndcg(rank_p, rank_n) if cfg.use_delta_ndcg else 1.0
    return base * delta * weight


def init_params(cfg: NetworkConfig) -> dict[str, np.ndarray]:
    """Seeded uniform init, +-sqrt(6/(fan_in+fan_out)) per weight matrix.

    Biases start at zero except the forget-gate slice of the recurrent
    bias, which starts at 1 so early gradients flow through the series.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    u = cfg.lstm_units

    def glorot(fan_in: int, fan_out: int, shape: tuple[int, ...]) -> np.ndarray:
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape).astype(np.float64)

    merge_in = cfg.query_repr_units + u + cfg.context_repr_units
    params = {
        "query_w": glorot(cfg.dense_len, cfg.query_repr_units,
                          (cfg.dense_len, cfg.query_repr_units)),
        "query_b": np.zeros(cfg.query_repr_units, dtype=np.float64),
        "lstm_wx": glorot(1, 4 * u, (1, 4 * u)),
        "lstm_wh": glorot(u, 4 * u, (u, 4 * u)),
        "lstm_b": np.zeros(4 * u, dtype=np.float64),
        "ctx_w": glorot(cfg.context_len, cfg.context_repr_units,
                        (cfg.context_len, cfg.context_repr_units)),
        "ctx_b": np.zeros(cfg.context_repr_units, dtype=np.float64),
        "merge1_w": glorot(merge_in, cfg.merge_units, (merge_in, cfg.merge_units)),
        "merge1_b": np.zeros(cfg.merge_units, dtype=np.float64),
        "merge2_w": glorot(cfg.merge_units, 1, (cfg.merge_units, 1)),
        "merge2_b": np.zeros(1, dtype=np.float64),
    }
    params["lstm_b"][u:2 * u] = 1.0
    return params


def check_params(params: dict[str, np.ndarray], cfg: NetworkConfig) -> None:
    u = cfg.lstm_units
    merge_in = cfg.query_repr_units + u + cfg.context_repr_units
    expected = {
        "query_w": (cfg.dense_len, cfg.query_repr_units),
        "query_b": (cfg.query_repr_units,),
        "lstm_wx": (1, 4 * u),
        "lstm_wh": (u, 4 * u),
        "lstm_b": (4 * u,),
        "ctx_w": (cfg.context_len, cfg.context_repr_units),
        "ctx_b": (cfg.context_repr_units,),
        "merge1_w": (merge_in, cfg.merge_units),
        "merge1_b": (cfg.merge_units,),
        "merge2_w": (cfg.merge_units, 1),
        "merge2_b": (1,),
    }
    if set(params) != set(expected):
        raise ValueError("parameter set does not match config")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ValueError(
                f"parameter {name} has shape {params[name].shape}, expected {shape}")
        if not np.all(np.isfinite(params[name])):
            raise ValueError(f"parameter {name} contains non-finite values")


def _lstm_forward(
    series: np.ndarray,
    wx: np.ndarray,
    wh: np.ndarray,
    b: np.ndarray,
) -> tuple[np.ndarray, list[dict]]:
    """Run the recurrent cell over (B, T) inputs, one scalar per step.

    Gate layout inside the fused (B, 4U) preactivation is [input, forget,
    candidate, output]; the candidate slice takes tanh and the rest take
    the logistic function.  Returns the final hidden state (B, U) and the
    per-step caches needed for backprop.
    """
    batch, steps = series.shape
    u = wh.shape[0]
    h = np.zeros((batch, u), dtype=np.float64)
    c = np.zeros((batch, u), dtype=np.float64)
    caches: list[dict] = []
    for t in range(steps):
        x = series[:, t:t + 1]
        pre = x @ wx + h @ wh + b
        i = _sigmoid(pre[:, :u])
        f = _sigmoid(pre[:, u:2 * u])
        g = np.tanh(pre[:, 2 * u:3 * u])
        o = _sigmoid(pre[:, 3 * u:])
        c_new = f * c + i * g
        tanh_c = np.tanh(c_new)
        h_new = o * tanh_c
        caches.append({
            "x": x, "h_prev": h, "c_prev": c,
            "i": i, "f": f, "g": g, "o": o,
            "c": c_new, "tanh_c": tanh_c,
        })
        h, c = h_new, c_new
    return h, caches


def _lstm_backward(
    dh_last: np.ndarray,
    caches: list[dict],
    wx: np.ndarray,
    wh: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backprop through time given the gradient at the final hidden state."""
    u = wh.shape[0]
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * u, dtype=np.float64)
    dh = dh_last
    dc = np.zeros_like(dh_last)
    for cache in reversed(caches):
        i, f, g, o = cache["i"], cache["f"], cache["g"], cache["o"]
        tanh_c = cache["tanh_c"]
        do = dh * tanh_c
        dc = dc + dh * o * (1.0 - tanh_c ** 2)
        di = dc * g
        dg = dc * i
        df = dc * cache["c_prev"]
        dc_prev = dc * f
        dpre = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g ** 2),
            do * o * (1.0 - o),
        ], axis=1)
        dwx += cache["x"].T @ dpre
        dwh += cache["h_prev"].T @ dpre
        db += dpre.sum(axis=0)
        dh = dpre @ wh.T
        dc = dc_prev
    return dwx, dwh, db


def forward(
    params: dict[str, np.ndarray],
    dense: np.ndarray,
    series: np.ndarray,
    context: np.ndarray,
    cfg: NetworkConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, dict]:
    """Score a batch.  Returns (scores (B,), cache for backward).

    With ``training=True`` inverted dropout masks the three branch
    representations (draw order: query, series, context) so inference
    needs no rescaling; with ``training=False`` the pass is deterministic.
    """
    dense = np.asarray(dense, dtype=np.float64)
    series = np.asarray(series, dtype=np.float64)
    context = np.asarray(context, dtype=np.float64)
    if dense.ndim != 2 or series.ndim != 2 or context.ndim != 2:
        raise ValueError("forward expects batched 2-d inputs")
    if (dense.shape[1] != cfg.dense_len or series.shape[1] != cfg.series_len
            or context.shape[1] != cfg.context_len):
        raise ValueError(
            "feature layout mismatch: got blocks "
            f"({dense.shape[1]}, {series.shape[1]}, {context.shape[1]}), config wants "
            f"({cfg.dense_len}, {cfg.series_len}, {cfg.context_len})")
    if training and cfg.dropout_rate > 0.0 and rng is None:
        raise ValueError("training-mode forward with dropout needs an rng")

    ctx_in = np.zeros_like(context) if cfg.ablate_context else context

    def drop_mask(shape: tuple[int, ...]) -> np.ndarray | None:
        if not training or cfg.dropout_rate == 0.0:
            return None
        keep = 1.0 - cfg.dropout_rate
        return (rng.random(shape) < keep).astype(np.float64) / keep

    q_pre = dense @ params["query_w"] + params["query_b"]
    q = np.maximum(q_pre, 0.0)
    q_mask = drop_mask(q.shape)
    q_out = q if q_mask is None else q * q_mask

    h_last, lstm_caches = _lstm_forward(
        series, params["lstm_wx"], params["lstm_wh"], params["lstm_b"])
    h_mask = drop_mask(h_last.shape)
    h_out = h_last if h_mask is None else h_last * h_mask

    c_pre = ctx_in @ params["ctx_w"] + params["ctx_b"]
    c_repr = np.maximum(c_pre, 0.0)
    c_mask = drop_mask(c_repr.shape)
    c_out = c_repr if c_mask is None else c_repr * c_mask

    z = np.concatenate([q_out, h_out, c_out], axis=1)
    m_pre = z @ params["merge1_w"] + params["merge1_b"]
    m = np.maximum(m_pre, 0.0)
    scores = (m @ params["merge2_w"] + params["merge2_b"])[:, 0]

    cache = {
        "dense": dense, "ctx_in": ctx_in,
        "q_pre": q_pre, "q_mask": q_mask, "q_out": q_out,
        "lstm_caches": lstm_caches, "h_mask": h_mask,
        "c_pre": c_pre, "c_mask": c_mask,
        "z": z, "m_pre": m_pre, "m": m,
        "cfg": cfg,
    }
    return scores, cache


def backward(
    params: dict[str, np.ndarray],
    cache: dict,
    dscores: np.ndarray,
) -> dict[str, np.ndarray]:
    """Gradients of sum(dscores * scores) w.r.t. every parameter.

    Callers fold loss scaling (pair weights, rank-gap terms, the batch
    mean) into ``dscores``; for a shared-weight pair, run backward once
    per branch and add the two gradient sets.
    """
    cfg: NetworkConfig = cache["cfg"]
    u = cfg.lstm_units
    q_units = cfg.query_repr_units
    dscores = np.asarray(dscores, dtype=np.float64)

    dm = dscores[:, None] @ params["merge2_w"].T
    dmerge2_w = cache["m"].T @ dscores[:, None]
    dmerge2_b = np.array([dscores.sum()], dtype=np.float64)
    dm_pre = dm * (cache["m_pre"] > 0.0)
    dmerge1_w = cache["z"].T @ dm_pre
    dmerge1_b = dm_pre.sum(axis=0)
    dz = dm_pre @ params["merge1_w"].T

    dq_out = dz[:, :q_units]
    dh_out = dz[:, q_units:q_units + u]
    dc_out = dz[:, q_units + u:]

    if cache["q_mask"] is not None:
        dq_out = dq_out * cache["q_mask"]
    dq_pre = dq_out * (cache["q_pre"] > 0.0)
    dquery_w = cache["dense"].T @ dq_pre
    dquery_b = dq_pre.sum(axis=0)

    if cache["h_mask"] is not None:
        dh_out = dh_out * cache["h_mask"]
    dlstm_wx, dlstm_wh, dlstm_b = _lstm_backward(
        dh_out, cache["lstm_caches"], params["lstm_wx"], params["lstm_wh"])

    if cache["c_mask"] is not None:
        dc_out = dc_out * cache["c_mask"]
    dc_pre = dc_out * (cache["c_pre"] > 0.0)
    dctx_w = cache["ctx_in"].T @ dc_pre
    dctx_b = dc_pre.sum(axis=0)

    return {
        "query_w": dquery_w, "query_b": dquery_b,
        "lstm_wx": dlstm_wx, "lstm_wh": dlstm_wh, "lstm_b": dlstm_b,
        "ctx_w": dctx_w, "ctx_b": dctx_b,
        "merge1_w": dmerge1_w, "merge1_b": dmerge1_b,
        "merge2_w": dmerge2_w, "merge2_b": dmerge2_b,
    }


@dataclass
class FeatureScaler:
    """Standardization fitted on training features and frozen thereafter.

    Dense columns are standardized per column; the daily series uses one
    global mean/std (the columns are the same quantity at different lags);
    the context block passes through untouched (cosines are already in
    [-1, 1] and the flags are indicators).  Columns with zero variance
    pass through centred only.
    """

    dense_mean: np.ndarray
    dense_std: np.ndarray
    series_mean: float
    series_std: float

    @classmethod
    def identity(cls, layout: FeatureLayout) -> "FeatureScaler":
        return cls(
            dense_mean=np.zeros(layout.dense_len, dtype=np.float64),
            dense_std=np.ones(layout.dense_len, dtype=np.float64),
            series_mean=0.0,
            series_std=1.0,
        )

    @classmethod
    def fit(cls, dense: np.ndarray, series: np.ndarray) -> "FeatureScaler":
        dense = np.asarray(dense, dtype=np.float64)
        series = np.asarray(series, dtype=np.float64)
        dense_std = dense.std(axis=0)
        dense_std[dense_std == 0.0] = 1.0
        series_std = float(series.std())
        if series_std == 0.0:
            series_std = 1.0
        return cls(
            dense_mean=dense.mean(axis=0),
            dense_std=dense_std,
            series_mean=float(series.mean()),
            series_std=series_std,
        )

    def transform(
        self, dense: np.ndarray, series: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        dense = (np.asarray(dense, dtype=np.float64) - self.dense_mean) / self.dense_std
        series = (np.asarray(series, dtype=np.float64) - self.series_mean) / self.series_std
        return dense, series

    def to_dict(self) -> dict:
        return {
            "dense_mean": [float(v) for v in self.dense_mean],
            "dense_std": [float(v) for v in self.dense_std],
            "series_mean": self.series_mean,
            "series_std": self.series_std,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "FeatureScaler":
        return cls(
            dense_mean=np.asarray(payload["dense_mean"], dtype=np.float64),
            dense_std=np.asarray(payload["dense_std"], dtype=np.float64),
            series_mean=float(payload["series_mean"]),
            series_std=float(payload["series_std"]),
        )


def stack_vectors(
    vectors: Sequence[FeatureVector], layout: FeatureLayout
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack per-candidate features into batched blocks, checking shapes."""
    if not vectors:
        raise ValueError("empty feature batch")
    for vec in vectors:
        if (len(vec.dense) != layout.dense_len or len(vec.series) != layout.series_len
                or len(vec.context) != layout.context_len):
            raise ValueError(
                "feature layout mismatch: vector blocks "
                f"({len(vec.dense)}, {len(vec.series)}, {len(vec.context)}) vs layout "
                f"({layout.dense_len}, {layout.series_len}, {layout.context_len})")
    dense = np.stack([vec.dense for vec in vectors]).astype(np.float64)
    series = np.stack([vec.series for vec in vectors]).astype(np.float64)
    context = np.stack([vec.context for vec in vectors]).astype(np.float64)
    return dense, series, context


@dataclass
class RankerModel:
    """A trained (or freshly initialized) scoring network plus everything
    inference needs: the feature layout it was trained against and the
    feature scaler fitted on its training set.
    """

    config: NetworkConfig
    params: dict[str, np.ndarray]
    layout: FeatureLayout
    scaler: FeatureScaler
    metadata: dict = field(default_factory=dict)
    ranker_id: str = "deeppltr"

    @classmethod
    def initialize(
        cls,
        config: NetworkConfig,
        layout: FeatureLayout,
        scaler: FeatureScaler | None = None,
    ) -> "RankerModel":
        config.validate()
        if (config.dense_len, config.series_len, config.context_len) != (
                layout.dense_len, layout.series_len, layout.context_len):
            raise ValueError("network config disagrees with feature layout")
        return cls(
            config=config,
            params=init_params(config),
            layout=layout,
            scaler=scaler or FeatureScaler.identity(layout),
            metadata={},
        )

    def score_features(self, vectors: Sequence[FeatureVector]) -> np.ndarray:
        """Deterministic inference scores for a batch of feature vectors."""
        dense, series, context = stack_vectors(vectors, self.layout)
        dense, series = self.scaler.transform(dense, series)
        scores, _ = forward(self.params, dense, series, context, self.config,
                            training=False)
        return scores

    def score_candidates(
        self, candidates: Sequence[str], vectors: Sequence[FeatureVector]
    ) -> RankedList:
        """Rank candidates best-first.  Ties break by decayed popularity
        (descending), then lexicographically, so the result is a total
        order independent of input order."""
        if len(candidates) != len(vectors):
            raise ValueError("candidates and vectors must have equal length")
        scores = self.score_features(vectors)
        popularity = [float(vec.dense[DENSE_DECAYED_POPULARITY]) for vec in vectors]
        return order_candidates(candidates, scores.tolist(), popularity)

    def with_metadata(self, **entries) -> "RankerModel":
        merged = dict(self.metadata)
        merged.update(entries)
        return replace(self, metadata=merged)


@dataclass(frozen=True)
class ModelRanker:
    """Ranker-protocol adapter: featurizes candidates against shared
    stores, then scores with a trained model.  Immutable and safe for
    concurrent use."""

    model: RankerModel
    stats: StatsStore
    table: object | None = None  # EmbeddingTable, untyped to avoid a cycle

    @property
    def ranker_id(self) -> str:
        return self.model.ranker_id

    def rank(
        self, prefix: str, candidates: Sequence[str], ctx: ContextState
    ) -> RankedList:
        layout = self.model.layout
        vectors = [
            featurize(candidate, prefix, self.stats.get(candidate), ctx,
                      self.table, layout)
            for candidate in candidates
        ]
        return self.model.score_candidates(list(candidates), vectors)
