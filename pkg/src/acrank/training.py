"""Pairwise training loop: pair featurization, Adam, epoch bookkeeping,
and best-validation-epoch selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .embedding import EmbeddingTable
from .features import ContextState, FeatureLayout, StatsStore, featurize
from .model import (
    PARAM_KEYS,
    FeatureScaler,
    LossConfig,
    NetworkConfig,
    RankerModel,
    _sigmoid,
    _softplus,
    backward,
    delta_ndcg,
    forward,
)
from .sessions import TrainingPair


class TrainingDivergedError(RuntimeError):
    """Loss went non-finite.  Carries the last finite loss and the batch."""

    def __init__(self, batch_id: str, last_finite_loss: float | None):
        self.batch_id = batch_id
        self.last_finite_loss = last_finite_loss
        shown = "none" if last_finite_loss is None else f"{last_finite_loss:.6f}"
        super().__init__(
            f"training diverged at {batch_id} (last finite loss: {shown})")


@dataclass
class PairDataset:
    """Featurized training pairs, one row per pair, branch blocks split.

    ``delta`` holds the rank-gap term for each pair regardless of whether
    the loss will use it; the loss config decides at train time.
    """

    dense_p: np.ndarray
    series_p: np.ndarray
    context_p: np.ndarray
    dense_n: np.ndarray
    series_n: np.ndarray
    context_n: np.ndarray
    delta: np.ndarray
    weight: np.ndarray

    def __len__(self) -> int:
        return self.delta.shape[0]


def build_pair_dataset(
    pairs: Sequence[TrainingPair],
    stats: StatsStore,
    table: EmbeddingTable | None,
    layout: FeatureLayout,
) -> PairDataset:
    """Featurize both branches of every pair against shared stores."""
    if not pairs:
        raise ValueError("no training pairs")
    blocks = {name: [] for name in
              ("dense_p", "series_p", "context_p", "dense_n", "series_n", "context_n")}
    delta = np.empty(len(pairs), dtype=np.float64)
    weight = np.empty(len(pairs), dtype=np.float64)
    for row, pair in enumerate(pairs):
        ctx = ContextState.from_past_queries(pair.context, layout.context_queries)
        for side, query in (("p", pair.positive_query), ("n", pair.negative_query)):
            vec = featurize(query, pair.prefix, stats.get(query), ctx, table, layout)
            blocks[f"dense_{side}"].append(vec.dense)
            blocks[f"series_{side}"].append(vec.series)
            blocks[f"context_{side}"].append(vec.context)
        delta[row] = delta_ndcg(pair.rank_p, pair.rank_n)
        weight[row] = pair.weight
    arrays = {name: np.stack(rows).astype(np.float64) for name, rows in blocks.items()}
    return PairDataset(delta=delta, weight=weight, **arrays)


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 10
    batch_size: int = 256
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must be in [0, 1)")


class Adam:
    """Adam with bias correction, state keyed by parameter name."""

    def __init__(self, params: dict[str, np.ndarray], config: TrainingConfig):
        self.config = config
        self.step_count = 0
        self.first = {name: np.zeros_like(params[name]) for name in PARAM_KEYS}
        self.second = {name: np.zeros_like(params[name]) for name in PARAM_KEYS}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        cfg = self.config
        self.step_count += 1
        correction1 = 1.0 - cfg.beta1 ** self.step_count
        correction2 = 1.0 - cfg.beta2 ** self.step_count
        for name in PARAM_KEYS:
            grad = grads[name]
            self.first[name] = cfg.beta1 * self.first[name] + (1.0 - cfg.beta1) * grad
            self.second[name] = cfg.beta2 * self.second[name] + (1.0 - cfg.beta2) * grad ** 2
            m_hat = self.first[name] / correction1
            v_hat = self.second[name] / correction2
            params[name] -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float | None

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "train_loss": self.train_loss,
                "val_loss": self.val_loss}


@dataclass
class TrainingResult:
    model: RankerModel
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0


def _pair_batch_loss(
    scores_p: np.ndarray,
    scores_n: np.ndarray,
    delta: np.ndarray,
    weight: np.ndarray,
    loss_cfg: LossConfig,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean pair loss over the batch plus score gradients for each branch."""
    margin = scores_p - scores_n
    factor = (delta if loss_cfg.use_delta_ndcg else np.ones_like(delta)) * weight
    losses = _softplus(-margin) * factor
    batch = margin.shape[0]
    # d/d(margin) of softplus(-margin) is -sigmoid(-margin)
    dmargin = -_sigmoid(-margin) * factor / batch
    return float(losses.mean()), dmargin, -dmargin


def _dataset_loss(
    params: dict[str, np.ndarray],
    data: PairDataset,
    scaler: FeatureScaler,
    config: NetworkConfig,
    loss_cfg: LossConfig,
    batch_size: int,
) -> float:
    """Mean pair loss over a whole dataset with dropout disabled."""
    total = 0.0
    for start in range(0, len(data), batch_size):
        sl = slice(start, start + batch_size)
        dense_p, series_p = scaler.transform(data.dense_p[sl], data.series_p[sl])
        dense_n, series_n = scaler.transform(data.dense_n[sl], data.series_n[sl])
        scores_p, _ = forward(params, dense_p, series_p, data.context_p[sl], config)
        scores_n, _ = forward(params, dense_n, series_n, data.context_n[sl], config)
        margin = scores_p - scores_n
        factor = (data.delta[sl] if loss_cfg.use_delta_ndcg
                  else np.ones_like(data.delta[sl])) * data.weight[sl]
        total += float((_softplus(-margin) * factor).sum())
    return total / len(data)


def train(
    train_data: PairDataset,
    layout: FeatureLayout,
    network: NetworkConfig,
    training: TrainingConfig | None = None,
    loss_cfg: LossConfig | None = None,
    val_data: PairDataset | None = None,
    progress: Callable[[EpochRecord], None] | None = None,
) -> TrainingResult:
    """Fit the ranker on featurized pairs.

    Single-threaded and deterministic for a fixed seed: the feature scaler
    comes from the training set, batches reshuffle each epoch from a seeded
    generator, and dropout draws from a second seeded generator.  Returns
    the parameters of the epoch with the lowest validation loss; with no
    validation data the final epoch wins.
    """
    training = training or TrainingConfig()
    loss_cfg = loss_cfg or LossConfig()
    training.validate()
    loss_cfg.validate()
    if len(train_data) == 0:
        raise ValueError("no training pairs")
    if network.ablate_delta_ndcg and loss_cfg.use_delta_ndcg:
        loss_cfg = LossConfig(use_delta_ndcg=False, log_base=loss_cfg.log_base,
                              weight_mode=loss_cfg.weight_mode)

    scaler = FeatureScaler.fit(
        np.vstack([train_data.dense_p, train_data.dense_n]),
        np.vstack([train_data.series_p, train_data.series_n]),
    )
    model = RankerModel.initialize(network, layout, scaler)
    params = model.params
    optimizer = Adam(params, training)
    shuffle_rng = np.random.default_rng([training.seed, 1])
    dropout_rng = np.random.default_rng([training.seed, 2])

    history: list[EpochRecord] = []
    best_epoch = -1
    best_val = None
    best_params = None
    last_finite: float | None = None

    for epoch in range(1, training.epochs + 1):
        order = shuffle_rng.permutation(len(train_data))
        running = 0.0
        for batch_no, start in enumerate(range(0, len(order), training.batch_size)):
            idx = order[start:start + training.batch_size]
            dense_p, series_p = scaler.transform(
                train_data.dense_p[idx], train_data.series_p[idx])
            dense_n, series_n = scaler.transform(
                train_data.dense_n[idx], train_data.series_n[idx])
            scores_p, cache_p = forward(
                params, dense_p, series_p, train_data.context_p[idx], network,
                training=True, rng=dropout_rng)
            scores_n, cache_n = forward(
                params, dense_n, series_n, train_data.context_n[idx], network,
                training=True, rng=dropout_rng)
            loss, dscores_p, dscores_n = _pair_batch_loss(
                scores_p, scores_n, train_data.delta[idx], train_data.weight[idx],
                loss_cfg)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"epoch {epoch} batch {batch_no}", last_finite)
            last_finite = loss
            grads_p = backward(params, cache_p, dscores_p)
            grads_n = backward(params, cache_n, dscores_n)
            # shared towers: both branches write into the same parameters
            grads = {name: grads_p[name] + grads_n[name] for name in PARAM_KEYS}
            optimizer.step(params, grads)
            running += loss * len(idx)
        train_loss = running / len(train_data)
        val_loss = None
        if val_data is not None and len(val_data) > 0:
            val_loss = _dataset_loss(
                params, val_data, scaler, network, loss_cfg, training.batch_size)
        record = EpochRecord(epoch=epoch, train_loss=train_loss, val_loss=val_loss)
        history.append(record)
        if progress is not None:
            progress(record)
        if val_loss is not None and (best_val is None or val_loss < best_val):
            best_val = val_loss
            best_epoch = epoch
            best_params = {name: params[name].copy() for name in PARAM_KEYS}

    if best_params is None:
        # no validation data: final epoch stands
        best_epoch = training.epochs
        best_params = params

    model = RankerModel(
        config=network,
        params=best_params,
        layout=layout,
        scaler=scaler,
        metadata={
            "epochs": training.epochs,
            "best_epoch": best_epoch,
            "seed": training.seed,
            "pair_count": len(train_data),
            "use_delta_ndcg": loss_cfg.use_delta_ndcg,
            "weight_mode": loss_cfg.weight_mode,
            "history": [record.to_dict() for record in history],
        },
    )
    return TrainingResult(model=model, history=history, best_epoch=best_epoch)
