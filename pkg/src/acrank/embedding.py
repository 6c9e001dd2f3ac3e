"""Whole-query embeddings from search-session co-occurrence.

Each normalized query is one atomic token (spaces become underscores), each
sessionized run of queries is one document, and vectors are learned with the
skipgram objective under negative sampling:

    sum_t [ sum_{c in window} l(s(w_t, w_c)) + sum_{n in negatives} l(-s(w_t, n)) ]

with the binary logistic loss l(x) = log(1 + exp(-x)) and score
s(w, c) = u_w . v_c (target and context matrices).  Minimized by SGD with a
linearly decaying learning rate; negatives are drawn from the unigram
distribution raised to a fractional power via an alias-method sampler.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, TextIO

import numpy as np

SESSION_GAP_MS = 600_000  # runs split where consecutive queries are > 10 min apart

_SPECIALS_RE = re.compile(r"[^\w\s-]", re.UNICODE)
_WS_RE = re.compile(r"\s+")


class EmptyQueryError(ValueError):
    """Raised when a query normalizes to the empty string."""


class EmbeddingFormatError(ValueError):
    """A malformed embedding file."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


def normalize_query(raw: str) -> str:
    """Query -> token: lowercase, special characters removed, whitespace
    collapsed, spaces replaced by underscores.

    Raises EmptyQueryError when nothing survives; callers drop such queries.
    """
    text = _SPECIALS_RE.sub("", raw.lower())
    text = _WS_RE.sub(" ", text).strip()
    if not text:
        raise EmptyQueryError(f"query {raw!r} is empty after normalization")
    return text.replace(" ", "_")


def _normalize_or_none(raw: str) -> str | None:
    try:
        return normalize_query(raw)
    except EmptyQueryError:
        return None


def sessionize(events: Sequence[tuple[str, int]], gap_ms: int = SESSION_GAP_MS) -> list[list[str]]:
    """Split a time-ordered (query, epoch ms) stream into co-occurrence runs.

    A new run starts where the gap to the previous event exceeds ``gap_ms``
    (strictly greater; a gap of exactly 10 minutes does not split).  Queries
    are normalized; empty-after-normalization queries and single-query runs
    are dropped, since they carry no co-occurrence signal.
    """
    runs: list[list[str]] = []
    current: list[str] = []
    previous_ts: int | None = None
    for query, ts in events:
        if previous_ts is not None and ts - previous_ts > gap_ms:
            runs.append(current)
            current = []
        token = _normalize_or_none(query)
        if token is not None:
            current.append(token)
        previous_ts = ts
    runs.append(current)
    return [run for run in runs if len(run) >= 2]


@dataclass
class Corpus:
    """Token-indexed documents plus the vocabulary used for sampling."""

    documents: list[np.ndarray]  # int32 token index arrays
    tokens: list[str]  # index -> token
    counts: np.ndarray  # index -> corpus frequency

    @property
    def vocab(self) -> dict[str, int]:
        return {token: i for i, token in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)


def build_corpus(sequences: Iterable[Sequence[str]], min_count: int = 2) -> Corpus:
    """Count tokens, drop those below ``min_count``, and index the documents.

    Documents shrinking below two tokens after filtering are discarded.
    Vocabulary order is (frequency desc, token asc) so corpora built from the
    same data are identical regardless of input ordering quirks.
    """
    frequency: dict[str, int] = {}
    kept_sequences = []
    for seq in sequences:
        kept_sequences.append(list(seq))
        for token in seq:
            frequency[token] = frequency.get(token, 0) + 1
    tokens = sorted(
        (t for t, n in frequency.items() if n >= min_count),
        key=lambda t: (-frequency[t], t),
    )
    index = {t: i for i, t in enumerate(tokens)}
    documents = []
    for seq in kept_sequences:
        ids = [index[t] for t in seq if t in index]
        if len(ids) >= 2:
            documents.append(np.asarray(ids, dtype=np.int32))
    counts = np.asarray([frequency[t] for t in tokens], dtype=np.float64)
    return Corpus(documents=documents, tokens=tokens, counts=counts)


@dataclass
class SkipgramConfig:
    dim: int = 50
    window: int = 5  # context radius; per-position radius is sampled in [1, window]
    negatives: int = 5  # negative draws per (target, context) pair
    epochs: int = 5
    initial_lr: float = 0.05
    min_count: int = 2
    unigram_power: float = 0.75
    seed: int = 0
    workers: int = 1

    def validate(self) -> None:
        if min(self.dim, self.window, self.negatives, self.epochs) <= 0:
            raise ValueError("dim, window, negatives and epochs must be positive")
        if not 0.0 < self.unigram_power <= 1.0:
            raise ValueError("unigram_power must be in (0, 1]")
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be positive")


@dataclass
class EmbeddingTable:
    """Learned vectors.  ``target`` rows are the embeddings used downstream;
    ``context`` rows are the output-side matrix kept for resumed training."""

    dim: int
    tokens: list[str]
    target: np.ndarray  # (|V|, dim)
    context: np.ndarray  # (|V|, dim)
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.target.shape != self.context.shape:
            raise ValueError("target and context matrices must have one shape")
        if self.target.shape != (len(self.tokens), self.dim):
            raise ValueError("matrix shape does not match vocabulary/dim")
        if not self._index:
            self._index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def vector(self, token: str) -> np.ndarray | None:
        """Target vector for a token, or None when out of vocabulary."""
        i = self._index.get(token)
        return None if i is None else self.target[i]

    def vector_for_query(self, raw_query: str) -> np.ndarray | None:
        token = _normalize_or_none(raw_query)
        return None if token is None else self.vector(token)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    value, _ = cosine_flagged(a, b)
    return value


def cosine_flagged(a: np.ndarray, b: np.ndarray) -> tuple[float, bool]:
    """Cosine similarity and a defined-ness flag.

    An all-zero vector (the out-of-vocabulary stand-in) makes the similarity
    undefined; that yields (0.0, False) rather than an error so a serving
    request never dies on a cold query.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0, False
    return float(np.dot(a, b) / (norm_a * norm_b)), True


class AliasSampler:
    """O(1) categorical sampling (Walker's alias method)."""

    def __init__(self, weights: np.ndarray):
        weights = np.asarray(weights, dtype=np.float64)
        if weights.ndim != 1 or len(weights) == 0 or np.any(weights < 0):
            raise ValueError("weights must be a nonempty nonnegative vector")
        total = weights.sum()
        if total <= 0:
            raise ValueError("weights must not all be zero")
        n = len(weights)
        scaled = weights * (n / total)
        self.prob = np.zeros(n, dtype=np.float64)
        self.alias = np.zeros(n, dtype=np.int64)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            l = large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = l
            scaled[l] = scaled[l] - (1.0 - scaled[s])
            (small if scaled[l] < 1.0 else large).append(l)
        for i in large + small:
            self.prob[i] = 1.0

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        slots = rng.integers(0, len(self.prob), size=size)
        accept = rng.random(size) < self.prob[slots]
        return np.where(accept, slots, self.alias[slots])


def logistic_loss(x: np.ndarray | float) -> np.ndarray | float:
    """l(x) = log(1 + exp(-x)), computed stably for any magnitude."""
    x = np.asarray(x, dtype=np.float64)
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(-x, 0.0)


def logistic_loss_grad(x: np.ndarray | float) -> np.ndarray | float:
    """dl/dx = -sigmoid(-x)."""
    return -_sigmoid(-np.asarray(x, dtype=np.float64))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _train_shard(
    documents: Sequence[np.ndarray],
    target: np.ndarray,
    context: np.ndarray,
    sampler: AliasSampler,
    config: SkipgramConfig,
    rng: np.random.Generator,
    lr_schedule: Callable[[], float],
    loss_accumulator: list[float],
) -> None:
    negatives = config.negatives
    for doc in documents:
        n = len(doc)
        radii = rng.integers(1, config.window + 1, size=n)
        for t in range(n):
            lr = lr_schedule()
            center = int(doc[t])
            radius = int(radii[t])
            lo = max(0, t - radius)
            hi = min(n, t + radius + 1)
            context_ids = [int(doc[j]) for j in range(lo, hi) if j != t]
            if not context_ids:
                continue
            u = target[center]
            u_grad = np.zeros_like(u)
            for ctx_id in context_ids:
                draws = sampler.draw(rng, negatives)
                draws = draws[draws != center]
                rows = np.concatenate(([ctx_id], draws))
                labels = np.zeros(len(rows))
                labels[0] = 1.0
                vectors = context[rows]
                scores = vectors @ u
                # label 1: dl/ds = -sigmoid(-s); label 0 (loss l(-s)): +sigmoid(s)
                g = labels - _sigmoid(scores)
                loss_accumulator[0] += float(
                    logistic_loss(scores[0]) + np.sum(logistic_loss(-scores[1:]))
                )
                loss_accumulator[1] += len(rows)
                u_grad += g @ vectors
                context[rows] += lr * np.outer(g, u)
            target[center] = u + lr * u_grad


def train_skipgram(
    corpus: Corpus,
    config: SkipgramConfig,
    epoch_callback: Callable[[int, float], None] | None = None,
) -> EmbeddingTable:
    """Learn an EmbeddingTable by SGD on the negative-sampling objective.

    Deterministic for ``workers=1`` and a fixed seed.  With ``workers>1``
    document shards are trained by lock-free threads whose updates may race
    benignly; quality contracts still hold but bit-level determinism does not.
    ``epoch_callback(epoch, mean_loss)`` observes the smoothed training curve.
    """
    config.validate()
    if len(corpus) == 0 or not corpus.documents:
        raise ValueError("empty corpus")

    rng = np.random.default_rng(config.seed)
    target = rng.uniform(-0.5 / config.dim, 0.5 / config.dim, size=(len(corpus), config.dim))
    context = np.zeros((len(corpus), config.dim), dtype=np.float64)
    sampler = AliasSampler(corpus.counts**config.unigram_power)

    total_steps = config.epochs * sum(len(doc) for doc in corpus.documents)
    floor = config.initial_lr * 1e-4
    step_box = [0]
    lock = threading.Lock()

    def lr_schedule() -> float:
        with lock:
            step = step_box[0]
            step_box[0] += 1
        return max(floor, config.initial_lr * (1.0 - step / total_steps))

    for epoch in range(config.epochs):
        loss_accumulator = [0.0, 0]  # summed loss, term count
        if config.workers <= 1:
            _train_shard(
                corpus.documents, target, context, sampler, config, rng, lr_schedule, loss_accumulator
            )
        else:
            shards = [corpus.documents[i :: config.workers] for i in range(config.workers)]
            shard_rngs = [np.random.default_rng((config.seed, epoch, i)) for i in range(len(shards))]
            accumulators = [[0.0, 0] for _ in shards]
            threads = [
                threading.Thread(
                    target=_train_shard,
                    args=(shard, target, context, sampler, config, shard_rng, lr_schedule, acc),
                )
                for shard, shard_rng, acc in zip(shards, shard_rngs, accumulators)
            ]
            for thread in threads:
                thread.start()
            for thread in threads:
                thread.join()
            loss_accumulator[0] = sum(acc[0] for acc in accumulators)
            loss_accumulator[1] = sum(acc[1] for acc in accumulators)
        if epoch_callback is not None:
            mean_loss = loss_accumulator[0] / max(1, loss_accumulator[1])
            epoch_callback(epoch, mean_loss)

    if not np.all(np.isfinite(target)) or not np.all(np.isfinite(context)):
        raise ArithmeticError("non-finite embedding values after training")
    return EmbeddingTable(dim=config.dim, tokens=list(corpus.tokens), target=target, context=context)


def save_embeddings(table: EmbeddingTable, stream: TextIO, include_context: bool = False) -> None:
    """Write the word2vec-style text format: a "count dim" header, then one
    line per token with ``dim`` floats.  With ``include_context`` a second
    identically-shaped block for the context matrix follows.

    Floats are written with repr so a load reproduces them bit-exactly.
    """

    def write_block(matrix: np.ndarray) -> None:
        stream.write(f"{len(table.tokens)} {table.dim}\n")
        for token, row in zip(table.tokens, matrix):
            stream.write(token + " " + " ".join(repr(float(x)) for x in row) + "\n")

    write_block(table.target)
    if include_context:
        write_block(table.context)


def load_embeddings(stream: TextIO) -> EmbeddingTable:
    """Inverse of save_embeddings; raises EmbeddingFormatError with the
    offending line number on arity mismatches or non-finite values."""
    lines = stream.read().splitlines()

    def read_block(start: int) -> tuple[list[str], np.ndarray, int, int]:
        if start >= len(lines):
            raise EmbeddingFormatError(start + 1, "missing header")
        header = lines[start].split()
        if len(header) != 2:
            raise EmbeddingFormatError(start + 1, "header must be 'count dim'")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError as exc:
            raise EmbeddingFormatError(start + 1, "header must be two integers") from exc
        if count < 0 or dim <= 0:
            raise EmbeddingFormatError(start + 1, "count must be >= 0 and dim > 0")
        tokens = []
        rows = np.zeros((count, dim), dtype=np.float64)
        for i in range(count):
            line_no = start + 2 + i
            if start + 1 + i >= len(lines):
                raise EmbeddingFormatError(line_no, "row count mismatch: file ends early")
            parts = lines[start + 1 + i].split()
            if len(parts) != dim + 1:
                raise EmbeddingFormatError(line_no, f"expected token + {dim} floats")
            tokens.append(parts[0])
            try:
                rows[i] = [float(x) for x in parts[1:]]
            except ValueError as exc:
                raise EmbeddingFormatError(line_no, "malformed float") from exc
            if not np.all(np.isfinite(rows[i])):
                raise EmbeddingFormatError(line_no, "non-finite value")
        return tokens, rows, dim, start + 1 + count

    tokens, target, dim, next_line = read_block(0)
    if next_line < len(lines) and lines[next_line].strip():
        ctx_tokens, context, ctx_dim, end = read_block(next_line)
        if ctx_tokens != tokens or ctx_dim != dim:
            raise EmbeddingFormatError(next_line + 1, "context block does not match target block")
        trailing = end
    else:
        context = np.zeros_like(target)
        trailing = next_line
    for extra in range(trailing, len(lines)):
        if lines[extra].strip():
            raise EmbeddingFormatError(extra + 1, "row count mismatch: trailing data")
    return EmbeddingTable(dim=dim, tokens=tokens, target=target, context=context)
