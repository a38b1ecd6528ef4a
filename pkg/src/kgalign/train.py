"""Stochastic Siamese GNN training with the normalized hard-sample-mining loss."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from . import autograd as ag
from .autograd import Adam, Tensor
from .gnn import GCNEncoder, NeighborSampler, SampledBlock, mean_aggregation_matrix
from .kg import AlignmentSet, KnowledgeGraph, WeightedAdjacency, build_weighted_adjacency

log = logging.getLogger(__name__)


class DegenerateBatchError(ValueError):
    """A z-score was requested over values with zero spread."""


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    dim: int = 128
    layers: int = 2
    fanout: int = 8
    n_pos: int = 2000
    n_neg: int = 4000
    gamma: float = 1.0
    lam: float = 3.0
    epochs: int = 50
    lr: float = 0.005
    activation: str = "tanh"
    residual: bool = False
    output: str = "last"
    rng_seed: int = 0

    def __post_init__(self):
        if self.fanout < 1:
            raise ValueError("fanout must be >= 1")
        if self.n_pos < 1:
            raise ValueError("n_pos must be >= 1")
        if self.n_neg < 0:
            raise ValueError("n_neg must be >= 0")
        if self.lam <= 0:
            raise ValueError("lambda must be > 0")
        if self.dim < 1 or self.layers < 1 or self.epochs < 0:
            raise ValueError("dim and layers must be positive, epochs non-negative")
        if self.activation not in ag.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class EmbeddingMatrix:
    """Rows 0..num_source-1 are source entities, the rest target entities."""

    data: np.ndarray
    num_source: int
    num_target: int
    history: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.data.shape[0] != self.num_source + self.num_target:
            raise ValueError("row count must equal |E_s| + |E_t|")

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def source(self) -> np.ndarray:
        return self.data[: self.num_source]

    @property
    def target(self) -> np.ndarray:
        return self.data[self.num_source:]

    def normalized(self) -> "EmbeddingMatrix":
        norms = np.linalg.norm(self.data, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        return EmbeddingMatrix((self.data / norms).astype(self.data.dtype), self.num_source, self.num_target)


@dataclass
class TrainingBatch:
    pos_source: np.ndarray
    pos_target: np.ndarray
    neg_source: np.ndarray
    neg_target: np.ndarray

    @property
    def batch_source(self) -> np.ndarray:
        return np.concatenate([self.pos_source, self.neg_source])

    @property
    def batch_target(self) -> np.ndarray:
        return np.concatenate([self.pos_target, self.neg_target])


def _negatives(n: int, exclude: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    mask = np.ones(n, dtype=bool)
    mask[exclude] = False
    pool = np.flatnonzero(mask)
    k = min(k, len(pool))
    if k == 0:
        return np.empty(0, dtype=np.int64)
    return rng.choice(pool, size=k, replace=False)


def sample_training_batch(seed: AlignmentSet, num_source: int, num_target: int, n_pos: int,
                          n_neg: int, rng: np.random.Generator,
                          pair_index: np.ndarray | None = None) -> TrainingBatch:
    """Draw ``n_pos`` seed pairs and up to ``n_neg`` non-positive entities per side.

    ``pair_index`` fixes which seed pairs form the positives (epoch iteration
    uses a permutation); otherwise they are drawn uniformly.
    """
    if pair_index is None:
        if n_pos > len(seed):
            raise ValueError(f"n_pos={n_pos} exceeds the {len(seed)} available seed pairs")
        pair_index = rng.choice(len(seed), size=n_pos, replace=False)
    pairs = seed.pairs[pair_index]
    ps, pt = pairs[:, 0], pairs[:, 1]
    return TrainingBatch(ps, pt, _negatives(num_source, ps, n_neg, rng), _negatives(num_target, pt, n_neg, rng))


def _zscore(x: Tensor, detach_stats: bool, axis: int = 1) -> Tensor:
    mu = x.data.mean(axis=axis, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=axis, keepdims=True)
    if (var <= 0).any():
        raise DegenerateBatchError("z-score over a set with zero standard deviation")
    if detach_stats:
        return (x - mu) * (1.0 / np.sqrt(var))
    centered = x - x.mean(axis=axis, keepdims=True)
    return centered / ag.sqrt((centered * centered).mean(axis=axis, keepdims=True))


def nhsm_loss(out_source: Tensor, out_target: Tensor, pos_source: np.ndarray, pos_target: np.ndarray,
              gamma: float, lam: float, detach_stats: bool = False) -> Tensor:
    """Symmetric normalized hard-sample-mining loss, summed over positive pairs.

    ``out_source``/``out_target`` hold the batch representations; row
    ``pos_source[i]`` is aligned with row ``pos_target[i]``. For each pair the
    margins ``gamma - sim(pos) + sim(candidate)`` over every candidate on the
    other side (the positive included) are z-scored and pushed through a
    LogSumExp with smoothing factor ``lam``.

    With ``detach_stats`` the z-score mean and std are treated as constants
    during backpropagation. The loss value is unchanged, but only then does
    the positive similarity receive a gradient: it is shared by every margin
    in the set and cancels out of the centred values.
    """
    if out_source.shape[0] < 2 or out_target.shape[0] < 2:
        raise DegenerateBatchError("each side of the batch needs at least two entities")
    sims = out_source @ out_target.T
    pos = (ag.take_rows(out_source, pos_source) * ag.take_rows(out_target, pos_target)).sum(axis=1, keepdims=True)
    row = ag.take_rows(sims, pos_source) - pos + gamma
    col = ag.take_rows(sims.T, pos_target) - pos + gamma
    return (ag.logsumexp(_zscore(row, detach_stats) * lam, axis=1).sum()
            + ag.logsumexp(_zscore(col, detach_stats) * lam, axis=1).sum())


class EmbeddingTrainer:
    """Owns the encoder, the optimizer and the union graph of both KGs."""

    def __init__(self, kg_s: KnowledgeGraph, kg_t: KnowledgeGraph, cfg: TrainConfig,
                 dtype=np.float32, adjacency: tuple[WeightedAdjacency, WeightedAdjacency] | None = None):
        self.cfg = cfg
        self.num_source = kg_s.num_entities
        self.num_target = kg_t.num_entities
        adj_s, adj_t = adjacency if adjacency is not None else (build_weighted_adjacency(kg_s),
                                                               build_weighted_adjacency(kg_t))
        in_weights = sp.block_diag([adj_s.in_weights, adj_t.in_weights], format="csr")
        self.sampler = NeighborSampler(in_weights)
        self.mean_agg = mean_aggregation_matrix(in_weights).astype(dtype)
        self.rng = np.random.default_rng(cfg.rng_seed)
        self.encoder = GCNEncoder(self.num_source + self.num_target, cfg.dim, cfg.layers,
                                  cfg.activation, rng=self.rng, dtype=dtype, residual=cfg.residual,
                                  output=cfg.output)
        self.optimizer = Adam(self.encoder.parameters(), lr=cfg.lr)
        self.history: list[float] = []

    def block_for(self, batch: TrainingBatch) -> SampledBlock:
        targets = np.concatenate([batch.batch_source, batch.batch_target + self.num_source])
        block = self.sampler.sample(targets, self.cfg.fanout, self.cfg.layers, self.rng)
        block.batch_source = batch.batch_source
        block.batch_target = batch.batch_target
        return block

    def batch_loss(self, batch: TrainingBatch, block: SampledBlock | None = None) -> Tensor:
        block = block if block is not None else self.block_for(batch)
        out = self.encoder.forward_block(block)
        n_bs = len(batch.pos_source) + len(batch.neg_source)
        out_s, out_t = out[:n_bs], out[n_bs:]
        idx = np.arange(len(batch.pos_source))
        return nhsm_loss(out_s, out_t, idx, idx, self.cfg.gamma, self.cfg.lam, detach_stats=True)

    def run_epoch(self, seed: AlignmentSet) -> float:
        cfg = self.cfg
        n_pos = min(cfg.n_pos, len(seed))
        perm = self.rng.permutation(len(seed))
        total = 0.0
        for start in range(0, len(seed), n_pos):
            batch = sample_training_batch(seed, self.num_source, self.num_target, n_pos, cfg.n_neg,
                                          self.rng, pair_index=perm[start:start + n_pos])
            if len(batch.batch_source) < 2 or len(batch.batch_target) < 2:
                continue
            self.optimizer.zero_grad()
            loss = self.batch_loss(batch)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at epoch {len(self.history)}, batch offset {start}")
            loss.backward()
            self.optimizer.step()
            total += value / len(batch.pos_source)
        mean_loss = total / math.ceil(len(seed) / n_pos)
        self.history.append(mean_loss)
        return mean_loss

    def embeddings(self) -> EmbeddingMatrix:
        f = self.encoder.infer(self.mean_agg)
        if not np.isfinite(f).all():
            raise TrainingError("inference produced non-finite embeddings")
        return EmbeddingMatrix(np.ascontiguousarray(f), self.num_source, self.num_target, list(self.history))


def train_embeddings(kg_s: KnowledgeGraph, kg_t: KnowledgeGraph, seed: AlignmentSet,
                     cfg: TrainConfig, callback: Callable[[int, float], None] | None = None,
                     adjacency: tuple[WeightedAdjacency, WeightedAdjacency] | None = None) -> EmbeddingMatrix:
    if len(seed) == 0:
        raise ValueError("training needs at least one seed pair")
    trainer = EmbeddingTrainer(kg_s, kg_t, cfg, adjacency=adjacency)
    for epoch in range(cfg.epochs):
        loss = trainer.run_epoch(seed)
        log.debug("epoch %d loss %.5f", epoch, loss)
        if callback is not None:
            callback(epoch, loss)
    return trainer.embeddings()


def gradient_check(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], epsilon: float = 1e-5,
                   floor: float = 1e-6) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    Relative error per entry is ``|a - n| / max(|a|, |n|, floor)``.
    """
    for p in params:
        p.grad = None
    loss_fn().backward()
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + epsilon
            up = loss_fn().item()
            flat[i] = old - epsilon
            down = loss_fn().item()
            flat[i] = old
            numeric = (up - down) / (2 * epsilon)
            a = analytic.reshape(-1)[i]
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), floor))
    return worst


def tiny_check_problem(num_nodes: int = 12, dim: int = 4, layers: int = 2, n_pos: int = 3,
                       lam: float = 2.0, gamma: float = 1.0, rng_seed: int = 0,
                       activation: str = "tanh") -> tuple[Callable[[], Tensor], list[Tensor]]:
    """A double-precision GCN + NHSM loss on a random graph, for gradient checks.

    Returns (loss_fn, params). The first ``n_pos`` nodes of each half of the
    node set are aligned; every node of a half is in the batch.
    """
    rng = np.random.default_rng(rng_seed)
    half = num_nodes // 2
    dense = (rng.random((num_nodes, num_nodes)) < 0.3).astype(float) * rng.uniform(0.2, 1.0, (num_nodes, num_nodes))
    dense[:half, half:] = 0
    dense[half:, :half] = 0
    np.fill_diagonal(dense, 1.0)
    in_weights = sp.csr_matrix(dense.T)
    enc = GCNEncoder(num_nodes, dim, layers, activation, rng=rng, dtype=np.float64)
    for b in enc.biases:
        b.data[:] = rng.normal(scale=0.1, size=b.shape)
    block = NeighborSampler(in_weights).sample(np.arange(num_nodes), num_nodes, layers, rng)
    idx = np.arange(n_pos)

    def loss_fn() -> Tensor:
        out = enc.forward_block(block)
        return nhsm_loss(out[:half], out[half:], idx, idx, gamma, lam)

    return loss_fn, enc.parameters()
