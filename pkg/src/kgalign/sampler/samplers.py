"""Mini-batch samplers that split both KGs into K co-located batches."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .. import autograd as ag
from ..autograd import Adam, Tensor
from ..eval import hungarian
from ..gnn import glorot, mean_aggregation_matrix
from ..kg import AlignmentSet, KnowledgeGraph, WeightedAdjacency, build_weighted_adjacency
from ..train import EmbeddingMatrix
from .classifier import CLASSIFIERS, MissingClassError, train_classifier
from .kmeans import kmeans
from .metis import metis_partition

log = logging.getLogger(__name__)

SAMPLERS = ("vps", "metis-cps", "cmcs", "iscs")


@dataclass
class BatchAssignment:
    k: int
    source_labels: np.ndarray
    target_labels: np.ndarray

    def __post_init__(self):
        self.source_labels = np.asarray(self.source_labels, dtype=np.int64)
        self.target_labels = np.asarray(self.target_labels, dtype=np.int64)
        for lab in (self.source_labels, self.target_labels):
            if len(lab) and (lab.min() < 0 or lab.max() >= self.k):
                raise ValueError(f"batch labels must lie in [0, {self.k})")

    def batches(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(source ids, target ids) per batch index, ids ascending."""
        s_order = np.argsort(self.source_labels, kind="stable")
        t_order = np.argsort(self.target_labels, kind="stable")
        s_split = np.searchsorted(self.source_labels[s_order], np.arange(1, self.k))
        t_split = np.searchsorted(self.target_labels[t_order], np.arange(1, self.k))
        return list(zip(np.split(s_order, s_split), np.split(t_order, t_split)))

    def transposed(self) -> "BatchAssignment":
        return BatchAssignment(self.k, self.target_labels, self.source_labels)

    def save(self, directory: str | Path, name: str) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for side, lab in (("source", self.source_labels), ("target", self.target_labels)):
            with open(directory / f"{name}_{side}.tsv", "w") as fh:
                fh.writelines(f"{i}\t{b}\n" for i, b in enumerate(lab.tolist()))

    @classmethod
    def load(cls, directory: str | Path, name: str, k: int | None = None) -> "BatchAssignment":
        directory = Path(directory)
        labs = []
        for side in ("source", "target"):
            arr = np.loadtxt(directory / f"{name}_{side}.tsv", dtype=np.int64, delimiter="\t", ndmin=2)
            lab = np.empty(len(arr), dtype=np.int64)
            lab[arr[:, 0]] = arr[:, 1]
            labs.append(lab)
        k = k if k is not None else int(max(labs[0].max(), labs[1].max())) + 1
        return cls(k, *labs)


@dataclass
class PartitionerConfig:
    k: int = 5
    kmeans_max_iter: int = 300
    kmeans_tol: float = 1e-4
    gcn_classifier_epochs: int = 300
    gcn_classifier_lr: float = 0.01
    gcn_hidden: int = 128
    seed_vertex_weight: float = 100.0
    classifier: str = "logreg"
    rng_seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.classifier not in CLASSIFIERS:
            raise ValueError(f"classifier must be one of {sorted(CLASSIFIERS)}, got {self.classifier!r}")


def overlap(assignment: BatchAssignment, reference: AlignmentSet) -> float:
    """Fraction of reference pairs whose two entities share a batch."""
    if len(reference) == 0:
        return 0.0
    s, t = reference.source, reference.target
    return float(np.mean(assignment.source_labels[s] == assignment.target_labels[t]))


def vps(seed: AlignmentSet, num_source: int, num_target: int, k: int,
        rng: np.random.Generator | int | None = 0) -> BatchAssignment:
    """Random partition; each seed pair shares one uniformly drawn batch."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(rng)
    src = rng.integers(k, size=num_source)
    tgt = rng.integers(k, size=num_target)
    tgt[seed.target] = src[seed.source]
    return BatchAssignment(k, src, tgt)


def _fit_zscore(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = x.mean(0)
    sd = x.std(0)
    sd[sd == 0] = 1.0
    return mu, sd


def cmcs(f: EmbeddingMatrix, seed: AlignmentSet, cfg: PartitionerConfig) -> BatchAssignment:
    """Cluster the concatenated standardized seed-pair embeddings, then classify every entity.

    Column statistics are fitted on the seed rows of each side and applied to
    all rows of that side.
    """
    k = cfg.k
    if len(seed) < k:
        raise ValueError(f"need at least k={k} seed pairs, got {len(seed)}")
    fs, ft = f.source.astype(np.float64), f.target.astype(np.float64)
    mu_s, sd_s = _fit_zscore(fs[seed.source])
    mu_t, sd_t = _fit_zscore(ft[seed.target])
    zs, zt = (fs - mu_s) / sd_s, (ft - mu_t) / sd_t
    joint = np.hstack([zs[seed.source], zt[seed.target]])
    train_labels = kmeans(joint, k, cfg.kmeans_max_iter, cfg.kmeans_tol, cfg.rng_seed).labels
    src = train_classifier(zs[seed.source], train_labels, zs, k, cfg.classifier)
    tgt = train_classifier(zt[seed.target], train_labels, zt, k, cfg.classifier)
    # a seed entity's label is its cluster, whatever the classifier says
    src[seed.source] = train_labels
    tgt[seed.target] = train_labels
    return BatchAssignment(k, src, tgt)


class GCNNodeClassifier:
    """Two-layer GCN over a fixed weighted-mean operator, trained with cross-entropy."""

    def __init__(self, in_dim: int, hidden: int, n_classes: int, rng: np.random.Generator):
        self.w1 = Tensor(glorot((in_dim, hidden), rng, np.float32), requires_grad=True)
        self.b1 = Tensor(np.zeros((1, hidden), np.float32), requires_grad=True)
        self.w2 = Tensor(glorot((hidden, n_classes), rng, np.float32), requires_grad=True)
        self.b2 = Tensor(np.zeros((1, n_classes), np.float32), requires_grad=True)

    def parameters(self) -> list[Tensor]:
        return [self.w1, self.b1, self.w2, self.b2]

    def logits(self, agg: sp.csr_matrix, x: np.ndarray) -> Tensor:
        # agg @ x is constant, so it is hoisted out of the graph
        h = ag.relu(Tensor(agg @ x) @ self.w1 + self.b1)
        return ag.spmm(agg, h) @ self.w2 + self.b2


def gcn_classify(adj: WeightedAdjacency, features: np.ndarray, train_nodes: np.ndarray,
                 train_labels: np.ndarray, n_classes: int, epochs: int, lr: float, hidden: int,
                 rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Predict a class per node; returns (labels, training accuracy).

    Classes without any training node are masked out of the prediction.
    """
    agg = mean_aggregation_matrix(adj.in_weights).astype(np.float32)
    x = features.astype(np.float32)
    mu, sd = _fit_zscore(x)
    x = ((x - mu) / sd).astype(np.float32)
    model = GCNNodeClassifier(x.shape[1], hidden, n_classes, rng)
    opt = Adam(model.parameters(), lr=lr)
    present = np.bincount(train_labels, minlength=n_classes) > 0
    mask = np.where(present, 0.0, -1e9).astype(np.float32)
    onehot = np.zeros((len(train_nodes), n_classes), np.float32)
    onehot[np.arange(len(train_nodes)), train_labels] = 1.0 / len(train_nodes)
    ax = np.asarray(agg @ x, dtype=np.float32)
    for _ in range(epochs):
        opt.zero_grad()
        h = ag.relu(Tensor(ax) @ model.w1 + model.b1)
        z = ag.take_rows(ag.spmm(agg, h), train_nodes) @ model.w2 + model.b2 + mask
        loss = -(ag.log_softmax(z, axis=1) * onehot).sum()
        loss.backward()
        opt.step()
    scores = model.logits(agg, x).data + mask
    pred = scores.argmax(1)
    return pred, float(np.mean(pred[train_nodes] == train_labels))


def iscs(kg_s: KnowledgeGraph, kg_t: KnowledgeGraph, f: EmbeddingMatrix, seed: AlignmentSet,
         cfg: PartitionerConfig, direction: str = "s2t",
         adjacency: tuple[WeightedAdjacency, WeightedAdjacency] | None = None) -> BatchAssignment:
    """Partition one KG with METIS and learn the partition on the other with a GCN.

    ``direction`` "s2t" partitions the source and classifies the target;
    "t2s" swaps the roles. The result is always oriented (source, target).
    """
    if direction not in ("s2t", "t2s"):
        raise ValueError("direction must be 's2t' or 't2s'")
    k = cfg.k
    adj_s, adj_t = adjacency if adjacency is not None else (build_weighted_adjacency(kg_s),
                                                           build_weighted_adjacency(kg_t))
    if direction == "s2t":
        part_adj, cls_adj, feats = adj_s, adj_t, f.target
        part_seed, cls_seed = seed.source, seed.target
    else:
        part_adj, cls_adj, feats = adj_t, adj_s, f.source
        part_seed, cls_seed = seed.target, seed.source
    if k == 1:
        return BatchAssignment(1, np.zeros(f.num_source, np.int64), np.zeros(f.num_target, np.int64))
    rng = np.random.default_rng(cfg.rng_seed)
    part = metis_partition(part_adj, k, rng=rng)
    train_labels = part[part_seed]
    missing = np.flatnonzero(np.bincount(train_labels, minlength=k) == 0)
    if len(missing):
        log.warning("batches %s have no training entities; classifying over the rest", missing.tolist())
    pred, acc = gcn_classify(cls_adj, feats, cls_seed, train_labels, k, cfg.gcn_classifier_epochs,
                             cfg.gcn_classifier_lr, cfg.gcn_hidden, rng)
    log.info("ISCS %s: GCN training accuracy %.3f", direction, acc)
    if direction == "s2t":
        return BatchAssignment(k, part, pred)
    return BatchAssignment(k, pred, part)


def metis_cps(kg_s: KnowledgeGraph, kg_t: KnowledgeGraph, seed: AlignmentSet, k: int,
              seed_weight: float = 100.0, rng: np.random.Generator | int | None = 0,
              adjacency: tuple[WeightedAdjacency, WeightedAdjacency] | None = None,
              direction: str = "s2t") -> BatchAssignment:
    """METIS on both KGs, steering the second side with heavy seed vertices.

    "s2t" partitions the source first and steers the target; "t2s" swaps the
    roles. Second-side parts are relabelled to the first side's batch ids that
    maximize seed agreement (optimal assignment on the part contingency
    table), then every seed entity on the second side is anchored to its
    partner's batch.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if direction not in ("s2t", "t2s"):
        raise ValueError("direction must be 's2t' or 't2s'")
    adj_s, adj_t = adjacency if adjacency is not None else (build_weighted_adjacency(kg_s),
                                                           build_weighted_adjacency(kg_t))
    if k == 1:
        return BatchAssignment(1, np.zeros(adj_s.num_nodes, np.int64), np.zeros(adj_t.num_nodes, np.int64))
    first_adj, second_adj, first_seed, second_seed = adj_s, adj_t, seed.source, seed.target
    if direction == "t2s":
        first_adj, second_adj, first_seed, second_seed = adj_t, adj_s, seed.target, seed.source
    rng = np.random.default_rng(rng)
    first = metis_partition(first_adj, k, rng=rng)
    vw = np.ones(second_adj.num_nodes)
    vw[second_seed] = seed_weight
    second = metis_partition(second_adj, k, vertex_weights=vw, rng=rng)
    votes = np.zeros((k, k))
    np.add.at(votes, (second[second_seed], first[first_seed]), 1.0)
    second = hungarian(votes)[second]
    second[second_seed] = first[first_seed]
    if direction == "s2t":
        return BatchAssignment(k, first, second)
    return BatchAssignment(k, second, first)


def run_sampler(name: str, kg_s: KnowledgeGraph, kg_t: KnowledgeGraph, f: EmbeddingMatrix,
                seed: AlignmentSet, cfg: PartitionerConfig,
                adjacency: tuple[WeightedAdjacency, WeightedAdjacency] | None = None) -> BatchAssignment:
    if name == "vps":
        return vps(seed, kg_s.num_entities, kg_t.num_entities, cfg.k, cfg.rng_seed)
    if name in ("metis-cps", "metis-cps-s2t"):
        return metis_cps(kg_s, kg_t, seed, cfg.k, cfg.seed_vertex_weight, cfg.rng_seed, adjacency)
    if name == "metis-cps-t2s":
        return metis_cps(kg_s, kg_t, seed, cfg.k, cfg.seed_vertex_weight, cfg.rng_seed, adjacency, "t2s")
    if name == "cmcs":
        return cmcs(f, seed, cfg)
    if name in ("iscs", "iscs-s2t"):
        return iscs(kg_s, kg_t, f, seed, cfg, "s2t", adjacency)
    if name == "iscs-t2s":
        return iscs(kg_s, kg_t, f, seed, cfg, "t2s", adjacency)
    raise ValueError(f"unknown sampler {name!r}")


__all__ = [
    "BatchAssignment", "PartitionerConfig", "MissingClassError", "SAMPLERS", "cmcs", "gcn_classify",
    "iscs", "metis_cps", "overlap", "run_sampler", "vps",
]
