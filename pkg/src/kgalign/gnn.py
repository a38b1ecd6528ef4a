"""Neighborhood-sampled blocks and a GCNAlign-style weighted-mean encoder."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import autograd as ag
from .autograd import Tensor


@dataclass
class BlockLayer:
    """One message-passing hop restricted to sampled edges.

    ``src_nodes[:num_dst]`` are exactly the destination nodes, so a residual
    connection can read the previous representation of each destination by
    slicing. ``weights`` is (num_dst, len(src_nodes)) with rows summing to 1.
    """

    src_nodes: np.ndarray
    num_dst: int
    weights: sp.csr_matrix
    fanout_counts: np.ndarray  # sampled neighbours per dst, self-loop excluded

    @property
    def dst_nodes(self) -> np.ndarray:
        return self.src_nodes[: self.num_dst]


@dataclass
class SampledBlock:
    layers: list[BlockLayer]  # input layer first
    batch_source: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    batch_target: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))

    @property
    def input_nodes(self) -> np.ndarray:
        return self.layers[0].src_nodes

    @property
    def output_nodes(self) -> np.ndarray:
        return self.layers[-1].dst_nodes


def _split_self_loops(in_weights: sp.csr_matrix) -> tuple[sp.csr_matrix, np.ndarray]:
    m = in_weights.tocoo()
    off = m.row != m.col
    loops = np.zeros(m.shape[0], dtype=np.float64)
    np.add.at(loops, m.row[~off], m.data[~off])
    rest = sp.csr_matrix((m.data[off], (m.row[off], m.col[off])), shape=m.shape)
    rest.sort_indices()
    return rest, loops


class NeighborSampler:
    """Uniform fan-out sampling over an in-neighbour weight matrix.

    Row v of ``in_weights`` lists every u with its influence weight a_uv.
    Self-loops are always kept and do not count towards the fan-out.
    """

    def __init__(self, in_weights: sp.csr_matrix):
        self.nbrs, self.loops = _split_self_loops(in_weights.tocsr())
        self.num_nodes = in_weights.shape[0]

    def sample_layer(self, dst: np.ndarray, fanout: int, rng: np.random.Generator) -> BlockLayer:
        indptr, indices, data = self.nbrs.indptr, self.nbrs.indices, self.nbrs.data
        starts, ends = indptr[dst], indptr[dst + 1]
        deg = ends - starts
        owner = np.repeat(np.arange(len(dst)), deg)
        slot = np.arange(deg.sum()) - np.repeat(np.cumsum(deg) - deg, deg) + np.repeat(starts, deg)
        if (deg > fanout).any():
            keys = rng.random(len(slot))
            order = np.lexsort((keys, owner))
            rank = np.empty(len(order), dtype=np.int64)
            rank[order] = np.arange(len(order)) - np.repeat(np.cumsum(deg) - deg, deg)
            keep = rank < fanout
            owner, slot = owner[keep], slot[keep]
        nb = indices[slot]

        pos = np.full(self.num_nodes, -1, dtype=np.int64)
        pos[dst] = np.arange(len(dst))
        fresh = np.unique(nb[pos[nb] < 0])
        # first-seen order keeps the block layout independent of hash/sort quirks
        src = np.concatenate([dst, fresh])
        pos[fresh] = np.arange(len(dst), len(src))

        rows = np.concatenate([np.arange(len(dst)), owner])
        cols = np.concatenate([np.arange(len(dst)), pos[nb]])
        vals = np.concatenate([self.loops[dst], data[slot]])
        w = sp.csr_matrix((vals, (rows, cols)), shape=(len(dst), len(src)))
        w = _row_normalize(w)
        return BlockLayer(src, len(dst), w, np.bincount(owner, minlength=len(dst)))

    def sample(self, targets: np.ndarray, fanout: int, layers: int,
               rng: np.random.Generator) -> SampledBlock:
        targets = np.asarray(targets, dtype=np.int64)
        if len(targets) == 0:
            raise ValueError("no target nodes to sample around")
        out: list[BlockLayer] = []
        dst = targets
        for _ in range(layers):
            layer = self.sample_layer(dst, fanout, rng)
            out.append(layer)
            dst = layer.src_nodes
        out.reverse()
        return SampledBlock(out)


def neighborhood_sample(in_weights: sp.csr_matrix, targets, fanout: int, layers: int,
                        rng: np.random.Generator) -> SampledBlock:
    return NeighborSampler(in_weights).sample(targets, fanout, layers, rng)


def _row_normalize(m: sp.csr_matrix) -> sp.csr_matrix:
    m = m.tocsr()
    s = np.asarray(m.sum(axis=1)).ravel()
    s[s == 0] = 1.0
    return sp.csr_matrix(sp.diags(1.0 / s) @ m)


def mean_aggregation_matrix(in_weights: sp.csr_matrix) -> sp.csr_matrix:
    """Full-neighbourhood weighted-mean operator (rows sum to 1)."""
    return _row_normalize(in_weights)


OUTPUTS = ("last", "concat")


def glorot(shape: tuple[int, int], rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class GCNEncoder:
    """Learnable entity table followed by weighted-mean GCN layers (optionally residual).

    Layer k computes ``act(mean_agg(h) @ W_k + b_k)``, plus ``h`` when residual.
    """

    def __init__(self, num_nodes: int, dim: int, layers: int = 2, activation: str = "tanh",
                 rng: np.random.Generator | None = None, dtype=np.float32, residual: bool = False,
                 output: str = "last"):
        if output not in OUTPUTS:
            raise ValueError(f"output must be one of {OUTPUTS}, got {output!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.dim = dim
        self.activation = activation
        self.residual = residual
        self.output = output
        self.embedding = Tensor(glorot((num_nodes, dim), rng, dtype), requires_grad=True)
        self.weights = [Tensor(glorot((dim, dim), rng, dtype), requires_grad=True) for _ in range(layers)]
        self.biases = [Tensor(np.zeros((1, dim), dtype=dtype), requires_grad=True) for _ in range(layers)]

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[Tensor]:
        return [self.embedding, *self.weights, *self.biases]

    def forward_block(self, block: SampledBlock) -> Tensor:
        return gcn_forward(block, self.embedding, self.weights, self.biases, self.activation, self.residual,
                           self.output)

    def infer(self, mean_agg: sp.csr_matrix) -> np.ndarray:
        """Full-graph forward over every node, without sampling or autograd."""
        act = {"tanh": np.tanh, "relu": lambda x: np.maximum(x, 0), "linear": lambda x: x}[self.activation]
        h = self.embedding.data
        outs = [h]
        for w, b in zip(self.weights, self.biases):
            agg = np.asarray(mean_agg @ h, dtype=h.dtype)
            h = act(agg @ w.data + b.data) + h if self.residual else act(agg @ w.data + b.data)
            outs.append(h)
        return np.hstack(outs) if self.output == "concat" else h


def gcn_forward(block: SampledBlock, h0: Tensor, weights, biases, activation: str = "tanh",
                residual: bool = False, output: str = "last") -> Tensor:
    """Run the weighted-mean layers over a sampled block.

    ``h0`` is the full input table; rows are gathered for the block's inputs.
    Returns one row per output node, in ``block.output_nodes`` order.
    """
    if len(weights) != len(block.layers):
        raise ValueError(f"{len(weights)} weight matrices for {len(block.layers)} block layers")
    act = ag.ACTIVATIONS[activation]
    h = ag.take_rows(h0, block.input_nodes)
    outs = [h]
    for layer, w, b in zip(block.layers, weights, biases):
        if h.shape[1] != w.shape[0]:
            raise ValueError(f"feature dim {h.shape[1]} does not match weight rows {w.shape[0]}")
        agg = ag.spmm(layer.weights, h)
        out = act(agg @ w + b)
        if residual:
            out = out + (h[: layer.num_dst] if layer.num_dst < h.shape[0] else h)
        h = out
        outs.append(h)
    if output == "concat":
        n_out = h.shape[0]
        return ag.concat([o[:n_out] if o.shape[0] > n_out else o for o in outs], axis=1)
    return h
