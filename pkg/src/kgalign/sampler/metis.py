"""Multilevel k-way graph partitioning in the style of METIS.

Heavy-edge matching coarsens the graph, greedy graph growing partitions the
coarsest level, and a boundary greedy refinement (single-vertex moves with
positive gain under a balance cap) cleans up each level on the way back.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..kg import WeightedAdjacency

BALANCE = 1.1


@dataclass
class Graph:
    adj: sp.csr_matrix  # symmetric, zero diagonal
    vwgt: np.ndarray

    @property
    def n(self) -> int:
        return self.adj.shape[0]


def symmetric_graph(adj, vertex_weights=None) -> Graph:
    m = adj.matrix if isinstance(adj, WeightedAdjacency) else sp.csr_matrix(adj)
    m = (m + m.T).tocsr()
    m.setdiag(0)
    m.eliminate_zeros()
    m.sort_indices()
    vw = np.ones(m.shape[0]) if vertex_weights is None else np.asarray(vertex_weights, dtype=np.float64)
    if len(vw) != m.shape[0]:
        raise ValueError("vertex_weights length does not match the graph")
    return Graph(m.astype(np.float64), vw)


def edge_cut(adj, labels: np.ndarray) -> float:
    g = adj if isinstance(adj, Graph) else symmetric_graph(adj)
    m = g.adj.tocoo()
    return float(m.data[labels[m.row] != labels[m.col]].sum() / 2.0)


def _coarsen(g: Graph, rng: np.random.Generator, maxvwgt: float) -> tuple[Graph, np.ndarray]:
    n = g.n
    indptr, indices, data = g.adj.indptr, g.adj.indices, g.adj.data
    match = np.full(n, -1, dtype=np.int64)
    vw = g.vwgt
    for v in rng.permutation(n):
        if match[v] >= 0:
            continue
        nb = indices[indptr[v]:indptr[v + 1]]
        ok = (match[nb] < 0) & (vw[nb] + vw[v] <= maxvwgt)
        if ok.any():
            w = data[indptr[v]:indptr[v + 1]][ok]
            u = nb[ok][int(w.argmax())]
            match[v], match[u] = u, v
        else:
            match[v] = v
    rep = np.minimum(np.arange(n), match)
    _, cmap = np.unique(rep, return_inverse=True)
    nc = int(cmap.max()) + 1
    proj = sp.csr_matrix((np.ones(n), (np.arange(n), cmap)), shape=(n, nc))
    cadj = (proj.T @ g.adj @ proj).tocsr()
    cadj.setdiag(0)
    cadj.eliminate_zeros()
    cadj.sort_indices()
    return Graph(cadj, np.bincount(cmap, weights=vw, minlength=nc)), cmap


def _grow(g: Graph, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy graph growing: fill parts one by one from a random seed vertex."""
    n = g.n
    labels = np.full(n, k - 1, dtype=np.int64)
    free = np.ones(n, dtype=bool)
    target = g.vwgt.sum() / k
    adj = g.adj
    for p in range(k - 1):
        conn = np.zeros(n)
        weight = 0.0
        while weight < target and free.any():
            cand = free & (conn > 0)
            if cand.any():
                idx = np.flatnonzero(cand)
                v = int(idx[conn[idx].argmax()])
            else:
                idx = np.flatnonzero(free)
                v = int(idx[rng.integers(len(idx))])
            free[v] = False
            labels[v] = p
            weight += g.vwgt[v]
            s, e = adj.indptr[v], adj.indptr[v + 1]
            conn[adj.indices[s:e]] += adj.data[s:e]
    return labels


def _boundary(g: Graph, labels: np.ndarray) -> np.ndarray:
    m = g.adj.tocoo()
    return np.unique(m.row[labels[m.row] != labels[m.col]])


def _refine(g: Graph, labels: np.ndarray, k: int, bounds: tuple[float, float],
            rng: np.random.Generator, passes: int = 8) -> np.ndarray:
    labels = labels.copy()
    minpart, maxpart = bounds
    pw = np.bincount(labels, weights=g.vwgt, minlength=k)
    indptr, indices, data = g.adj.indptr, g.adj.indices, g.adj.data
    for _ in range(passes):
        moved = 0
        for v in rng.permutation(_boundary(g, labels)):
            own = labels[v]
            w = g.vwgt[v]
            if pw[own] - w < minpart:
                continue
            s, e = indptr[v], indptr[v + 1]
            conn = np.bincount(labels[indices[s:e]], weights=data[s:e], minlength=k)
            gain = conn - conn[own]
            gain[own] = -np.inf
            gain[pw + w > maxpart] = -np.inf
            best = int(gain.argmax())
            if gain[best] > 0 or (gain[best] == 0 and pw[best] + w < pw[own]):
                labels[v] = best
                pw[own] -= w
                pw[best] += w
                moved += 1
        if moved == 0:
            break
    return labels


def _balance(g: Graph, labels: np.ndarray, k: int, bounds: tuple[float, float]) -> np.ndarray:
    """Greedy single-vertex moves until every part weight lies within bounds.

    Each move picks the vertex whose relocation loses the least cut weight.
    """
    labels = labels.copy()
    minpart, maxpart = bounds
    pw = np.bincount(labels, weights=g.vwgt, minlength=k)
    for _ in range(g.n):
        over = np.flatnonzero(pw > maxpart)
        under = np.flatnonzero(pw < minpart)
        if len(over) == 0 and len(under) == 0:
            break
        conn = np.asarray(g.adj @ sp.csr_matrix(
            (np.ones(g.n), (np.arange(g.n), labels)), shape=(g.n, k)).toarray())
        own_conn = conn[np.arange(g.n), labels]
        if len(over):
            p = int(over[0])
            src = labels == p
            dest_ok = pw + g.vwgt[:, None] <= maxpart
            dest_ok[:, p] = False
        else:
            q = int(under[0])
            src = (pw[labels] - g.vwgt >= minpart) & (labels != q)
            dest_ok = np.zeros((g.n, k), dtype=bool)
            dest_ok[:, q] = True
        score = np.where(dest_ok & src[:, None], conn - own_conn[:, None], -np.inf)
        if not np.isfinite(score).any():
            break
        v, q = np.unravel_index(int(score.argmax()), score.shape)
        pw[labels[v]] -= g.vwgt[v]
        pw[q] += g.vwgt[v]
        labels[v] = q
    return labels


def metis_partition(adj, k: int, vertex_weights=None, rng: np.random.Generator | int | None = 0,
                    balance: float = BALANCE, trials: int = 4) -> np.ndarray:
    """Partition into ``k`` parts minimizing edge cut with part weight <= balance * total / k.

    ``adj`` is a WeightedAdjacency or any square sparse matrix; direction and
    self-loops are ignored (the graph is symmetrized).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(rng)
    g0 = symmetric_graph(adj, vertex_weights)
    n = g0.n
    if k == 1 or n == 0:
        return np.zeros(n, dtype=np.int64)
    if k >= n:
        return np.arange(n, dtype=np.int64) % k
    total = g0.vwgt.sum()
    bounds = (total / k / balance, balance * total / k)
    coarsen_to = max(30, 15 * k)
    maxvwgt = max(0.1 * total / k, g0.vwgt.max())

    levels: list[tuple[Graph, np.ndarray]] = []
    g = g0
    while g.n > coarsen_to and len(levels) < 40:
        cg, cmap = _coarsen(g, rng, maxvwgt)
        if cg.n > 0.95 * g.n:
            break
        levels.append((g, cmap))
        g = cg

    best, best_cut = None, np.inf
    for _ in range(trials):
        lab = _balance(g, _grow(g, k, rng), k, bounds)
        lab = _refine(g, lab, k, bounds, rng)
        cut = edge_cut(g, lab)
        if cut < best_cut:
            best, best_cut = lab, cut
    labels = best
    for fine, cmap in reversed(levels):
        labels = _refine(fine, labels[cmap], k, bounds, rng)
    return _balance(g0, labels, k, bounds)
