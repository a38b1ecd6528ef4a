"""Sinkhorn-normalized local similarities fused with a CSLS-normalized global top-k."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .sampler.samplers import BatchAssignment
from .sparse import SparseSimMatrix
from .train import EmbeddingMatrix


@dataclass
class FusionConfig:
    sinkhorn_iters: int = 100
    topk: int = 50
    csls_k: int = 10
    tau: float = 0.05

    def __post_init__(self):
        if min(self.sinkhorn_iters, self.topk, self.csls_k) < 1:
            raise ValueError("sinkhorn_iters, topk and csls_k must be positive")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")


def batch_local_sim(emb_source: np.ndarray, emb_target: np.ndarray, batch_source: np.ndarray,
                    batch_target: np.ndarray, dtype=np.float32) -> np.ndarray:
    if len(batch_source) == 0 or len(batch_target) == 0:
        raise ValueError("both sides of a batch must be non-empty")
    return np.asarray(emb_source[batch_source], dtype=dtype) @ np.asarray(emb_target[batch_target], dtype=dtype).T


def marginal_violation(p: np.ndarray) -> float:
    """max |row sum - target| + max |col sum - target| for the min(m, n) mass convention."""
    m, n = p.shape
    mass = min(m, n)
    return float(np.abs(p.sum(1) - mass / m).max() + np.abs(p.sum(0) - mass / n).max())


def sinkhorn(sim: np.ndarray, iters: int = 100, tau: float = 0.05, dtype=np.float32,
             history: list[float] | None = None) -> np.ndarray:
    """Alternate row/column normalization of ``exp(sim / tau)``.

    Each row is shifted by its maximum before exponentiation. For an m x n
    input the targets are uniform marginals carrying total mass min(m, n):
    rows sum to min(m, n)/m and columns to min(m, n)/n. If ``history`` is
    given, the marginal violation after every round is appended to it.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    x = np.asarray(sim, dtype=dtype)
    if not np.isfinite(x).all():
        raise ValueError("sinkhorn input must be finite")
    m, n = x.shape
    mass = min(m, n)
    row_target = dtype(mass / m) if isinstance(dtype, type) else mass / m
    col_target = dtype(mass / n) if isinstance(dtype, type) else mass / n
    k = np.exp((x - x.max(axis=1, keepdims=True)) / dtype(tau))
    for _ in range(iters):
        k *= row_target / k.sum(axis=1, keepdims=True)
        k *= col_target / k.sum(axis=0, keepdims=True)
        if history is not None:
            history.append(marginal_violation(k))
    if not np.isfinite(k).all():
        raise FloatingPointError("sinkhorn produced non-finite values")
    return k


def assemble_local(batches: BatchAssignment | Sequence[tuple[np.ndarray, np.ndarray]],
                   f: EmbeddingMatrix, cfg: FusionConfig, threads: int = 1) -> SparseSimMatrix:
    """Sum of per-batch Sinkhorn matrices placed at their global coordinates."""
    parts = batches.batches() if isinstance(batches, BatchAssignment) else list(batches)
    parts = [(np.asarray(s, np.int64), np.asarray(t, np.int64)) for s, t in parts if len(s) and len(t)]
    shape = (f.num_source, f.num_target)
    all_s = np.concatenate([s for s, _ in parts]) if parts else np.empty(0, np.int64)
    all_t = np.concatenate([t for _, t in parts]) if parts else np.empty(0, np.int64)
    if len(np.unique(all_s)) != len(all_s) or len(np.unique(all_t)) != len(all_t):
        keys = np.concatenate([(s[:, None] * shape[1] + t[None, :]).ravel() for s, t in parts])
        if len(np.unique(keys)) != len(keys):
            raise ValueError("batches overlap: two batches write the same coordinate")

    fs, ft = f.source, f.target

    def one(batch):
        s, t = batch
        p = sinkhorn(batch_local_sim(fs, ft, s, t), cfg.sinkhorn_iters, cfg.tau)
        return np.repeat(s, len(t)), np.tile(t, len(s)), p.ravel().astype(np.float64)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, parts))
    else:
        results = [one(b) for b in parts]
    if not results:
        return SparseSimMatrix.empty(shape)
    rows, cols, vals = zip(*results)
    return SparseSimMatrix.from_coo(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), shape)


def fuse_local(m_c: SparseSimMatrix, m_i_st: SparseSimMatrix | None = None,
               m_i_ts: SparseSimMatrix | None = None) -> SparseSimMatrix:
    """M_L = M_C + M_I(s->t) + M_I(t->s)^T; missing terms are skipped."""
    out = m_c
    if m_i_st is not None:
        out = out + m_i_st
    if m_i_ts is not None:
        if m_i_ts.shape != (m_c.shape[1], m_c.shape[0]):
            raise ValueError(f"M_I(t->s) has shape {m_i_ts.shape}, expected {(m_c.shape[1], m_c.shape[0])}")
        out = out + m_i_ts.T
    return out


def knn(x: np.ndarray, y: np.ndarray, k: int, block: int = 1024) -> tuple[np.ndarray, np.ndarray]:
    """Exact top-k rows of y by dot product for every row of x, best first.

    Ties resolve to the lower index of y.
    """
    k = min(k, len(y))
    idx = np.empty((len(x), k), dtype=np.int64)
    val = np.empty((len(x), k), dtype=np.float64)
    yt = np.asarray(y, dtype=np.float64).T
    for i in range(0, len(x), block):
        s = np.asarray(x[i:i + block], dtype=np.float64) @ yt
        if k < s.shape[1]:
            cand = np.argpartition(-s, k - 1, axis=1)[:, :k]
        else:
            cand = np.broadcast_to(np.arange(s.shape[1]), s.shape).copy()
        cv = np.take_along_axis(s, cand, axis=1)
        order = np.lexsort((cand, -cv), axis=1)
        idx[i:i + block] = np.take_along_axis(cand, order, axis=1)
        val[i:i + block] = np.take_along_axis(cv, order, axis=1)
    return idx, val


def topk_global(f_source: np.ndarray, f_target: np.ndarray, k: int) -> SparseSimMatrix:
    """kNN(source->target) + kNN(target->source)^T; mutual neighbours add up twice."""
    ns, nt = len(f_source), len(f_target)
    i_st, v_st = knn(f_source, f_target, k)
    i_ts, v_ts = knn(f_target, f_source, k)
    rows = np.concatenate([np.repeat(np.arange(ns), i_st.shape[1]), i_ts.ravel()])
    cols = np.concatenate([i_st.ravel(), np.repeat(np.arange(nt), i_ts.shape[1])])
    return SparseSimMatrix.from_coo(rows, cols, np.concatenate([v_st.ravel(), v_ts.ravel()]), (ns, nt))


def neighbourhood_means(f_source: np.ndarray, f_target: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """(r_T per source, r_S per target): mean top-k similarity to the other side."""
    return knn(f_source, f_target, k)[1].mean(1), knn(f_target, f_source, k)[1].mean(1)


def sp_csls(m: SparseSimMatrix, k: int, f_source: np.ndarray | None = None,
            f_target: np.ndarray | None = None,
            means: tuple[np.ndarray, np.ndarray] | None = None) -> SparseSimMatrix:
    """CSLS applied to the stored entries only, then min-max scaled into [0, 1].

    The neighbourhood means come from ``means`` or are computed by exact k-NN
    over the embeddings. The support is preserved exactly: the minimum entry
    is kept as a stored 0. If all adjusted values coincide, every entry is 1.
    """
    if m.nnz == 0:
        raise ValueError("sp_csls needs at least one stored entry")
    if k < 1:
        raise ValueError("k must be >= 1")
    if means is None:
        if f_source is None or f_target is None:
            raise ValueError("pass embeddings or precomputed neighbourhood means")
        means = neighbourhood_means(f_source, f_target, k)
    r_t, r_s = means
    adj = 2.0 * m.val - r_s[m.col] - r_t[m.row]
    lo, hi = adj.min(), adj.max()
    if hi == lo:
        return m.with_values(np.ones(m.nnz))
    return m.with_values((adj - lo) / (hi - lo))


def fuse_final(m_l: SparseSimMatrix, m_g: SparseSimMatrix | None, k: int,
               f_source: np.ndarray | None = None, f_target: np.ndarray | None = None,
               means: tuple[np.ndarray, np.ndarray] | None = None) -> SparseSimMatrix:
    """M_F = Sp-CSLS(M_L + M_G)."""
    total = m_l if m_g is None else m_l + m_g
    return sp_csls(total, k, f_source, f_target, means)


def global_similarity(f: EmbeddingMatrix, cfg: FusionConfig,
                      means: tuple[np.ndarray, np.ndarray] | None = None) -> SparseSimMatrix:
    """M_G = Sp-CSLS(top-k global similarity)."""
    return sp_csls(topk_global(f.source, f.target, cfg.topk), cfg.csls_k, f.source, f.target, means)
