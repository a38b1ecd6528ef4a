"""Alignment metrics, an exact assignment oracle and dense CSLS."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .kg import AlignmentSet
from .sparse import SparseSimMatrix


@dataclass
class EvalReport:
    hits_at: dict[int, float] = field(default_factory=dict)
    mrr: float = 0.0
    runtime_seconds: dict[str, float] = field(default_factory=dict)
    peak_memory_mb: float = 0.0
    overlap: dict[str, float] = field(default_factory=dict)
    extra: dict[str, float] = field(default_factory=dict)

    def metrics(self) -> dict[str, float]:
        out = {f"hits@{n}": v for n, v in sorted(self.hits_at.items())}
        out["mrr"] = self.mrr
        out.update({f"overlap.{k}": v for k, v in self.overlap.items()})
        out.update(self.extra)
        return out

    def to_text(self) -> str:
        lines = [f"{k}={v:.6f}" for k, v in self.metrics().items()]
        lines += [f"time.{k}={v:.3f}" for k, v in self.runtime_seconds.items()]
        lines.append(f"peak_memory_mb={self.peak_memory_mb:.1f}")
        return "\n".join(lines) + "\n"

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        (directory / "report.txt").write_text(self.to_text())
        d = asdict(self)
        d["hits_at"] = {str(k): v for k, v in self.hits_at.items()}
        (directory / "report.json").write_text(json.dumps(d, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        d = json.loads(Path(path).read_text())
        d["hits_at"] = {int(k): v for k, v in d["hits_at"].items()}
        return cls(**d)


def true_target_ranks(m: SparseSimMatrix, test: AlignmentSet) -> np.ndarray:
    """1-based rank of each true target within its row; 0 where the target is absent.

    Absent coordinates rank below every stored one; ties go to the lower column.
    """
    s, t = test.source, test.target
    indptr = m.indptr
    ranks = np.zeros(len(s), dtype=np.int64)
    # locate the true target's stored value per test pair
    key = m.row * m.shape[1] + m.col
    want = s * m.shape[1] + t
    pos = np.searchsorted(key, want)
    pos = np.minimum(pos, max(m.nnz - 1, 0))
    found = (m.nnz > 0) & (key[pos] == want) if m.nnz else np.zeros(len(s), bool)
    if not found.any():
        return ranks
    true_val = np.where(found, m.val[pos] if m.nnz else 0.0, -np.inf)
    # count, per test pair, stored entries in the row that beat the true target
    lengths = indptr[s + 1] - indptr[s]
    owner = np.repeat(np.arange(len(s)), lengths)
    idx = np.arange(lengths.sum()) - np.repeat(np.cumsum(lengths) - lengths, lengths) + np.repeat(indptr[s], lengths)
    v, c = m.val[idx], m.col[idx]
    beats = (v > true_val[owner]) | ((v == true_val[owner]) & (c < t[owner]))
    better = np.bincount(owner, weights=beats, minlength=len(s)).astype(np.int64)
    ranks[found] = better[found] + 1
    return ranks


def hits_at_n(m: SparseSimMatrix, test: AlignmentSet, n: int) -> float:
    if n < 1:
        raise ValueError("N must be >= 1")
    if len(test) == 0:
        return 0.0
    r = true_target_ranks(m, test)
    return float(np.mean((r >= 1) & (r <= n)))


def mrr(m: SparseSimMatrix, test: AlignmentSet) -> float:
    if len(test) == 0:
        return 0.0
    r = true_target_ranks(m, test).astype(np.float64)
    return float(np.mean(np.where(r > 0, 1.0 / np.maximum(r, 1), 0.0)))


EVAL_DIRECTIONS = ("s2t", "t2s", "both")


def evaluate(m: SparseSimMatrix, test: AlignmentSet, hits=(1, 10), direction: str = "s2t") -> EvalReport:
    """Hits@N and MRR of ``m`` on ``test``.

    "s2t" ranks targets per source row, "t2s" ranks sources per target
    column, "both" averages the two.
    """
    if direction not in EVAL_DIRECTIONS:
        raise ValueError(f"direction must be one of {EVAL_DIRECTIONS}, got {direction!r}")
    if direction == "both":
        a, b = evaluate(m, test, hits, "s2t"), evaluate(m, test, hits, "t2s")
        return EvalReport({n: (a.hits_at[n] + b.hits_at[n]) / 2 for n in a.hits_at}, (a.mrr + b.mrr) / 2)
    if direction == "t2s":
        m, test = m.T, AlignmentSet(test.pairs[:, ::-1])
    r = true_target_ranks(m, test)
    rep = EvalReport()
    for n in hits:
        rep.hits_at[int(n)] = float(np.mean((r >= 1) & (r <= n))) if len(r) else 0.0
    rep.mrr = float(np.mean(np.where(r > 0, 1.0 / np.maximum(r, 1), 0.0))) if len(r) else 0.0
    return rep


def greedy_top1(m: SparseSimMatrix | np.ndarray, test: AlignmentSet) -> float:
    """Hits@1 of taking each test row's argmax as the prediction."""
    if len(test) == 0:
        return 0.0
    if isinstance(m, SparseSimMatrix):
        pred = m.row_argmax()[test.source]
    else:
        pred = np.asarray(m)[test.source].argmax(1)
    return float(np.mean(pred == test.target))


def greedy_cosine_hits(src: np.ndarray, tgt: np.ndarray, test: AlignmentSet, block: int = 2048) -> float:
    """Greedy Hits@1 with cosine similarity between all test sources and all targets."""
    if len(test) == 0:
        return 0.0
    def unit(x):
        x = np.asarray(x, dtype=np.float64)
        n = np.linalg.norm(x, axis=1, keepdims=True)
        return x / np.where(n == 0, 1.0, n)
    s, t = unit(src[test.source]), unit(tgt)
    hits = 0
    for i in range(0, len(s), block):
        hits += int((np.argmax(s[i:i + block] @ t.T, axis=1) == test.target[i:i + block]).sum())
    return hits / len(test)


def hungarian(sim: np.ndarray) -> np.ndarray:
    """Maximum-total-similarity perfect matching; returns the column chosen for each row.

    Kuhn-Munkres with row potentials, O(n^3).
    """
    a = np.asarray(sim, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"hungarian needs a square matrix, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("hungarian needs finite entries")
    n = a.shape[0]
    cost = -a
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=np.int64)  # match[j] = row (1-based) owning column j
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(cand.argmin()) + 1
            delta = cand[j1 - 1]
            u[match[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    out = np.empty(n, dtype=np.int64)
    out[match[1:] - 1] = np.arange(n)
    return out


def topk_mean(sim: np.ndarray, k: int, axis: int) -> np.ndarray:
    """Mean of the k largest entries along ``axis``."""
    n = sim.shape[axis]
    k = min(k, n)
    part = -np.partition(-sim, k - 1, axis=axis)
    return np.take(part, np.arange(k), axis=axis).mean(axis=axis)


def dense_csls(sim: np.ndarray, k: int) -> np.ndarray:
    """2*sim - r_S(target) - r_T(source) with k-nearest-neighbour mean similarities."""
    sim = np.asarray(sim, dtype=np.float64)
    if k < 1 or k > min(sim.shape):
        raise ValueError(f"k must lie in [1, {min(sim.shape)}]")
    r_t = topk_mean(sim, k, axis=1)  # each source against the targets
    r_s = topk_mean(sim, k, axis=0)  # each target against the sources
    return 2 * sim - r_t[:, None] - r_s[None, :]
