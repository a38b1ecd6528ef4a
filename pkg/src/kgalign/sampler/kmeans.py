from __future__ import annotations

from typing import NamedTuple

import numpy as np


class EmptyClusterError(RuntimeError):
    pass


class KMeansResult(NamedTuple):
    labels: np.ndarray
    centroids: np.ndarray
    n_iter: int


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """D^2-weighted seeding."""
    centers = [x[rng.integers(len(x))]]
    closest = _sq_dists(x, centers[0][None]).ravel()
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(len(x))
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, len(x) - 1)
        centers.append(x[idx])
        closest = np.minimum(closest, _sq_dists(x, x[idx][None]).ravel())
    return np.array(centers)


def kmeans(points: np.ndarray, k: int, max_iter: int = 300, tol: float = 1e-4,
           rng: np.random.Generator | int | None = None, max_reseeds: int = 10) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding and euclidean distance.

    Stops after ``max_iter`` rounds or once the summed squared centroid shift
    drops below ``tol``. The returned centroids are the means of the points
    carrying each returned label. An empty cluster is re-seeded at the point
    farthest from its own centroid, at most ``max_reseeds`` times in total.
    """
    x = np.asarray(points, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(x):
        raise ValueError(f"cannot form {k} clusters from {len(x)} points")
    rng = np.random.default_rng(rng)
    centroids = kmeans_plusplus(x, k, rng)
    reseeds = 0
    n_iter = 0
    while True:
        n_iter += 1
        d = _sq_dists(x, centroids)
        labels = d.argmin(1)
        counts = np.bincount(labels, minlength=k)
        while (counts == 0).any():
            if reseeds >= max_reseeds:
                raise EmptyClusterError(f"cluster stayed empty after {max_reseeds} re-seeds")
            reseeds += 1
            empty = int(np.flatnonzero(counts == 0)[0])
            own = d[np.arange(len(x)), labels]
            own[counts[labels] <= 1] = -1.0  # never strip a singleton cluster
            far = int(own.argmax())
            centroids[empty] = x[far]
            d[:, empty] = _sq_dists(x, x[far][None]).ravel()
            labels = d.argmin(1)
            counts = np.bincount(labels, minlength=k)
        new = np.zeros_like(centroids)
        np.add.at(new, labels, x)
        new /= counts[:, None]
        shift = float(((new - centroids) ** 2).sum())
        centroids = new
        if shift < tol or n_iter >= max_iter:
            return KMeansResult(labels, centroids, n_iter)
