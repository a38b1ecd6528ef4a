import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kgalign.sampler import kmeans, kmeans_plusplus


def blobs(rng, n=100, gap=50.0, dim=4):
    a = rng.normal(size=(n, dim))
    b = rng.normal(size=(n, dim)) + gap
    return np.vstack([a, b]), np.repeat([0, 1], n)


def test_well_separated_blobs_are_recovered():
    x, truth = blobs(np.random.default_rng(0))
    res = kmeans(x, 2, rng=0)
    # purity by brute force over the two label permutations
    assert max(np.mean(res.labels == truth), np.mean(res.labels == 1 - truth)) == 1.0


def test_k_one_labels_everything_zero():
    x = np.random.default_rng(1).normal(size=(30, 3))
    res = kmeans(x, 1, rng=0)
    assert (res.labels == 0).all()
    assert np.allclose(res.centroids[0], x.mean(0))


@given(st.integers(1, 6), st.integers(0, 10_000))
def test_centroids_are_means_of_their_points(k, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(40, 3))
    res = kmeans(x, k, rng=seed)
    for c in range(k):
        members = x[res.labels == c]
        assert len(members) > 0
        assert np.allclose(res.centroids[c], members.mean(0))


@given(st.integers(0, 10_000))
def test_labels_are_nearest_centroids_at_convergence(seed):
    x, _ = blobs(np.random.default_rng(seed), n=30, gap=20.0)
    res = kmeans(x, 3, tol=0.0, rng=seed)
    d = ((x[:, None, :] - res.centroids[None]) ** 2).sum(-1)
    assert np.allclose(d[np.arange(len(x)), res.labels], d.min(1))


def test_plusplus_picks_distinct_points():
    x = np.random.default_rng(2).normal(size=(20, 2))
    c = kmeans_plusplus(x, 5, np.random.default_rng(0))
    assert c.shape == (5, 2)
    assert len({tuple(r) for r in c.tolist()}) == 5


def test_same_rng_same_result():
    x = np.random.default_rng(3).normal(size=(80, 5))
    assert np.array_equal(kmeans(x, 4, rng=11).labels, kmeans(x, 4, rng=11).labels)


def test_too_few_points_or_bad_k_raise():
    with pytest.raises(ValueError):
        kmeans(np.zeros((2, 2)), 0)
    with pytest.raises(ValueError):
        kmeans(np.zeros((2, 2)), 3)
