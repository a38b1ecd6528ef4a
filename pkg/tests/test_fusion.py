import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kgalign.eval import dense_csls, greedy_cosine_hits, hungarian
from kgalign.fusion import (FusionConfig, assemble_local, batch_local_sim, fuse_final, fuse_local, knn,
                            marginal_violation, sinkhorn, sp_csls, topk_global)
from kgalign.kg import split_seed
from kgalign.sampler import BatchAssignment
from kgalign.sparse import SparseSimMatrix
from kgalign.synth import SyntheticSpec, generate_synthetic
from kgalign.train import EmbeddingMatrix, TrainConfig, train_embeddings


def _emb(rng, ns, nt, dim=4):
    return EmbeddingMatrix(rng.normal(size=(ns + nt, dim)).astype(np.float32), ns, nt)


def test_local_sim_examples():
    eye = np.eye(3)
    assert np.array_equal(batch_local_sim(eye, eye, np.arange(3), np.arange(3)), np.eye(3))
    a = np.array([[1.0, 2.0], [3.0, -1.0]])
    b = np.array([[0.5, 0.5], [2.0, 1.0]])
    assert batch_local_sim(a, b, np.array([1]), np.array([0])).tolist() == [[1.0]]
    assert np.allclose(batch_local_sim(a, b, np.arange(2), np.arange(2)), [[1.5, 4.0], [1.0, 5.0]])
    with pytest.raises(ValueError):
        batch_local_sim(a, b, np.array([], int), np.arange(2))


def test_sinkhorn_single_entry():
    assert sinkhorn(np.array([[0.37]])).tolist() == [[1.0]]


def test_sinkhorn_fixed_point():
    n, tau = 5, 0.05
    p = 0.5 * np.full((n, n), 1.0 / n) + 0.5 * np.roll(np.eye(n), 1, axis=1)
    out = sinkhorn(tau * np.log(p), 100, tau, dtype=np.float64)
    assert np.allclose(out, p, atol=1e-12)


@given(st.integers(1, 30), st.integers(0, 10_000))
def test_sinkhorn_square_marginals(n, seed):
    sim = np.random.default_rng(seed).uniform(-1, 1, (n, n))
    sharp = sinkhorn(sim, 100, 0.05, dtype=np.float64)
    assert np.abs(sharp.sum(0) - 1).max() < 1e-12
    assert (sharp >= 0).all()
    smooth = sinkhorn(sim, 100, 0.5, dtype=np.float64)
    assert np.abs(smooth.sum(1) - 1).max() < 1e-9


def test_sinkhorn_hundred_rounds_on_fifty_by_fifty():
    rng = np.random.default_rng(7)
    for _ in range(20):
        p = sinkhorn(rng.uniform(-1, 1, (50, 50)), 100, 0.05)
        assert np.abs(p.sum(1) - 1).max() < 1e-3 and np.abs(p.sum(0) - 1).max() < 1e-3


@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 10_000))
def test_sinkhorn_rectangular_marginals(m, n, seed):
    p = sinkhorn(np.random.default_rng(seed).uniform(-1, 1, (m, n)), 300, 0.2, dtype=np.float64)
    assert p.sum() == pytest.approx(min(m, n))
    assert np.allclose(p.sum(0), min(m, n) / n, atol=1e-9)
    assert marginal_violation(p) < 1e-3


@given(st.integers(2, 20), st.integers(0, 10_000))
def test_marginal_violation_is_non_increasing(n, seed):
    hist: list[float] = []
    sinkhorn(np.random.default_rng(seed).uniform(-1, 1, (n, n)), 100, 0.05, dtype=np.float64, history=hist)
    assert len(hist) == 100
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))


@given(st.floats(-50, 50), st.integers(0, 10_000))
def test_constant_shift_leaves_output_unchanged(c, seed):
    sim = np.random.default_rng(seed).uniform(-1, 1, (8, 8))
    a = sinkhorn(sim, 100, 0.05, dtype=np.float64)
    b = sinkhorn(sim + c, 100, 0.05, dtype=np.float64)
    assert np.abs(a - b).max() < 1e-9


def test_small_temperature_approaches_the_optimal_matching():
    rng = np.random.default_rng(0)
    agree = 0
    for _ in range(50):
        s = rng.uniform(-1, 1, (20, 20))
        agree += np.array_equal(sinkhorn(s, 20000, 0.002, dtype=np.float64).argmax(1), hungarian(s))
    assert agree >= 45


def test_sinkhorn_rejects_bad_input():
    with pytest.raises(ValueError):
        sinkhorn(np.array([[np.inf]]))
    with pytest.raises(ValueError):
        sinkhorn(np.zeros((2, 2)), iters=0)


def test_assemble_single_batch_equals_full_sinkhorn():
    rng = np.random.default_rng(1)
    f = _emb(rng, 6, 5)
    cfg = FusionConfig()
    m = assemble_local(BatchAssignment(1, np.zeros(6, int), np.zeros(5, int)), f, cfg)
    want = sinkhorn(f.source @ f.target.T, cfg.sinkhorn_iters, cfg.tau)
    assert np.allclose(m.to_dense(), want)
    assert m.nnz == 30


@given(st.integers(1, 5), st.integers(0, 10_000))
def test_assemble_nnz_is_sum_of_batch_products(k, seed):
    rng = np.random.default_rng(seed)
    f = _emb(rng, 20, 17)
    a = BatchAssignment(k, rng.integers(k, size=20), rng.integers(k, size=17))
    m = assemble_local(a, f, FusionConfig(sinkhorn_iters=10, tau=0.5))
    assert m.nnz == sum(len(s) * len(t) for s, t in a.batches())
    same = a.source_labels[m.row] == a.target_labels[m.col]
    assert same.all()


def test_assemble_threads_match_serial():
    rng = np.random.default_rng(2)
    f = _emb(rng, 40, 40)
    a = BatchAssignment(4, rng.integers(4, size=40), rng.integers(4, size=40))
    one = assemble_local(a, f, FusionConfig())
    many = assemble_local(a, f, FusionConfig(), threads=3)
    assert one.val.tobytes() == many.val.tobytes()


def test_overlapping_batches_raise():
    f = _emb(np.random.default_rng(0), 3, 3)
    with pytest.raises(ValueError, match="overlap"):
        assemble_local([(np.array([0, 1]), np.array([0])), (np.array([1]), np.array([0, 2]))], f, FusionConfig())


def test_shared_entity_without_shared_coordinates_is_allowed():
    f = _emb(np.random.default_rng(0), 3, 3)
    m = assemble_local([(np.array([0]), np.array([0])), (np.array([0]), np.array([1]))], f, FusionConfig())
    assert m.nnz == 2


def _perm_like(n, shift, scale=1.0):
    return SparseSimMatrix.from_coo(np.arange(n), (np.arange(n) + shift) % n, np.full(n, scale), (n, n))


def test_fuse_local_examples():
    m_c = _perm_like(4, 1, 0.7)
    assert np.array_equal(fuse_local(m_c).to_dense(), m_c.to_dense())
    assert np.array_equal(fuse_local(m_c, SparseSimMatrix.empty((4, 4)), SparseSimMatrix.empty((4, 4))).to_dense(),
                          m_c.to_dense())
    tripled = fuse_local(m_c, m_c, m_c.T)
    assert np.allclose(tripled.to_dense(), 3 * m_c.to_dense())
    assert np.array_equal(tripled.row_argmax(), m_c.row_argmax())


def test_fuse_local_transposes_the_reverse_term():
    m_c = SparseSimMatrix.empty((2, 3))
    ts = SparseSimMatrix.from_coo([2], [0], [0.4], (3, 2))
    assert fuse_local(m_c, None, ts).to_dense()[0, 2] == 0.4
    with pytest.raises(ValueError):
        fuse_local(m_c, None, SparseSimMatrix.empty((2, 3)))


@given(st.integers(1, 15), st.integers(1, 15), st.integers(1, 6), st.integers(0, 10_000))
def test_knn_matches_brute_force_sort(ns, nt, k, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(ns, 3)), rng.normal(size=(nt, 3))
    idx, val = knn(x, y, k, block=4)
    full = x @ y.T
    for i in range(ns):
        order = sorted(range(nt), key=lambda j: (-full[i, j], j))[: min(k, nt)]
        assert idx[i].tolist() == order
        assert np.allclose(val[i], full[i, order])


@given(st.integers(2, 20), st.integers(2, 20), st.integers(1, 5), st.integers(0, 10_000))
def test_topk_counts_and_support(ns, nt, k, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(ns, 3)), rng.normal(size=(nt, 3))
    m = topk_global(x, y, k)
    ks, kt = min(k, nt), min(k, ns)
    # hubs can collect many reverse entries, so only the totals are bounded
    assert (np.bincount(m.row, minlength=ns) >= ks).all()
    assert (np.bincount(m.col, minlength=nt) >= kt).all()
    assert max(ns * ks, nt * kt) <= m.nnz <= ns * ks + nt * kt
    full = x @ y.T
    dense = m.to_dense()
    for i in range(ns):
        top = set(sorted(range(nt), key=lambda j: (-full[i, j], j))[:ks])
        assert top <= set(np.flatnonzero(dense[i]).tolist())


def test_mutual_top_one_is_doubled():
    x = np.array([[1.0, 0.0], [0.0, 1.0]])
    m = topk_global(x, x * 0.5, 1).to_dense()
    assert m[0, 0] == pytest.approx(1.0) and m[1, 1] == pytest.approx(1.0)
    assert m[0, 1] == 0


@given(st.integers(0, 10_000))
def test_sp_csls_constant_means_keep_row_order(seed):
    rng = np.random.default_rng(seed)
    m = SparseSimMatrix.from_dense(rng.uniform(-1, 1, (6, 7)) * (rng.random((6, 7)) < 0.6))
    if m.nnz < 2:
        return
    out = sp_csls(m, 3, means=(np.full(6, 0.3), np.full(7, 0.3)))
    for i in range(6):
        sel = m.row == i
        assert np.array_equal(np.argsort(-m.val[sel], kind="stable"), np.argsort(-out.val[sel], kind="stable"))


@given(st.integers(0, 10_000))
def test_sp_csls_range_and_support(seed):
    rng = np.random.default_rng(seed)
    f = _emb(rng, 9, 8)
    m = topk_global(f.source, f.target, 3)
    out = sp_csls(m, 2, f.source, f.target)
    assert np.array_equal(out.row, m.row) and np.array_equal(out.col, m.col)
    assert out.val.min() == 0.0 and out.val.max() == 1.0


@given(st.integers(0, 10_000))
def test_sp_csls_on_dense_input_orders_like_dense_csls(seed):
    rng = np.random.default_rng(seed)
    fs, ft = rng.normal(size=(12, 4)), rng.normal(size=(12, 4))
    sim = fs @ ft.T
    out = sp_csls(SparseSimMatrix.from_dense(sim), 3, fs, ft).to_dense()
    ref = dense_csls(sim, 3)
    for i in range(12):
        assert np.array_equal(np.argsort(-out[i], kind="stable"), np.argsort(-ref[i], kind="stable"))


def test_sp_csls_all_equal_values_become_one():
    m = SparseSimMatrix.from_coo([0, 1], [1, 0], [0.5, 0.5], (2, 2))
    out = sp_csls(m, 1, means=(np.zeros(2), np.zeros(2)))
    assert out.val.tolist() == [1.0, 1.0]
    with pytest.raises(ValueError):
        sp_csls(SparseSimMatrix.empty((2, 2)), 1, means=(np.zeros(2), np.zeros(2)))


def test_fuse_final_support_and_empty_global():
    rng = np.random.default_rng(5)
    f = _emb(rng, 10, 10)
    a = BatchAssignment(2, rng.integers(2, size=10), rng.integers(2, size=10))
    m_l = assemble_local(a, f, FusionConfig())
    m_g = topk_global(f.source, f.target, 3)
    out = fuse_final(m_l, m_g, 2, f.source, f.target)
    assert out.nnz == (m_l + m_g).nnz
    solo = fuse_final(m_l, None, 2, f.source, f.target)
    assert np.array_equal(solo.val, sp_csls(m_l, 2, f.source, f.target).val)


def test_perfect_batches_on_twins_recover_the_alignment():
    task = generate_synthetic(SyntheticSpec(n_entities=300, edge_dropout=0.0, relation_remap_prob=0.0, rng_seed=0))
    seed, test = split_seed(task.alignment, 0.3, 0)
    f = train_embeddings(task.kg_s, task.kg_t, seed, TrainConfig(epochs=50)).normalized()
    labels = np.arange(len(task.alignment)) % 5
    src = np.empty(f.num_source, int)
    tgt = np.empty(f.num_target, int)
    src[task.alignment.source] = labels
    tgt[task.alignment.target] = labels
    m = assemble_local(BatchAssignment(5, src, tgt), f, FusionConfig())
    hits = np.mean(m.row_argmax()[test.source] == test.target)
    assert hits >= 0.95
    assert hits >= greedy_cosine_hits(f.source, f.target, test)
