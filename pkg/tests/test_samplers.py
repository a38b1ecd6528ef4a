import numpy as np
import pytest

from kgalign.kg import AlignmentSet, KnowledgeGraph, build_weighted_adjacency, split_seed
from kgalign.sampler import (BatchAssignment, PartitionerConfig, cmcs, gcn_classify, iscs, metis_cps, overlap,
                             run_sampler, vps)
from kgalign.synth import SyntheticSpec, generate_synthetic
from kgalign.train import EmbeddingMatrix


def _twin_task(n=300, seed=0):
    task = generate_synthetic(SyntheticSpec(n_entities=n, edge_dropout=0.0, relation_remap_prob=0.0, rng_seed=seed))
    seed_set, _ = split_seed(task.alignment, 0.3, seed)
    return task, seed_set


def _twin_features(task, dim=16, seed=0):
    """Identical feature rows for the two members of every pair."""
    fs = np.random.default_rng(seed).normal(size=(task.kg_s.num_entities, dim)).astype(np.float32)
    ft = np.empty((task.kg_t.num_entities, dim), np.float32)
    ft[task.alignment.target] = fs[task.alignment.source]
    return EmbeddingMatrix(np.vstack([fs, ft]), len(fs), len(ft))


def _clique_twins(k=4, size=8):
    triples = [(f"c{c}n{i}", "r", f"c{c}n{j}") for c in range(k) for i in range(size) for j in range(i + 1, size)]
    kg_s = KnowledgeGraph.from_labeled_triples([("s" + h, r, "s" + t) for h, r, t in triples])
    kg_t = KnowledgeGraph.from_labeled_triples([("t" + h, r, "t" + t) for h, r, t in triples])
    pairs = np.array([[kg_s.entity_index["s" + lab], kg_t.entity_index["t" + lab]] for lab in
                      (f"c{c}n{i}" for c in range(k) for i in range(size))])
    return kg_s, kg_t, AlignmentSet(pairs)


def test_overlap_examples():
    ref = AlignmentSet(np.column_stack([np.arange(4), np.arange(4)]))
    assert overlap(BatchAssignment(2, [0, 1, 0, 1], [0, 1, 0, 1]), ref) == 1.0
    assert overlap(BatchAssignment(2, [0, 1, 0, 1], [0, 1, 1, 0]), ref) == 0.5


def test_vps_co_batches_seeds_and_k_one_is_trivial():
    seed = AlignmentSet(np.column_stack([np.arange(30), np.arange(30)]))
    a = vps(seed, 100, 100, 5, rng=3)
    assert overlap(a, seed) == 1.0
    full = AlignmentSet(np.column_stack([np.arange(100), np.arange(100)]))
    assert overlap(vps(seed, 100, 100, 1), full) == 1.0


@pytest.mark.parametrize("k", [2, 5, 10])
def test_vps_overlap_matches_expectation(k):
    n, ratio, runs = 1000, 0.3, 200
    full = AlignmentSet(np.column_stack([np.arange(n), np.arange(n)]))
    seed, test = split_seed(full, ratio, 0)
    vals = [overlap(vps(seed, n, n, k, rng=r), full) for r in range(runs)]
    expect = ratio + (1 - ratio) / k
    # each test pair is an independent Bernoulli(1/K)
    sigma = (len(test) / n) * np.sqrt((1 / k) * (1 - 1 / k) / len(test)) / np.sqrt(runs)
    assert abs(np.mean(vals) - expect) <= 3 * sigma


def test_cmcs_identical_twins_overlap_one():
    task, seed = _twin_task()
    a = cmcs(_twin_features(task), seed, PartitionerConfig(k=5))
    assert overlap(a, task.alignment) == 1.0


def test_cmcs_co_batches_every_seed_pair():
    task = generate_synthetic(SyntheticSpec(n_entities=300, rng_seed=2))
    seed, _ = split_seed(task.alignment, 0.3, 0)
    f = EmbeddingMatrix(np.random.default_rng(0).normal(size=(600, 8)).astype(np.float32), 300, 300)
    a = cmcs(f, seed, PartitionerConfig(k=6))
    assert overlap(a, seed) == 1.0
    assert set(a.source_labels.tolist()) <= set(range(6))


def test_cmcs_k_one():
    task, seed = _twin_task(100)
    a = cmcs(_twin_features(task), seed, PartitionerConfig(k=1))
    assert (a.source_labels == 0).all() and (a.target_labels == 0).all()


def test_metis_cps_twin_cliques_overlap_one():
    kg_s, kg_t, al = _clique_twins()
    # three seeds per clique: seed vertices are heavy, so equal clique weights keep a cut-0 split feasible
    seed = AlignmentSet(al.pairs[[i for i in range(len(al)) if i % 8 < 3]])
    for direction in ("s2t", "t2s"):
        a = metis_cps(kg_s, kg_t, seed, 4, direction=direction)
        assert overlap(a, al) == 1.0
        assert sorted(np.bincount(a.source_labels).tolist()) == [8, 8, 8, 8]


def test_metis_cps_anchors_seeds_and_k_one():
    task = generate_synthetic(SyntheticSpec(n_entities=400, rng_seed=4))
    seed, _ = split_seed(task.alignment, 0.3, 0)
    assert overlap(metis_cps(task.kg_s, task.kg_t, seed, 5), seed) == 1.0
    assert overlap(metis_cps(task.kg_s, task.kg_t, seed, 1), task.alignment) == 1.0


def _community_twins(n=300, communities=5, seed=0):
    rng = np.random.default_rng(seed)
    comm = np.repeat(np.arange(communities), n // communities)
    triples = [(i, int(rng.integers(3)), j) for i in range(n) for j in range(i + 1, n)
               if rng.random() < (0.15 if comm[i] == comm[j] else 0.003)]
    kg_s = KnowledgeGraph.from_labeled_triples([(f"s{h}", f"r{r}", f"s{t}") for h, r, t in triples],
                                               entities=[f"s{i}" for i in range(n)])
    kg_t = KnowledgeGraph.from_labeled_triples([(f"t{h}", f"r{r}", f"t{t}") for h, r, t in triples],
                                               entities=[f"t{i}" for i in range(n)])
    pairs = np.array([[kg_s.entity_index[f"s{i}"], kg_t.entity_index[f"t{i}"]] for i in range(n)])
    return kg_s, kg_t, AlignmentSet(pairs)


def test_iscs_twins_reproduce_the_partition():
    kg_s, kg_t, al = _community_twins()
    seed, _ = split_seed(al, 0.3, 0)
    fs = np.random.default_rng(1).normal(size=(kg_s.num_entities, 16)).astype(np.float32)
    ft = np.empty_like(fs)
    ft[al.target] = fs[al.source]
    f = EmbeddingMatrix(np.vstack([fs, ft]), len(fs), len(ft))
    for direction in ("s2t", "t2s"):
        a = iscs(kg_s, kg_t, f, seed, PartitionerConfig(k=5), direction)
        assert overlap(a, al) >= 0.9


def test_iscs_k_one():
    task, seed = _twin_task(100)
    a = iscs(task.kg_s, task.kg_t, _twin_features(task), seed, PartitionerConfig(k=1))
    assert overlap(a, task.alignment) == 1.0


def test_gcn_classifier_fits_its_training_nodes():
    task, seed = _twin_task(300)
    adj = build_weighted_adjacency(task.kg_t)
    f = _twin_features(task)
    labels = np.random.default_rng(0).integers(4, size=len(seed))
    _, acc = gcn_classify(adj, f.target, seed.target, labels, 4, 300, 0.01, 128, np.random.default_rng(0))
    assert acc >= 0.8


def test_samplers_are_deterministic_given_the_seed():
    task = generate_synthetic(SyntheticSpec(n_entities=300, rng_seed=6))
    seed, _ = split_seed(task.alignment, 0.3, 0)
    f = EmbeddingMatrix(np.random.default_rng(1).normal(size=(600, 8)).astype(np.float32), 300, 300)
    cfg = PartitionerConfig(k=4, gcn_classifier_epochs=50, rng_seed=9)
    for name in ("vps", "metis-cps", "metis-cps-t2s", "cmcs", "iscs", "iscs-t2s"):
        a = run_sampler(name, task.kg_s, task.kg_t, f, seed, cfg)
        b = run_sampler(name, task.kg_s, task.kg_t, f, seed, cfg)
        assert np.array_equal(a.source_labels, b.source_labels), name
        assert np.array_equal(a.target_labels, b.target_labels), name
    with pytest.raises(ValueError):
        run_sampler("nope", task.kg_s, task.kg_t, f, seed, cfg)


def test_assignment_save_load_and_batches(tmp_path):
    a = BatchAssignment(3, [2, 0, 1, 0], [1, 1, 2])
    a.save(tmp_path, "x")
    b = BatchAssignment.load(tmp_path, "x", 3)
    assert np.array_equal(a.source_labels, b.source_labels) and np.array_equal(a.target_labels, b.target_labels)
    got = [(s.tolist(), t.tolist()) for s, t in a.batches()]
    assert got == [([1, 3], []), ([2], [0, 1]), ([0], [2])]
    assert np.array_equal(a.transposed().source_labels, a.target_labels)


def test_bad_labels_and_config_raise():
    with pytest.raises(ValueError):
        BatchAssignment(2, [0, 2], [0])
    with pytest.raises(ValueError):
        PartitionerConfig(k=0)
    with pytest.raises(ValueError):
        PartitionerConfig(classifier="svm")
