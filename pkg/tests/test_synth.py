import numpy as np
import pytest

from kgalign.kg import build_weighted_adjacency
from kgalign.synth import SyntheticSpec, generate_synthetic, preferential_attachment


def _edge_set(kg, prefix):
    lab = kg.entity_labels
    rel = kg.relation_labels
    return {(lab[h][len(prefix):], rel[r][len(prefix):], lab[t][len(prefix):]) for h, r, t in kg.triples.tolist()}


def test_zero_noise_gives_isomorphic_copies():
    task = generate_synthetic(SyntheticSpec(n_entities=300, edge_dropout=0.0, relation_remap_prob=0.0, rng_seed=3))
    assert _edge_set(task.kg_s, "src/") == _edge_set(task.kg_t, "tgt/")
    a_s = build_weighted_adjacency(task.kg_s).matrix.toarray()
    a_t = build_weighted_adjacency(task.kg_t).matrix.toarray()
    s, t = task.alignment.source, task.alignment.target
    assert np.array_equal(a_s[np.ix_(s, s)], a_t[np.ix_(t, t)])


def test_alignment_covers_every_entity_one_to_one():
    task = generate_synthetic(SyntheticSpec(n_entities=500, rng_seed=1))
    assert len(task.alignment) == 500
    assert len(set(task.alignment.source.tolist())) == 500 == len(set(task.alignment.target.tolist()))
    assert task.kg_s.num_entities == task.kg_t.num_entities == 500


def test_edge_dropout_keeps_expected_fraction():
    p, n = 0.2, 2000
    task = generate_synthetic(SyntheticSpec(n_entities=n, edge_dropout=p, rng_seed=5))
    base = task.meta["base_edges"]
    sigma = np.sqrt(base * p * (1 - p))
    for kept in (task.meta["kept_source"], task.meta["kept_target"]):
        assert abs(kept - (1 - p) * base) <= 3 * sigma


def test_preferential_attachment_edge_count():
    edges = preferential_attachment(100, 3, np.random.default_rng(0))
    # a 4-clique seed, then 3 edges for each of the 96 later nodes
    assert len(edges) == 6 + 96 * 3
    assert len({tuple(sorted(e)) for e in edges.tolist()}) == len(edges)
    assert (edges[:, 0] != edges[:, 1]).all()


def test_same_seed_same_task():
    a = generate_synthetic(SyntheticSpec(n_entities=100, rng_seed=9))
    b = generate_synthetic(SyntheticSpec(n_entities=100, rng_seed=9))
    assert np.array_equal(a.kg_s.triples, b.kg_s.triples) and np.array_equal(a.kg_t.triples, b.kg_t.triples)


@pytest.mark.parametrize("bad", [{"n_entities": 5}, {"edge_dropout": 1.0}, {"relation_remap_prob": 1.5},
                                 {"avg_degree": 0.5}, {"n_relations": 0}])
def test_invalid_specs_raise(bad):
    with pytest.raises(ValueError):
        SyntheticSpec(**bad)
