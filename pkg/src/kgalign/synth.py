"""Desk-scale synthetic alignment benchmark: two noisy copies of one base KG."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .kg import AlignmentSet, AlignmentTask, KnowledgeGraph

log = logging.getLogger(__name__)


@dataclass
class SyntheticSpec:
    n_entities: int = 5000
    n_relations: int = 50
    avg_degree: float = 6.0
    edge_dropout: float = 0.15
    relation_remap_prob: float = 0.05
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_entities < 10:
            raise ValueError("n_entities must be >= 10")
        if self.avg_degree < 1:
            raise ValueError("avg_degree must be >= 1")
        if not 0.0 <= self.edge_dropout < 1.0:
            raise ValueError("edge_dropout must lie in [0, 1)")
        if not 0.0 <= self.relation_remap_prob <= 1.0:
            raise ValueError("relation_remap_prob must lie in [0, 1]")
        if self.n_relations < 1:
            raise ValueError("n_relations must be >= 1")


def preferential_attachment(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Barabasi-Albert edge list (n nodes, m edges per arriving node)."""
    m = max(1, min(m, n - 1))
    edges = [(i, j) for i in range(m + 1) for j in range(i)]
    # every endpoint occurrence doubles as a sampling ticket
    tickets = [v for e in edges for v in e]
    for v in range(m + 1, n):
        chosen: set[int] = set()
        while len(chosen) < m:
            chosen.add(tickets[int(rng.integers(len(tickets)))])
        for u in chosen:
            edges.append((v, u))
            tickets.extend((v, u))
    return np.array(edges, dtype=np.int64)


def _base_triples(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    m = max(1, int(round(spec.avg_degree / 2)))
    edges = preferential_attachment(spec.n_entities, m, rng)
    flip = rng.random(len(edges)) < 0.5
    edges[flip] = edges[flip][:, ::-1]
    # Zipf-like relation frequencies so functionality scores vary
    p = 1.0 / np.arange(1, spec.n_relations + 1)
    rel = rng.choice(spec.n_relations, size=len(edges), p=p / p.sum())
    return np.column_stack([edges[:, 0], rel, edges[:, 1]])


def _noisy_copy(base: np.ndarray, spec: SyntheticSpec, prefix: str,
                rng: np.random.Generator) -> tuple[KnowledgeGraph, np.ndarray]:
    keep = rng.random(len(base)) >= spec.edge_dropout
    tri = base[keep].copy()
    remap = rng.random(len(tri)) < spec.relation_remap_prob
    tri[remap, 1] = rng.integers(spec.n_relations, size=int(remap.sum()))
    tri = tri[rng.permutation(len(tri))]
    order = rng.permutation(spec.n_entities)
    entities = [f"{prefix}/e{i}" for i in order]
    labeled = [(f"{prefix}/e{h}", f"{prefix}/r{r}", f"{prefix}/e{t}") for h, r, t in tri.tolist()]
    return KnowledgeGraph.from_labeled_triples(labeled, entities), keep


def generate_synthetic(spec: SyntheticSpec) -> AlignmentTask:
    """Two independently perturbed, independently relabelled copies of a base KG.

    The ground-truth alignment is the identity on base entities.
    """
    rng = np.random.default_rng(spec.rng_seed)
    base = _base_triples(spec, rng)
    kg_s, keep_s = _noisy_copy(base, spec, "src", rng)
    kg_t, keep_t = _noisy_copy(base, spec, "tgt", rng)
    ids = np.arange(spec.n_entities)
    pairs = np.column_stack([
        [kg_s.entity_index[f"src/e{i}"] for i in ids],
        [kg_t.entity_index[f"tgt/e{i}"] for i in ids],
    ])
    for kg, name in ((kg_s, "source"), (kg_t, "target")):
        if kg.num_triples == 0:
            warnings.warn(f"synthetic {name} KG has no triples", RuntimeWarning, stacklevel=2)
    return AlignmentTask(kg_s, kg_t, AlignmentSet(pairs), meta={
        "base_edges": len(base),
        "kept_source": int(keep_s.sum()),
        "kept_target": int(keep_t.sum()),
    })
