"""Knowledge-graph data model, OpenEA-style file ingestion and adjacency weights."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class KGFormatError(ValueError):
    """Malformed or empty triple / link file."""


class AlignmentError(ValueError):
    """Alignment pairs that cannot be resolved or break the 1-to-1 constraint."""


@dataclass(frozen=True, eq=False)
class KnowledgeGraph:
    """Entities, relations and (head, relation, tail) id triples.

    Ids are dense and assigned in first-seen order. ``entity_labels`` may list
    entities that occur in no triple (isolated entities are legal).
    """

    entity_labels: tuple[str, ...]
    relation_labels: tuple[str, ...]
    triples: np.ndarray  # (T, 3) int64: head, relation, tail

    def __post_init__(self):
        t = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)
        t.setflags(write=False)
        object.__setattr__(self, "triples", t)
        if len(t):
            if t[:, [0, 2]].min() < 0 or t[:, [0, 2]].max() >= self.num_entities:
                raise KGFormatError("triple references an entity id out of range")
            if t[:, 1].min() < 0 or t[:, 1].max() >= self.num_relations:
                raise KGFormatError("triple references a relation id out of range")

    @property
    def num_entities(self) -> int:
        return len(self.entity_labels)

    @property
    def num_relations(self) -> int:
        return len(self.relation_labels)

    @property
    def num_triples(self) -> int:
        return len(self.triples)

    @cached_property
    def entity_index(self) -> dict[str, int]:
        return {label: i for i, label in enumerate(self.entity_labels)}

    @cached_property
    def relation_index(self) -> dict[str, int]:
        return {label: i for i, label in enumerate(self.relation_labels)}

    @classmethod
    def from_labeled_triples(
        cls,
        triples: Iterable[tuple[str, str, str]],
        entities: Iterable[str] = (),
    ) -> "KnowledgeGraph":
        """Assign ids in first-seen order; ``entities`` are registered first."""
        ent: dict[str, int] = {}
        rel: dict[str, int] = {}
        for e in entities:
            ent.setdefault(e, len(ent))
        seen: set[tuple[int, int, int]] = set()
        rows: list[tuple[int, int, int]] = []
        for h, r, t in triples:
            key = (ent.setdefault(h, len(ent)), rel.setdefault(r, len(rel)), ent.setdefault(t, len(ent)))
            if key not in seen:
                seen.add(key)
                rows.append(key)
        return cls(tuple(ent), tuple(rel), np.array(rows, dtype=np.int64).reshape(-1, 3))

    def labeled_triples(self) -> list[tuple[str, str, str]]:
        e, r = self.entity_labels, self.relation_labels
        return [(e[h], r[rr], e[t]) for h, rr, t in self.triples.tolist()]


@dataclass(frozen=True, eq=False)
class AlignmentSet:
    """1-to-1 entity pairs (source id, target id)."""

    pairs: np.ndarray  # (n, 2) int64
    role: str = "all"

    def __post_init__(self):
        p = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        p.setflags(write=False)
        object.__setattr__(self, "pairs", p)
        for side, name in ((0, "source"), (1, "target")):
            ids, counts = np.unique(p[:, side], return_counts=True)
            if (counts > 1).any():
                raise AlignmentError(
                    f"alignment violates 1-to-1: {name} entity {int(ids[counts > 1][0])} appears twice"
                )

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def source(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def target(self) -> np.ndarray:
        return self.pairs[:, 1]


@dataclass(frozen=True, eq=False)
class WeightedAdjacency:
    """GCNAlign-style influence weights over one KG, with unit self-loops.

    ``matrix[i, j]`` is the influence of entity i over entity j.
    """

    matrix: sp.csr_matrix
    fun: np.ndarray
    ifun: np.ndarray
    self_loop: float = 1.0

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]

    def without_self_loops(self) -> sp.csr_matrix:
        m = self.matrix.tocoo()
        keep = m.row != m.col
        return sp.csr_matrix((m.data[keep], (m.row[keep], m.col[keep])), shape=m.shape)

    @cached_property
    def in_weights(self) -> sp.csr_matrix:
        """Row v holds the weights a_uv of every u that influences v."""
        return self.matrix.T.tocsr()


def _read_tsv(path: Path, width: int) -> list[list[str]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise KGFormatError(f"cannot read {path}: {exc}") from exc
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.rstrip("\r\n").split("\t")
        if len(fields) != width:
            raise KGFormatError(
                f"{path}:{lineno}: expected {width} tab-separated fields, got {len(fields)}"
            )
        rows.append(fields)
    return rows


def load_kg(triples_path: str | Path, entities_path: str | Path | None = None) -> KnowledgeGraph:
    """Read ``head<TAB>relation<TAB>tail`` lines.

    ``entities_path`` optionally lists one entity label per line, so that
    entities without any triple survive a save/load round trip.
    """
    rows = _read_tsv(triples_path, 3)
    if not rows:
        raise KGFormatError(f"{triples_path}: no triples")
    entities: list[str] = []
    if entities_path is not None:
        entities = [r[0] for r in _read_tsv(entities_path, 1)]
    return KnowledgeGraph.from_labeled_triples(rows, entities)


def save_kg(kg: KnowledgeGraph, triples_path: str | Path, entities_path: str | Path | None = None) -> None:
    with open(triples_path, "w", encoding="utf-8") as fh:
        for h, r, t in kg.labeled_triples():
            fh.write(f"{h}\t{r}\t{t}\n")
    if entities_path is not None:
        with open(entities_path, "w", encoding="utf-8") as fh:
            fh.writelines(f"{e}\n" for e in kg.entity_labels)


def load_alignment(links_path: str | Path, kg_s: KnowledgeGraph, kg_t: KnowledgeGraph) -> AlignmentSet:
    pairs = []
    for src, tgt in _read_tsv(links_path, 2):
        try:
            s = kg_s.entity_index[src]
        except KeyError:
            raise AlignmentError(f"unknown source entity {src!r}") from None
        try:
            t = kg_t.entity_index[tgt]
        except KeyError:
            raise AlignmentError(f"unknown target entity {tgt!r}") from None
        pairs.append((s, t))
    return AlignmentSet(np.array(pairs, dtype=np.int64).reshape(-1, 2))


def save_alignment(alignment: AlignmentSet, links_path: str | Path, kg_s: KnowledgeGraph, kg_t: KnowledgeGraph) -> None:
    with open(links_path, "w", encoding="utf-8") as fh:
        for s, t in alignment.pairs.tolist():
            fh.write(f"{kg_s.entity_labels[s]}\t{kg_t.entity_labels[t]}\n")


def split_seed(alignment: AlignmentSet, ratio: float, rng_seed: int) -> tuple[AlignmentSet, AlignmentSet]:
    """Random seed/test split with ``round(ratio * n)`` seed pairs."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"train ratio must lie in (0, 1), got {ratio}")
    n = len(alignment)
    if n == 0:
        raise ValueError("cannot split an empty alignment")
    n_seed = int(np.floor(ratio * n + 0.5))
    perm = np.random.default_rng(rng_seed).permutation(n)
    pairs = alignment.pairs
    return (
        AlignmentSet(pairs[np.sort(perm[:n_seed])], role="seed"),
        AlignmentSet(pairs[np.sort(perm[n_seed:])], role="test"),
    )


def relation_functionality(kg: KnowledgeGraph) -> tuple[np.ndarray, np.ndarray]:
    """Return (fun, ifun): distinct heads / triples and distinct tails / triples per relation."""
    h, r, t = kg.triples.T
    n_rel, n_ent = kg.num_relations, kg.num_entities
    n_triples = np.bincount(r, minlength=n_rel)
    heads = np.bincount(np.unique(r * n_ent + h) // n_ent, minlength=n_rel)
    tails = np.bincount(np.unique(r * n_ent + t) // n_ent, minlength=n_rel)
    # relations with zero triples never contribute a weight; keep them at 1
    denom = np.maximum(n_triples, 1)
    fun = np.where(n_triples > 0, heads / denom, 1.0)
    ifun = np.where(n_triples > 0, tails / denom, 1.0)
    return fun, ifun


def build_weighted_adjacency(kg: KnowledgeGraph, self_loop: float = 1.0) -> WeightedAdjacency:
    """a_ij = sum ifun(r) over (e_i, r, e_j) + sum fun(r) over (e_j, r, e_i), plus a self-loop."""
    if kg.num_triples == 0:
        raise ValueError("knowledge graph has no triples")
    fun, ifun = relation_functionality(kg)
    h, r, t = kg.triples.T
    n = kg.num_entities
    diag = np.arange(n)
    rows = np.concatenate([h, t, diag])
    cols = np.concatenate([t, h, diag])
    vals = np.concatenate([ifun[r], fun[r], np.full(n, self_loop)])
    m = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    m.sum_duplicates()
    m.sort_indices()
    return WeightedAdjacency(m, fun, ifun, self_loop)


def union_adjacency(adjs: Sequence[WeightedAdjacency]) -> sp.csr_matrix:
    """Block-diagonal adjacency of several KGs (source block first)."""
    return sp.block_diag([a.matrix for a in adjs], format="csr")


@dataclass
class AlignmentTask:
    """A source KG, a target KG, and the ground-truth alignment between them."""

    kg_s: KnowledgeGraph
    kg_t: KnowledgeGraph
    alignment: AlignmentSet
    meta: dict = field(default_factory=dict)
