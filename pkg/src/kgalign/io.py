"""On-disk formats for embeddings and stage artifacts."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .kg import KnowledgeGraph, WeightedAdjacency
from .train import EmbeddingMatrix

EMBED_MAGIC = b"KGEMBED1"


def save_embeddings(f: EmbeddingMatrix, path: str | Path, kg_s: KnowledgeGraph | None = None,
                    kg_t: KnowledgeGraph | None = None) -> None:
    """Little-endian float32 matrix behind a (magic, rows, dim) header.

    A sidecar ``<path>.ids`` maps each row to its side and entity label.
    """
    path = Path(path)
    data = np.ascontiguousarray(f.data, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(EMBED_MAGIC)
        fh.write(struct.pack("<qqq", data.shape[0], data.shape[1], f.num_source))
        fh.write(data.tobytes())
    src = kg_s.entity_labels if kg_s is not None else [str(i) for i in range(f.num_source)]
    tgt = kg_t.entity_labels if kg_t is not None else [str(i) for i in range(f.num_target)]
    with open(str(path) + ".ids", "w", encoding="utf-8") as fh:
        fh.writelines(f"{i}\tsource\t{lab}\n" for i, lab in enumerate(src))
        fh.writelines(f"{f.num_source + i}\ttarget\t{lab}\n" for i, lab in enumerate(tgt))


def load_embeddings(path: str | Path) -> EmbeddingMatrix:
    raw = Path(path).read_bytes()
    if raw[:8] != EMBED_MAGIC:
        raise ValueError(f"{path}: not an embedding file")
    rows, dim, num_source = struct.unpack("<qqq", raw[8:32])
    if len(raw) != 32 + 4 * rows * dim:
        raise ValueError(f"{path}: truncated embedding file")
    data = np.frombuffer(raw, "<f4", rows * dim, 32).reshape(rows, dim).astype(np.float32)
    return EmbeddingMatrix(data, int(num_source), int(rows - num_source))


def save_adjacency(adjs: tuple[WeightedAdjacency, WeightedAdjacency], path: str | Path) -> None:
    arrays = {}
    for side, a in zip(("s", "t"), adjs):
        m = a.matrix.tocsr()
        arrays.update({f"{side}_data": m.data, f"{side}_indices": m.indices, f"{side}_indptr": m.indptr,
                       f"{side}_shape": np.array(m.shape), f"{side}_fun": a.fun, f"{side}_ifun": a.ifun,
                       f"{side}_self_loop": np.array(a.self_loop)})
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_adjacency(path: str | Path) -> tuple[WeightedAdjacency, WeightedAdjacency]:
    z = np.load(path)
    out = []
    for side in ("s", "t"):
        m = sp.csr_matrix((z[f"{side}_data"], z[f"{side}_indices"], z[f"{side}_indptr"]),
                          shape=tuple(z[f"{side}_shape"]))
        out.append(WeightedAdjacency(m, z[f"{side}_fun"], z[f"{side}_ifun"], float(z[f"{side}_self_loop"])))
    return out[0], out[1]
