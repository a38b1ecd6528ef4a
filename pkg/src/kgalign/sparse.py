"""Coordinate-format similarity matrices with coalescing addition."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

MAGIC = b"KGSIMCOO"


@dataclass(frozen=True, eq=False)
class SparseSimMatrix:
    """Row-major sorted, duplicate-free COO matrix with no explicit zeros."""

    shape: tuple[int, int]
    row: np.ndarray
    col: np.ndarray
    val: np.ndarray

    @classmethod
    def from_coo(cls, row, col, val, shape: tuple[int, int], *, coalesce: bool = True) -> "SparseSimMatrix":
        row = np.asarray(row, dtype=np.int64).ravel()
        col = np.asarray(col, dtype=np.int64).ravel()
        val = np.asarray(val, dtype=np.float64).ravel()
        if not (len(row) == len(col) == len(val)):
            raise ValueError("row, col and val must have equal length")
        n_rows, n_cols = shape
        if len(row) and (row.min() < 0 or row.max() >= n_rows or col.min() < 0 or col.max() >= n_cols):
            raise ValueError(f"coordinates out of bounds for shape {shape}")
        if not np.isfinite(val).all():
            raise ValueError("similarity values must be finite")
        if coalesce and len(row):
            key = row * n_cols + col
            order = np.argsort(key, kind="stable")
            key = key[order]
            starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
            val = np.add.reduceat(val[order], starts)
            key = key[starts]
            row, col = key // n_cols, key % n_cols
        keep = val != 0
        if not keep.all():
            row, col, val = row[keep], col[keep], val[keep]
        return cls((int(n_rows), int(n_cols)), row, col, val)

    @classmethod
    def empty(cls, shape: tuple[int, int]) -> "SparseSimMatrix":
        z = np.empty(0, dtype=np.int64)
        return cls((int(shape[0]), int(shape[1])), z, z.copy(), np.empty(0))

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> "SparseSimMatrix":
        r, c = np.nonzero(dense)
        return cls.from_coo(r, c, dense[r, c], dense.shape)

    @classmethod
    def from_scipy(cls, m) -> "SparseSimMatrix":
        m = sp.coo_matrix(m)
        return cls.from_coo(m.row, m.col, m.data, m.shape)

    @property
    def nnz(self) -> int:
        return len(self.val)

    @property
    def indptr(self) -> np.ndarray:
        return np.searchsorted(self.row, np.arange(self.shape[0] + 1))

    def __add__(self, other: "SparseSimMatrix") -> "SparseSimMatrix":
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        return SparseSimMatrix.from_coo(np.concatenate([self.row, other.row]),
                                        np.concatenate([self.col, other.col]),
                                        np.concatenate([self.val, other.val]), self.shape)

    @property
    def T(self) -> "SparseSimMatrix":
        return SparseSimMatrix.from_coo(self.col, self.row, self.val, (self.shape[1], self.shape[0]))

    def with_values(self, val: np.ndarray) -> "SparseSimMatrix":
        """Same support, new values (zeros are kept as stored structure)."""
        return SparseSimMatrix(self.shape, self.row, self.col, np.asarray(val, dtype=np.float64))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row, self.col] = self.val
        return out

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.val, (self.row, self.col)), shape=self.shape)

    def row_argmax(self) -> np.ndarray:
        """Column of the largest value per row (lowest column on ties, -1 for empty rows)."""
        out = np.full(self.shape[0], -1, dtype=np.int64)
        if self.nnz == 0:
            return out
        order = np.lexsort((self.col, -self.val, self.row))
        first = np.r_[True, self.row[order][1:] != self.row[order][:-1]]
        out[self.row[order][first]] = self.col[order][first]
        return out

    # persistence ---------------------------------------------------------
    def save_text(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# shape\t{self.shape[0]}\t{self.shape[1]}\tnnz\t{self.nnz}\n")
            block = 1 << 18
            for i in range(0, self.nnz, block):
                r, c, v = self.row[i:i + block], self.col[i:i + block], self.val[i:i + block]
                fh.write("".join(f"{a}\t{b}\t{x!r}\n" for a, b, x in zip(r.tolist(), c.tolist(), v.tolist())))

    @classmethod
    def load_text(cls, path: str | Path) -> "SparseSimMatrix":
        with open(path) as fh:
            header = fh.readline().split("\t")
            if header[0] != "# shape":
                raise ValueError(f"{path}: missing shape header")
            shape = (int(header[1]), int(header[2]))
            if int(header[4]) == 0:
                return cls.empty(shape)
            data = np.loadtxt(fh, delimiter="\t", ndmin=2)
        return cls.from_coo(data[:, 0].astype(np.int64), data[:, 1].astype(np.int64), data[:, 2], shape)

    def save_binary(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<qqq", self.shape[0], self.shape[1], self.nnz))
            fh.write(self.row.astype("<i8").tobytes())
            fh.write(self.col.astype("<i8").tobytes())
            fh.write(self.val.astype("<f8").tobytes())

    @classmethod
    def load_binary(cls, path: str | Path) -> "SparseSimMatrix":
        raw = Path(path).read_bytes()
        if raw[:8] != MAGIC:
            raise ValueError(f"{path}: not a sparse similarity file")
        n_rows, n_cols, nnz = struct.unpack("<qqq", raw[8:32])
        off = 32
        row = np.frombuffer(raw, "<i8", nnz, off)
        col = np.frombuffer(raw, "<i8", nnz, off + 8 * nnz)
        val = np.frombuffer(raw, "<f8", nnz, off + 16 * nnz)
        return cls((n_rows, n_cols), row.astype(np.int64), col.astype(np.int64), val.astype(np.float64))
