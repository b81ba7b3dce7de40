"""Compressed sparse matrix storage with sorted indices, in row or column major.

Dense vectors are plain 1-D numpy arrays throughout the package.  Matrices are
immutable after construction; every constructor runs (or preserves) the
structural invariants checked by :meth:`CompressedMatrix.validate`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Supported scalar kinds.  Factorizations may be computed in a narrower kind
# than the input (mixed precision); complex inputs require a complex kind.
SCALAR_KINDS = (np.float32, np.float64, np.complex128)

INDEX_DTYPE = np.int32  # 32-bit indices; all supported problem sizes fit

ROW_MAJOR = "row"
COL_MAJOR = "col"


def is_complex_kind(dtype) -> bool:
    return np.issubdtype(np.dtype(dtype), np.complexfloating)


def conjugate(values: np.ndarray) -> np.ndarray:
    """Conjugation; an involution, and the identity on real scalars."""
    return np.conj(values)


def magnitude(values: np.ndarray) -> np.ndarray:
    """Nonnegative magnitude of scalars of any supported kind."""
    return np.abs(values)


def as_vector(x, n: int, dtype=None) -> np.ndarray:
    """Validate/convert ``x`` into a length-``n`` 1-D numpy vector."""
    v = np.asarray(x, dtype=dtype)
    if v.ndim != 1 or v.shape[0] != n:
        raise ValueError(f"expected a vector of length {n}, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class CompressedMatrix:
    """Sparse matrix in compressed row- or column-major form.

    ``offsets`` has length primary-dim + 1; ``indices``/``values`` hold the
    secondary-dimension positions and entries of each primary slice, with
    strictly increasing indices inside each slice and no duplicates.
    """

    orientation: str
    nrows: int
    ncols: int
    offsets: np.ndarray
    indices: np.ndarray
    values: np.ndarray

    @property
    def primary_dim(self) -> int:
        return self.nrows if self.orientation == ROW_MAJOR else self.ncols

    @property
    def secondary_dim(self) -> int:
        return self.ncols if self.orientation == ROW_MAJOR else self.nrows

    @property
    def nnz(self) -> int:
        return int(self.values.shape[0])

    @property
    def dtype(self):
        return self.values.dtype

    def slice(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Indices and values of primary slice ``k`` (views, do not mutate)."""
        s, e = self.offsets[k], self.offsets[k + 1]
        return self.indices[s:e], self.values[s:e]

    def validate(self) -> None:
        """Full structural audit; raises ``ValueError`` on any violation."""
        pd, sd = self.primary_dim, self.secondary_dim
        if self.offsets.shape[0] != pd + 1:
            raise ValueError("offsets length mismatch")
        if self.offsets[0] != 0 or self.offsets[-1] != len(self.indices):
            raise ValueError("offsets endpoints invalid")
        if np.any(np.diff(self.offsets) < 0):
            raise ValueError("offsets must be nondecreasing")
        if len(self.indices) != len(self.values):
            raise ValueError("indices/values length mismatch")
        if self.nnz:
            if self.indices.min() < 0 or self.indices.max() >= sd:
                raise ValueError("secondary index out of range")
        for k in range(pd):
            idx, _ = self.slice(k)
            if idx.size > 1 and np.any(np.diff(idx) <= 0):
                raise ValueError(f"slice {k}: indices not strictly increasing")

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.nrows, self.ncols), dtype=self.values.dtype)
        for k in range(self.primary_dim):
            idx, val = self.slice(k)
            if self.orientation == ROW_MAJOR:
                out[k, idx] = val
            else:
                out[idx, k] = val
        return out

    def astype(self, dtype) -> "CompressedMatrix":
        if np.dtype(dtype) == self.values.dtype:
            return self
        return CompressedMatrix(self.orientation, self.nrows, self.ncols,
                                self.offsets, self.indices,
                                self.values.astype(dtype))


def from_arrays(orientation: str, nrows: int, ncols: int, offsets, indices,
                values, check: bool = True) -> CompressedMatrix:
    m = CompressedMatrix(orientation, int(nrows), int(ncols),
                         np.asarray(offsets, dtype=np.int64),
                         np.asarray(indices, dtype=INDEX_DTYPE),
                         np.asarray(values))
    if check:
        m.validate()
    return m


def from_triplets(nrows: int, ncols: int, entries, orientation: str = ROW_MAJOR,
                  dtype=None) -> CompressedMatrix:
    """Assemble from ``(i, j, value)`` triplets; duplicates are summed.

    Explicitly stored zeros (including duplicates cancelling to zero) are
    kept, preserving the caller's sparsity pattern.
    """
    entries = list(entries)
    n = len(entries)
    ii = np.fromiter((e[0] for e in entries), dtype=np.int64, count=n)
    jj = np.fromiter((e[1] for e in entries), dtype=np.int64, count=n)
    vv = np.asarray([e[2] for e in entries], dtype=dtype) if n else \
        np.zeros(0, dtype=dtype or np.float64)
    if n and (ii.min() < 0 or ii.max() >= nrows or jj.min() < 0 or jj.max() >= ncols):
        raise IndexError("triplet index out of range")
    if orientation == ROW_MAJOR:
        prim, sec, pd = ii, jj, nrows
    else:
        prim, sec, pd = jj, ii, ncols
    order = np.lexsort((sec, prim))
    prim, sec, vv = prim[order], sec[order], vv[order]
    if n:
        new_group = np.empty(n, dtype=bool)
        new_group[0] = True
        new_group[1:] = (prim[1:] != prim[:-1]) | (sec[1:] != sec[:-1])
        starts = np.flatnonzero(new_group)
        summed = np.add.reduceat(vv, starts)
        prim, sec = prim[starts], sec[starts]
    else:
        summed = vv
    offsets = np.zeros(pd + 1, dtype=np.int64)
    np.add.at(offsets, prim + 1, 1)
    np.cumsum(offsets, out=offsets)
    return from_arrays(orientation, nrows, ncols, offsets, sec, summed, check=False)


def identity(n: int, orientation: str = ROW_MAJOR, dtype=np.float64) -> CompressedMatrix:
    return from_arrays(orientation, n, n, np.arange(n + 1), np.arange(n),
                       np.ones(n, dtype=dtype), check=False)


def convert(m: CompressedMatrix, target_orientation: str) -> CompressedMatrix:
    """Same logical matrix in the other orientation; an exact involution."""
    if m.orientation == target_orientation:
        return m
    pd_new = m.nrows if target_orientation == ROW_MAJOR else m.ncols
    # stable counting sort by secondary index keeps within-slice order sorted
    # and copies values bitwise
    prim_of_entry = np.repeat(np.arange(m.primary_dim, dtype=INDEX_DTYPE),
                              np.diff(m.offsets))
    order = np.argsort(m.indices, kind="stable")
    new_indices = prim_of_entry[order]
    new_values = m.values[order]
    offsets = np.zeros(pd_new + 1, dtype=np.int64)
    np.add.at(offsets, m.indices.astype(np.int64) + 1, 1)
    np.cumsum(offsets, out=offsets)
    return from_arrays(target_orientation, m.nrows, m.ncols, offsets,
                       new_indices, new_values, check=False)


def _scatter_sum(idx: np.ndarray, weights: np.ndarray, n: int) -> np.ndarray:
    """Sum ``weights`` into bins ``idx``; complex-safe bincount."""
    if np.iscomplexobj(weights):
        re = np.bincount(idx, weights=weights.real, minlength=n)
        im = np.bincount(idx, weights=weights.imag, minlength=n)
        return re + 1j * im
    return np.bincount(idx, weights=weights, minlength=n)


def spmv(m: CompressedMatrix, x: np.ndarray, adjoint: bool = False) -> np.ndarray:
    """y = A x, or y = A^H x (conjugate transpose) when ``adjoint``."""
    n_in, n_out = (m.nrows, m.ncols) if adjoint else (m.ncols, m.nrows)
    x = as_vector(x, n_in)
    row_like = (m.orientation == ROW_MAJOR) != adjoint
    vals = conjugate(m.values) if adjoint else m.values
    if row_like:
        # reduce products per primary slice (gather direction)
        prods = vals * x[m.indices]
        y = np.zeros(n_out, dtype=np.result_type(m.values.dtype, x.dtype))
        if prods.size:
            nonempty = np.flatnonzero(np.diff(m.offsets) > 0)
            y[nonempty] = np.add.reduceat(prods, m.offsets[nonempty])
        return y
    # scatter direction
    prods = vals * np.repeat(x, np.diff(m.offsets))
    y = _scatter_sum(m.indices, prods, n_out)
    return y.astype(np.result_type(m.values.dtype, x.dtype), copy=False)


def pattern_symmetry_ratio(m: CompressedMatrix) -> float:
    """Fraction of stored off-diagonal positions whose mirror is also stored.

    Returns 1.0 when the off-diagonal set is empty.
    """
    if m.nrows != m.ncols:
        raise ValueError("pattern symmetry is defined for square matrices only")
    prim = np.repeat(np.arange(m.primary_dim, dtype=np.int64), np.diff(m.offsets))
    sec = m.indices.astype(np.int64)
    off = prim != sec
    if not np.any(off):
        return 1.0
    n = m.nrows
    keys = np.sort(prim[off] * n + sec[off])
    mirror = sec[off] * n + prim[off]
    hits = np.isin(mirror, keys)
    return float(np.count_nonzero(hits)) / float(keys.size)
