"""Per-level preprocessing: equilibration, scaling symmetrization, static
deferring of near-zero diagonals, and fill-reduction reordering.

Equilibration computes a max-product bipartite matching by shortest
augmenting paths on -log|a_ij| costs; the dual variables provide row/column
scalings that put matched entries at magnitude one and everything else at
most one.  Structurally singular inputs degrade gracefully: unmatched
rows/columns keep unit scales and the permutation is completed in index
order.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee

from .sparse import (COL_MAJOR, ROW_MAJOR, CompressedMatrix, convert,
                     pattern_symmetry_ratio)


@dataclass
class Preprocessed:
    row_scale: np.ndarray      # W, positive
    col_scale: np.ndarray      # V, positive
    row_perm: np.ndarray       # p: logical position -> input row
    col_perm: np.ndarray       # q: logical position -> input column
    n1: int                    # leading-block dimension after static deferring
    symmetric_mode: bool
    structurally_singular: bool = False


def _to_scipy_csr(m: CompressedMatrix) -> sp.csr_matrix:
    r = m if m.orientation == ROW_MAJOR else convert(m, ROW_MAJOR)
    return sp.csr_matrix((np.abs(r.values), r.indices, r.offsets),
                         shape=(m.nrows, m.ncols))


def equilibrate(a: CompressedMatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    """Max-product matching equilibration.

    Returns (W, V, p, structurally_singular) such that row t of the permuted
    scaled matrix W[p]·A[p,:]·V has a unit-magnitude diagonal entry and no
    entry larger than one (up to roundoff), whenever a perfect matching on
    the nonzero pattern exists.
    """
    if a.nrows != a.ncols:
        raise ValueError("equilibration requires a square matrix")
    n = a.nrows
    ar = a if a.orientation == ROW_MAJOR else convert(a, ROW_MAJOR)
    # cost of using entry (i, j): -log|a_ij|; +inf for zeros
    INF = np.inf
    cols: list[np.ndarray] = []
    costs: list[np.ndarray] = []
    for i in range(n):
        idx, val = ar.slice(i)
        mag = np.abs(val)
        keep = mag > 0.0
        cols.append(idx[keep].astype(np.int64))
        with np.errstate(divide="ignore"):
            costs.append(-np.log(mag[keep]))

    u = np.array([c.min() if c.size else 0.0 for c in costs])
    v = np.zeros(n)
    col_min = np.full(n, INF)
    for i in range(n):
        if cols[i].size:
            np.minimum.at(col_min, cols[i], costs[i] - u[i])
    v[np.isfinite(col_min)] = col_min[np.isfinite(col_min)]

    row_of_col = np.full(n, -1, dtype=np.int64)
    col_of_row = np.full(n, -1, dtype=np.int64)
    # greedy pass over tight edges
    for i in range(n):
        for t in range(cols[i].size):
            j = cols[i][t]
            if row_of_col[j] == -1 and abs(costs[i][t] - u[i] - v[j]) <= 1e-12:
                row_of_col[j] = i
                col_of_row[i] = j
                break

    singular = False
    for i0 in range(n):
        if col_of_row[i0] != -1:
            continue
        # Dijkstra over alternating paths from row i0 to the nearest free column
        dist = {}
        pred_row = {}
        heap = []
        for t in range(cols[i0].size):
            j = int(cols[i0][t])
            d = costs[i0][t] - u[i0] - v[j]
            if d < dist.get(j, INF):
                dist[j] = d
                pred_row[j] = i0
                heapq.heappush(heap, (d, j))
        visited = {}
        end_col = -1
        while heap:
            d, j = heapq.heappop(heap)
            if j in visited:
                continue
            visited[j] = d
            if row_of_col[j] == -1:
                end_col = j
                break
            i = int(row_of_col[j])
            for t in range(cols[i].size):
                j2 = int(cols[i][t])
                if j2 in visited:
                    continue
                d2 = d + costs[i][t] - u[i] - v[j2]
                if d2 < dist.get(j2, INF):
                    dist[j2] = d2
                    pred_row[j2] = i
                    heapq.heappush(heap, (d2, j2))
        if end_col == -1:
            singular = True
            continue
        lim = visited[end_col]
        # dual update keeps feasibility and makes the path tight
        for j, dj in visited.items():
            if dj < lim or j == end_col:
                i = int(row_of_col[j]) if row_of_col[j] != -1 else -1
                v[j] += dj - lim
                if i != -1:
                    u[i] -= dj - lim
        u[i0] += lim - 0.0
        # adjust: u of rows on tight alternating paths via matched cols
        # (handled above through their matched column's dual change)
        # augment along predecessor chain
        j = end_col
        while True:
            i = pred_row[j]
            prev_j = int(col_of_row[i]) if col_of_row[i] != -1 else -1
            row_of_col[j] = i
            col_of_row[i] = j
            if i == i0:
                break
            j = prev_j

    # scalings from duals: W_i = exp(u_i), V_j = exp(v_j)
    W = np.exp(u)
    V = np.exp(v)
    unmatched_rows = col_of_row == -1
    if np.any(unmatched_rows):
        singular = True
        W[unmatched_rows] = 1.0
        free_cols = np.flatnonzero(row_of_col == -1)
        V[free_cols] = 1.0
        for i, j in zip(np.flatnonzero(unmatched_rows), free_cols):
            col_of_row[i] = j
            row_of_col[j] = i
    # logical position t holds original row p[t] so that diagonal t is the
    # matched entry of column t
    p = row_of_col.copy()
    W = np.where(np.isfinite(W) & (W > 0), W, 1.0)
    V = np.where(np.isfinite(V) & (V > 0), V, 1.0)
    return W, V, p, singular


def symmetrize_scaling(W: np.ndarray, V: np.ndarray, p: np.ndarray,
                       pattern_symmetric: bool, beta: float
                       ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Symmetrize equilibration output.

    Pattern-symmetric mode sets W = V = sqrt(W V) and uses one symmetric
    permutation on both sides (the matching permutation's cycles laid out
    consecutively, keeping matched entries adjacent to the diagonal).
    Unsymmetric mode only safeguards wildly unbalanced scale pairs:
    whenever max(w_i, v_i)/min(w_i, v_i) > beta, both become sqrt(w_i v_i).
    """
    n = W.shape[0]
    if pattern_symmetric:
        s = np.sqrt(W * V)
        q = _cycle_order(p)
        return s, s.copy(), q, q.copy()
    W = W.copy()
    V = V.copy()
    hi = np.maximum(W, V)
    lo = np.minimum(W, V)
    bad = hi > beta * lo
    if np.any(bad):
        g = np.sqrt(W[bad] * V[bad])
        W[bad] = g
        V[bad] = g
    q = np.arange(n, dtype=np.int64)
    return W, V, p.copy(), q


def _cycle_order(p: np.ndarray) -> np.ndarray:
    """Lay out the cycles of permutation p consecutively (index order)."""
    n = p.shape[0]
    seen = np.zeros(n, dtype=bool)
    out = np.empty(n, dtype=np.int64)
    t = 0
    for s in range(n):
        if seen[s]:
            continue
        j = s
        while not seen[j]:
            seen[j] = True
            out[t] = j
            t += 1
            j = int(p[j])
    return out


def static_defer(a: CompressedMatrix, W: np.ndarray, V: np.ndarray,
                 p: np.ndarray, q: np.ndarray, tol_diag: float
                 ) -> tuple[int, np.ndarray, np.ndarray]:
    """Move slots with |scaled diagonal| <= tol_diag to the trailing block.

    Slots are (row, column) pairs of the current permutations, moved
    together; relative order is preserved on both sides of the split.
    """
    n = a.nrows
    ac = a if a.orientation == COL_MAJOR else convert(a, COL_MAJOR)
    diag = np.zeros(n, dtype=a.values.dtype)
    for t in range(n):
        jo = q[t]
        idx, val = ac.slice(jo)
        hit = np.searchsorted(idx, p[t])
        if hit < idx.size and idx[hit] == p[t]:
            diag[t] = val[hit]
    scaled = np.abs(diag) * W[p] * V[q]
    keep = scaled > tol_diag
    order = np.concatenate([np.flatnonzero(keep), np.flatnonzero(~keep)])
    return int(np.count_nonzero(keep)), p[order], q[order]


def reorder(pattern: CompressedMatrix, symmetric_mode: bool,
            method: str = "rcm") -> np.ndarray:
    """Fill-reduction ordering of a square pattern.

    The built-in method is RCM on the symmetrized pattern; alternative
    orderings can be plugged in behind this interface.
    """
    if method != "rcm":
        raise ValueError(f"unknown reordering method {method!r}")
    n = pattern.nrows
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    s = _to_scipy_csr(pattern)
    s = (s + s.T).tocsr()
    s.data[:] = 1.0
    perm = reverse_cuthill_mckee(s, symmetric_mode=True)
    return perm.astype(np.int64)


def preprocess(a: CompressedMatrix, params, is_top_level: bool = True
               ) -> Preprocessed:
    """Equilibrate, symmetrize, statically defer, and reorder one level."""
    if a.nrows != a.ncols:
        raise ValueError("preprocessing requires a square matrix")
    n = a.nrows
    sym_ratio = pattern_symmetry_ratio(a)
    symmetric_mode = sym_ratio >= params.symmetry_threshold
    W, V, p, singular = equilibrate(a)
    W, V, p, q = symmetrize_scaling(W, V, p, symmetric_mode, params.beta)

    ar = a if a.orientation == ROW_MAJOR else convert(a, ROW_MAJOR)
    if ar.nnz:
        rows_all = np.repeat(np.arange(n), np.diff(ar.offsets))
        scaled_mag = W[rows_all] * np.abs(ar.values) * V[ar.indices]
        tol = params.tol_diag_rel * float(scaled_mag.max())
    else:
        tol = 0.0
    n1, p, q = static_defer(a, W, V, p, q, tol)

    if n1 > 1 and ar.nnz:
        # restrict the pattern to the leading block and reorder it
        qinv = np.full(n, n, dtype=np.int64)
        qinv[q[:n1]] = np.arange(n1)
        pinv = np.full(n, n, dtype=np.int64)
        pinv[p[:n1]] = np.arange(n1)
        tr = pinv[rows_all]
        tc = qinv[ar.indices]
        keep = (tr < n1) & (tc < n1)
        pat = sp.csr_matrix((np.ones(np.count_nonzero(keep)),
                             (tr[keep], tc[keep])), shape=(n1, n1))
        pat = (pat + pat.T).tocsr()
        perm = reverse_cuthill_mckee(pat, symmetric_mode=True).astype(np.int64)
        p = np.concatenate([p[perm], p[n1:]])
        q = np.concatenate([q[perm], q[n1:]])
    return Preprocessed(W, V, p, q, n1, symmetric_mode, singular)
