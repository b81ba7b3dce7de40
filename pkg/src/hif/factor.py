"""One factorization level: fan-in incomplete LDU with dual droppings and
dynamic deferring, optional inverse-based rook pivoting, and Schur-complement
assembly.

All arithmetic happens in the scaled view W·A·V, formed just in time from the
unscaled level input; permutations are tracked in physical-slot space so that
deferrals and interchanges mirror the augmented factor storage exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .augmented import AugMode, AugmentedFactor
from .sparse import COL_MAJOR, ROW_MAJOR, CompressedMatrix, convert, from_arrays

RECURSE = "recurse"
DENSE_RRQR = "dense-rrqr"
DISCARD_AND_DENSE = "discard-and-dense"


@dataclass
class LevelParams:
    alpha_l: float
    alpha_u: float
    kappa: float
    kappa_d: float
    tau_l: float
    tau_u: float
    max_steps: int
    ibrp: bool
    nr: np.ndarray     # nonzeros per row of the level input, inherited from
    nc: np.ndarray     # the original top-level matrix through the level maps

    def __post_init__(self):
        if min(self.alpha_l, self.alpha_u) < 1:
            raise ValueError("fill factors must be >= 1")
        if min(self.kappa, self.kappa_d) < 1:
            raise ValueError("inverse-norm thresholds must be >= 1")
        if min(self.tau_l, self.tau_u) < 0:
            raise ValueError("drop tolerances must be nonnegative")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


class TriEstimator:
    """Incremental lower bound on the inf-norm of the inverse of a growing
    unit-triangular factor, via greedy +-1 right-hand sides.

    Feeding the factor's secondary slices (rows of L, or columns of U which
    are rows of U^T) one step at a time keeps the cost linear in slice
    nonzeros.  Extensions are two-phase: ``extend`` proposes, ``accept``
    commits, so a rejected (deferred) step leaves the state untouched.
    """

    def __init__(self, dtype=np.float64):
        self._x = np.zeros(16, dtype=dtype)
        self.k = 0
        self.value = 1.0
        self.touches = 0

    def _dot(self, cols, vals) -> complex:
        s = 0.0
        x = self._x
        for j, v in zip(cols, vals):
            s += v * x[j]
        self.touches += len(cols)
        return s

    def extend(self, cols, vals):
        """Propose appending one slice; returns (candidate_estimate, x_k)."""
        s = self._dot(cols, vals)
        mag = abs(s)
        sign = s / mag if mag > 0 else 1.0
        xk = -sign - s
        return max(self.value, float(abs(xk))), xk

    def accept(self, cand: float, xk) -> None:
        if self.k >= self._x.shape[0]:
            self._x = np.resize(self._x, 2 * self._x.shape[0])
        self._x[self.k] = xk
        self.k += 1
        self.value = cand

    def bordered(self, cols, vals, pivot) -> float:
        """Estimate for the factor with row/column k replaced by the given
        slice and a non-unit diagonal ``pivot``."""
        mag = abs(pivot)
        if mag == 0:
            return np.inf
        s = self._dot(cols, vals)
        return max(self.value, (1.0 + abs(s)) / mag)


def estimate_inverse_norm_step(est: TriEstimator, cols, vals) -> float:
    """Append one secondary slice to the running inverse-norm estimate.

    Slices must arrive in step order; cost is linear in the slice nonzeros.
    """
    cand, xk = est.extend(cols, vals)
    est.accept(cand, xk)
    return est.value


@dataclass
class LevelFactor:
    l_b: CompressedMatrix
    d_b: np.ndarray
    u_b: CompressedMatrix
    e: CompressedMatrix
    f: CompressedMatrix
    p: np.ndarray
    q: np.ndarray
    n1_out: int
    defer_count: int
    pivot_count: int
    est_l: float = 1.0
    est_u: float = 1.0
    # transient blocks consumed by compute_schur, dropped afterwards
    l_e: CompressedMatrix | None = None
    u_f: CompressedMatrix | None = None
    c: CompressedMatrix | None = None
    cells: int = 0


class _PermMirror:
    """Original-index <-> physical-slot maps kept in lockstep with one
    augmented factor's compaction/deferral/interchange relabelings."""

    def __init__(self, perm: np.ndarray, n: int):
        self.at_slot = np.full(2 * n + 1, -1, dtype=np.int64)
        self.at_slot[:n] = perm
        self.slot_of = np.full(n, -1, dtype=np.int64)
        self.slot_of[perm] = np.arange(n)
        self.n = n

    def compact(self, k: int, gap: int) -> None:
        src = k + gap
        orig = self.at_slot[src]
        self.at_slot[k] = orig
        self.at_slot[src] = -1
        self.slot_of[orig] = k

    def defer(self, k: int, gap: int) -> None:
        dst = self.n + gap
        orig = self.at_slot[k]
        self.at_slot[dst] = orig
        self.at_slot[k] = -1
        self.slot_of[orig] = dst

    def swap(self, s1: int, s2: int) -> None:
        o1, o2 = self.at_slot[s1], self.at_slot[s2]
        self.at_slot[s1], self.at_slot[s2] = o2, o1
        self.slot_of[o1], self.slot_of[o2] = s2, s1

    def final_perm(self, n1: int, gap: int) -> np.ndarray:
        idx = np.concatenate([np.arange(n1),
                              np.arange(n1, self.n) + gap])
        return self.at_slot[idx].copy()


class _LevelState:
    """Shared scratch for one level's fan-in updates and pivot searches."""

    def __init__(self, a_csr, a_csc, w, v, dtype):
        n = a_csr.nrows
        self.a_csr = a_csr
        self.a_csc = a_csc
        self.w = w
        self.v = v
        self.n = n
        self.acc = np.zeros(2 * n + 1, dtype=dtype)
        self.cells = 0

    def gather_column(self, L: AugmentedFactor, d: list, ucol_cols, ucol_vals,
                      col_orig: int, row_mirror: _PermMirror, lo: int):
        """Fan-in numerator of column entries at physical slots >= lo.

        Returns (slots, values) unscaled by the diagonal; the caller reads
        slot k separately when it needs the diagonal term.
        """
        acc = self.acc
        chunks = []
        idx, val = self.a_csc.slice(col_orig)
        slots = row_mirror.slot_of[idx]
        sel = slots >= lo
        seed = slots[sel]
        acc[seed] = val[sel] * (self.w[idx[sel]] * self.v[col_orig])
        chunks.append(seed)
        for i, uv in zip(ucol_cols, ucol_vals):
            coef = d[i] * uv
            rows, lvals = L.column_view(i)
            m = rows >= lo
            ridx = rows[m]
            acc[ridx] -= coef * lvals[m]
            chunks.append(ridx)
        if len(chunks) > 1:
            touched = np.unique(np.concatenate(chunks))
        else:
            touched = np.sort(chunks[0])
        self.cells += sum(c.size for c in chunks) + touched.size
        vals = acc[touched].copy()
        acc[touched] = 0.0
        return touched, vals

    def gather_row(self, U: AugmentedFactor, d: list, lrow_cols, lrow_vals,
                   row_orig: int, col_mirror: _PermMirror, lo: int):
        acc = self.acc
        chunks = []
        idx, val = self.a_csr.slice(row_orig)
        slots = col_mirror.slot_of[idx]
        sel = slots >= lo
        seed = slots[sel]
        acc[seed] = val[sel] * (self.w[row_orig] * self.v[idx[sel]])
        chunks.append(seed)
        for j, lv in zip(lrow_cols, lrow_vals):
            coef = lv * d[j]
            cols, uvals = U.column_view(j)
            m = cols >= lo
            cidx = cols[m]
            acc[cidx] -= coef * uvals[m]
            chunks.append(cidx)
        if len(chunks) > 1:
            touched = np.unique(np.concatenate(chunks))
        else:
            touched = np.sort(chunks[0])
        self.cells += sum(c.size for c in chunks) + touched.size
        vals = acc[touched].copy()
        acc[touched] = 0.0
        return touched, vals


def _diag_entry(st: _LevelState, row_orig: int, col_orig: int):
    idx, val = st.a_csc.slice(col_orig)
    hit = np.searchsorted(idx, row_orig)
    if hit < idx.size and idx[hit] == row_orig:
        return val[hit] * st.w[row_orig] * st.v[col_orig]
    return 0.0


def _fanin_diag(st: _LevelState, d: list, lrow, ucol, row_orig, col_orig):
    """d_k = a_hat[p_k, q_k] - l_{k,:} D u_{:,k} from the two current slices."""
    dk = _diag_entry(st, row_orig, col_orig)
    if lrow[0]:
        umap = dict(zip(ucol[0], ucol[1]))
        for j, lv in zip(lrow[0], lrow[1]):
            uv = umap.get(j)
            if uv is not None:
                dk -= lv * d[j] * uv
        st.cells += len(lrow[0]) + len(ucol[0])
    return dk


def _select_and_drop(slots: np.ndarray, vals: np.ndarray, budget: int,
                     drop_below: float):
    """Scalability-oriented budget selection followed by inverse-based drop.

    Ties in the budget selection keep the smaller slot index (stable order).
    """
    mag = np.abs(vals)
    keep = mag > drop_below
    slots, vals, mag = slots[keep], vals[keep], mag[keep]
    if budget < slots.size:
        order = np.argsort(-mag, kind="stable")[:budget]
        order.sort()
        slots, vals = slots[order], vals[order]
    return slots, vals


def ib_rook_pivot(st: _LevelState, k: int, L: AugmentedFactor,
                  U: AugmentedFactor, d: list, rows: _PermMirror,
                  cols: _PermMirror, est_l: TriEstimator, est_u: TriEstimator,
                  kappa: float, n1: int, max_steps: int) -> tuple:
    """Alternating row/column pivot search bounded by inverse-norm tests.

    Interchanges rows of L / columns of U in place (mirrored into the
    permutations); returns (d_k, interchange_count).  Candidate vectors are
    formed without diagonal scaling.
    """
    gap = L.gap
    swaps = 0
    for it in range(max_steps):
        ucol = U._secondary_lists(k)
        lhat_idx, lhat_vals = st.gather_column(
            L, d, ucol[0], ucol[1], cols.at_slot[k], rows, k)
        lk = 0.0
        pos = np.searchsorted(lhat_idx, k)
        if pos < lhat_idx.size and lhat_idx[pos] == k:
            lk = lhat_vals[pos]
        hi = n1 - 1 + gap
        cand = (lhat_idx > k) & (lhat_idx <= hi) & (lhat_idx >= k + 1 + gap)
        r_slot = -1
        if np.any(cand):
            ci = lhat_idx[cand]
            cv = lhat_vals[cand]
            better = np.abs(cv) > abs(lk)
            ci, cv = ci[better], cv[better]
            for t in np.argsort(-np.abs(cv), kind="stable"):
                slot = int(ci[t])
                rcols, rvals = L._secondary_at_phys(slot)
                if est_l.bordered(rcols, rvals, cv[t]) <= kappa:
                    r_slot = slot
                    break
        if r_slot >= 0:
            L.interchange(k, r_slot - gap)
            rows.swap(k, r_slot)
            swaps += 1
        elif it > 0:
            return lk, swaps
        lrow = L._secondary_lists(k)
        uhat_idx, uhat_vals = st.gather_row(
            U, d, lrow[0], lrow[1], rows.at_slot[k], cols, k)
        uk = 0.0
        pos = np.searchsorted(uhat_idx, k)
        if pos < uhat_idx.size and uhat_idx[pos] == k:
            uk = uhat_vals[pos]
        cand = (uhat_idx > k) & (uhat_idx <= hi) & (uhat_idx >= k + 1 + gap)
        c_slot = -1
        if np.any(cand):
            ci = uhat_idx[cand]
            cv = uhat_vals[cand]
            better = np.abs(cv) > abs(uk)
            ci, cv = ci[better], cv[better]
            for t in np.argsort(-np.abs(cv), kind="stable"):
                slot = int(ci[t])
                ccols, cvals = U._secondary_at_phys(slot)
                if est_u.bordered(ccols, cvals, cv[t]) <= kappa:
                    c_slot = slot
                    break
        if c_slot >= 0:
            U.interchange(k, c_slot - gap)
            cols.swap(k, c_slot)
            swaps += 1
        else:
            return uk, swaps
    # step budget exhausted after a column interchange: recompute d_k fresh
    lrow = L._secondary_lists(k)
    ucol = U._secondary_lists(k)
    dk = _fanin_diag(st, d, lrow, ucol, rows.at_slot[k], cols.at_slot[k])
    return dk, swaps


def _budget(alpha: float, count: int, limit: int) -> int:
    if not math.isfinite(alpha):
        return limit
    return max(1, min(limit, math.ceil(alpha * max(int(count), 1))))


def ilu_factorize(a: CompressedMatrix, w: np.ndarray, v: np.ndarray,
                  p: np.ndarray, q: np.ndarray, n1: int, lp: LevelParams,
                  level: int) -> LevelFactor:
    """Fan-in incomplete LDU of the leading block with dynamic deferring.

    ``a`` is the unscaled level input; ``w``/``v`` the equilibration scales;
    ``p``/``q`` the preprocessed permutations; ``n1`` the static leading
    dimension.  A fully deferred level comes back with ``n1_out == 0``.
    """
    n = a.nrows
    a_csr = a if a.orientation == ROW_MAJOR else convert(a, ROW_MAJOR)
    a_csc = convert(a, COL_MAJOR) if a.orientation == ROW_MAJOR else a
    dtype = a.values.dtype
    st = _LevelState(a_csr, a_csc, w, v, dtype)
    mode = AugMode.FULL if lp.ibrp else AugMode.PARTIAL_GAP
    L = AugmentedFactor(n, mode, dtype=dtype)
    U = AugmentedFactor(n, mode, dtype=dtype)
    rows = _PermMirror(np.asarray(p, dtype=np.int64), n)
    cols = _PermMirror(np.asarray(q, dtype=np.int64), n)
    est_l = TriEstimator(dtype)
    est_u = TriEstimator(dtype)
    d: list = []
    defer_count = 0
    pivot_count = 0
    k = 0
    n1 = int(n1)

    def sync_compact():
        if not L._compacted:
            rows.compact(k, L.gap)
            L._ensure_compact()
        if not U._compacted:
            cols.compact(k, U.gap)
            U._ensure_compact()

    while k < n1:
        sync_compact()
        if lp.ibrp:
            dk, swaps = ib_rook_pivot(st, k, L, U, d, rows, cols, est_l,
                                      est_u, lp.kappa, n1, lp.max_steps)
            pivot_count += swaps
            lrow = L._secondary_lists(k)
            ucol = U._secondary_lists(k)
        else:
            lrow = L._secondary_lists(k)
            ucol = U._secondary_lists(k)
            dk = _fanin_diag(st, d, lrow, ucol, rows.at_slot[k],
                             cols.at_slot[k])
        cand_l, xl = est_l.extend(lrow[0], lrow[1])
        cand_u, xu = est_u.extend(ucol[0], ucol[1])
        aborted = False
        while lp.kappa_d * abs(dk) < 1.0 or max(cand_l, cand_u) > lp.kappa:
            rows.defer(k, L.gap)
            cols.defer(k, U.gap)
            L.defer_primary(k)
            U.defer_primary(k)
            defer_count += 1
            n1 -= 1
            if k >= n1:
                aborted = True
                break
            sync_compact()
            lrow = L._secondary_lists(k)
            ucol = U._secondary_lists(k)
            dk = _fanin_diag(st, d, lrow, ucol, rows.at_slot[k],
                             cols.at_slot[k])
            cand_l, xl = est_l.extend(lrow[0], lrow[1])
            cand_u, xu = est_u.extend(ucol[0], ucol[1])
        if aborted:
            break
        est_l.accept(cand_l, xl)
        est_u.accept(cand_u, xu)

        gap = L.gap
        col_orig = cols.at_slot[k]
        row_orig = rows.at_slot[k]
        slots, vals = st.gather_column(L, d, ucol[0], ucol[1], col_orig,
                                       rows, k + 1)
        vals = vals / dk
        bud = _budget(lp.alpha_l, lp.nc[col_orig], n - 1 - k)
        slots, vals = _select_and_drop(slots, vals, bud,
                                       lp.tau_l / (lp.kappa_d * cand_l))
        L.append_column(k, slots - gap, vals)

        slots, vals = st.gather_row(U, d, lrow[0], lrow[1], row_orig,
                                    cols, k + 1)
        vals = vals / dk
        bud = _budget(lp.alpha_u, lp.nr[row_orig], n - 1 - k)
        slots, vals = _select_and_drop(slots, vals, bud,
                                       lp.tau_u / (lp.kappa_d * cand_u))
        U.append_column(k, slots - gap, vals)
        d.append(dk)
        k += 1

    n1_out = k
    gap = L.gap
    l_b, l_e = L.finalize(n1_out, orientation=COL_MAJOR)
    u_b, u_f = U.finalize(n1_out, orientation=ROW_MAJOR)
    p_fin = rows.final_perm(n1_out, gap)
    q_fin = cols.final_perm(n1_out, gap)
    d_b = np.asarray(d, dtype=dtype)
    e = _extract_block(a_csr, w, v, p_fin[n1_out:], q_fin[:n1_out])
    f = _extract_block(a_csr, w, v, p_fin[:n1_out], q_fin[n1_out:])
    c = _extract_block(a_csr, w, v, p_fin[n1_out:], q_fin[n1_out:])
    cells = st.cells + L.cells + U.cells + est_l.touches + est_u.touches
    return LevelFactor(l_b, d_b, u_b, e, f, p_fin, q_fin, n1_out,
                       defer_count, pivot_count, est_l.value, est_u.value,
                       l_e=l_e, u_f=u_f, c=c, cells=cells)


def _extract_block(a_csr: CompressedMatrix, w, v, row_ids: np.ndarray,
                   col_ids: np.ndarray) -> CompressedMatrix:
    """Scaled permuted block W A V [row_ids, col_ids] as a CSR matrix."""
    n = a_csr.ncols
    cmap = np.full(n, -1, dtype=np.int64)
    cmap[col_ids] = np.arange(col_ids.size)
    offs = [0]
    idx_parts = []
    val_parts = []
    for r in row_ids:
        idx, val = a_csr.slice(r)
        mapped = cmap[idx]
        keep = mapped >= 0
        mc = mapped[keep]
        mv = val[keep] * (w[r] * v[idx[keep]])
        order = np.argsort(mc, kind="stable")
        idx_parts.append(mc[order])
        val_parts.append(mv[order])
        offs.append(offs[-1] + mc.size)
    idx = np.concatenate(idx_parts) if idx_parts else np.zeros(0, dtype=np.int64)
    val = np.concatenate(val_parts) if val_parts else np.zeros(0, dtype=a_csr.values.dtype)
    return from_arrays(ROW_MAJOR, row_ids.size, col_ids.size,
                       np.asarray(offs), idx, val, check=False)


def _thin_rows(m: CompressedMatrix, budgets: np.ndarray) -> CompressedMatrix:
    """Keep the largest-magnitude ``budgets[t]`` entries in each primary slice."""
    offs = [0]
    idx_parts, val_parts = [], []
    for t in range(m.primary_dim):
        idx, val = m.slice(t)
        b = int(budgets[t])
        if idx.size > b:
            order = np.argsort(-np.abs(val), kind="stable")[:b]
            order.sort()
            idx, val = idx[order], val[order]
        idx_parts.append(idx)
        val_parts.append(val)
        offs.append(offs[-1] + idx.size)
    idx = np.concatenate(idx_parts) if idx_parts else np.zeros(0, dtype=np.int64)
    val = np.concatenate(val_parts) if val_parts else np.zeros(0, dtype=m.values.dtype)
    return from_arrays(m.orientation, m.nrows, m.ncols, np.asarray(offs),
                       idx, val, check=False)


def compute_schur(c: CompressedMatrix, l_e: CompressedMatrix, d_b: np.ndarray,
                  u_f: CompressedMatrix, lp: LevelParams,
                  row_counts: np.ndarray | None = None,
                  col_counts: np.ndarray | None = None
                  ) -> tuple[CompressedMatrix, int]:
    """S = C - L_E D_B U_F with pre-product scalability dropping.

    Rows of L_E and columns of U_F are thinned to their alpha budgets before
    the sparse product; returns (S, cells_touched).
    """
    ns = c.nrows
    cells = 0
    le = l_e if l_e.orientation == ROW_MAJOR else convert(l_e, ROW_MAJOR)
    if row_counts is not None and math.isfinite(lp.alpha_l):
        budgets = np.maximum(1, np.ceil(lp.alpha_l * np.maximum(row_counts, 1))
                             ).astype(np.int64)
        le = _thin_rows(le, budgets)
    uf = u_f if u_f.orientation == ROW_MAJOR else convert(u_f, ROW_MAJOR)
    if col_counts is not None and math.isfinite(lp.alpha_u):
        ufc = convert(uf, COL_MAJOR)
        budgets = np.maximum(1, np.ceil(lp.alpha_u * np.maximum(col_counts, 1))
                             ).astype(np.int64)
        ufc = _thin_rows(ufc, budgets)
        uf = convert(ufc, ROW_MAJOR)
    dtype = np.result_type(c.values.dtype, le.values.dtype, uf.values.dtype)
    acc = np.zeros(ns, dtype=dtype)
    offs = [0]
    idx_parts, val_parts = [], []
    for t in range(ns):
        cidx, cval = c.slice(t)
        acc[cidx] = cval
        chunks = [cidx]
        lidx, lval = le.slice(t)
        for j, lv in zip(lidx, lval):
            coef = lv * d_b[j]
            uidx, uval = uf.slice(j)
            acc[uidx] -= coef * uval
            chunks.append(uidx)
        touched = np.unique(np.concatenate(chunks)) if len(chunks) > 1 \
            else np.sort(cidx)
        cells += sum(ch.size for ch in chunks) + touched.size
        idx_parts.append(touched)
        val_parts.append(acc[touched].copy())
        acc[touched] = 0.0
        offs.append(offs[-1] + touched.size)
    idx = np.concatenate(idx_parts) if idx_parts else np.zeros(0, dtype=np.int64)
    val = np.concatenate(val_parts) if val_parts else np.zeros(0, dtype=dtype)
    s = from_arrays(ROW_MAJOR, ns, ns, np.asarray(offs), idx, val, check=False)
    return s, cells


def level_decision(n_s: int, density_s: float, defer_ratio: float,
                   n_total: int, params) -> str:
    """Route the trailing block: recurse, go dense, or discard the level."""
    if defer_ratio >= 0.75:
        return DISCARD_AND_DENSE
    if defer_ratio >= 0.6:
        return DENSE_RRQR
    small = max(params.dense_min, math.ceil(2.0 * n_total ** (1.0 / 3.0)))
    if n_s <= small or density_s >= params.dense_density:
        return DENSE_RRQR
    return RECURSE
