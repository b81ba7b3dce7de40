"""The user-facing multilevel preconditioner: recursive construction, the
multilevel generalized-inverse solve with adjoint support, iterative
refinement, and the multilevel matrix-vector product.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import factor as _factor
from .factor import (DENSE_RRQR, DISCARD_AND_DENSE, RECURSE, LevelParams,
                     compute_schur, ilu_factorize, level_decision)
from .preprocess import preprocess
from .rrqr import (QrcpFactor, apply_forward, apply_pinv, attach_ranks,
                   default_rrqr_threshold, qrcp)
from .sparse import (COL_MAJOR, ROW_MAJOR, CompressedMatrix, as_vector,
                     convert, is_complex_kind, spmv)


@dataclass
class Params:
    """Control parameters; the first eight are the core factorization knobs."""

    alpha_l: float = 10.0
    alpha_u: float = 10.0
    kappa: float = 3.0
    kappa_d: float = 3.0
    tau_l: float = 1e-4
    tau_u: float = 1e-4
    beta: float = 1000.0
    kappa_rrqr: float = field(default_factory=default_rrqr_threshold)
    # artifact switches
    symmetry_threshold: float = 0.65
    ibrp_defer_trigger: float = 0.3
    max_steps: int = 4
    dense_min: int = 500
    dense_density: float = 0.85
    alpha_growth: float = 2.0
    alpha_cap: float = 40.0
    tol_diag_rel: float = 1e-12
    ibrp: str = "auto"          # auto | on | off
    max_levels: int = 100

    def __post_init__(self):
        if self.ibrp not in ("auto", "on", "off"):
            raise ValueError("ibrp must be one of auto/on/off")


@dataclass
class LevelData:
    n: int
    n1: int
    l_b: CompressedMatrix        # strictly lower, column major, unit diagonal
    d_b: np.ndarray
    u_b: CompressedMatrix        # strictly upper, row major, unit diagonal
    e: CompressedMatrix          # scaled permuted input block, row major
    f: CompressedMatrix
    p: np.ndarray
    q: np.ndarray
    w: np.ndarray
    v: np.ndarray
    symmetric_mode: bool
    defer_count: int
    pivot_count: int
    ibrp: bool

    @property
    def stored_nnz(self) -> int:
        return (self.l_b.nnz + self.u_b.nnz + self.n1
                + self.e.nnz + self.f.nnz)


@dataclass
class FactorStats:
    n: int
    input_nnz: int
    levels: int
    nnz_ratio: float
    factor_nnz: int
    final_dim: int
    rank_default: int
    rank_nullspace: int
    work_cells: int
    factor_kind: str
    level_details: list = field(default_factory=list)


class HifPrecond:
    """Immutable multilevel factorization; shareable across solver calls."""

    def __init__(self, levels: list[LevelData], final: QrcpFactor | None,
                 stats: FactorStats, params: Params):
        self.levels = levels
        self.final = final
        self.stats = stats
        self.params = params
        self.n = levels[0].n if levels else 0
        self.dtype = levels[0].d_b.dtype if levels else np.float64

    # -- rank mapping --------------------------------------------------------

    def _rank(self, rnk: int) -> int:
        if rnk < -1:
            raise ValueError(f"invalid rnk {rnk}")
        if self.final is None:
            return 0
        if rnk == 0:
            return self.final.rank_default
        if rnk == -1:
            return self.final.rank_nullspace
        if rnk > self.final.rank_nullspace:
            warnings.warn(f"rnk={rnk} exceeds the stored numerical rank "
                          f"{self.final.rank_nullspace}; clamping")
            return self.final.rank_nullspace
        return rnk

    # -- triangular kernels ----------------------------------------------------

    @staticmethod
    def _forward_unit(tri: CompressedMatrix, x: np.ndarray, conj: bool) -> None:
        """x <- T^{-1} x for unit-triangular T stored scatter-wise."""
        for j in range(tri.primary_dim):
            idx, val = tri.slice(j)
            if idx.size:
                v = val.conj() if conj else val
                x[idx] -= v * x[j]

    @staticmethod
    def _backward_unit(tri: CompressedMatrix, x: np.ndarray, conj: bool) -> None:
        for k in range(tri.primary_dim - 1, -1, -1):
            idx, val = tri.slice(k)
            if idx.size:
                v = val.conj() if conj else val
                x[k] -= np.dot(v, x[idx])

    @staticmethod
    def _mult_scatter_unit(tri: CompressedMatrix, x: np.ndarray, conj: bool
                           ) -> np.ndarray:
        y = x.copy()
        for j in range(tri.primary_dim):
            idx, val = tri.slice(j)
            if idx.size:
                v = val.conj() if conj else val
                y[idx] += v * x[j]
        return y

    @staticmethod
    def _mult_gather_unit(tri: CompressedMatrix, x: np.ndarray, conj: bool
                          ) -> np.ndarray:
        y = x.copy()
        for k in range(tri.primary_dim):
            idx, val = tri.slice(k)
            if idx.size:
                v = val.conj() if conj else val
                y[k] += np.dot(v, x[idx])
        return y

    def _solve_b(self, lv: LevelData, y: np.ndarray, trans: bool) -> np.ndarray:
        """x = B~^{-1} y (or B~^{-H} y) on the leading block."""
        x = y.astype(np.result_type(self.dtype, y.dtype), copy=True)
        if not trans:
            self._forward_unit(lv.l_b, x, conj=False)
            x /= lv.d_b
            self._backward_unit(lv.u_b, x, conj=False)
        else:
            self._forward_unit(lv.u_b, x, conj=True)
            x /= lv.d_b.conj()
            self._backward_unit(lv.l_b, x, conj=True)
        return x

    def _mult_b(self, lv: LevelData, x: np.ndarray, trans: bool) -> np.ndarray:
        x = x.astype(np.result_type(self.dtype, x.dtype), copy=False)
        if not trans:
            t = self._mult_gather_unit(lv.u_b, x, conj=False)
            t *= lv.d_b
            return self._mult_scatter_unit(lv.l_b, t, conj=False)
        t = self._mult_gather_unit(lv.l_b, x, conj=True)
        t *= lv.d_b.conj()
        return self._mult_scatter_unit(lv.u_b, t, conj=True)

    # -- multilevel solve (generalized-inverse action) -------------------------

    def solve(self, y, trans: bool = False, rnk: int = 0) -> np.ndarray:
        """M^g y, or M^{gH} y when ``trans``."""
        y = as_vector(y, self.n)
        r = self._rank(rnk)
        return self._solve_level(0, np.asarray(y), r, trans)

    def _solve_level(self, i: int, y: np.ndarray, r: int, trans: bool
                     ) -> np.ndarray:
        lv = self.levels[i]
        n1 = lv.n1
        if not trans:
            w, v, p, q = lv.w, lv.v, lv.p, lv.q
        else:
            w, v, p, q = lv.v, lv.w, lv.q, lv.p
        yh = w[p] * y[p]
        x1 = self._solve_b(lv, yh[:n1], trans)
        x2 = yh[n1:] - self._apply_e(lv, x1, trans)
        if i + 1 < len(self.levels):
            x2 = self._solve_level(i + 1, x2, r, trans)
        elif self.final is not None:
            x2 = apply_pinv(self.final, x2, r, adjoint=trans)
        if n1:
            x1 = self._solve_b(lv, yh[:n1] - self._apply_f(lv, x2, trans), trans)
        out = np.empty(lv.n, dtype=np.result_type(x1.dtype, x2.dtype,
                                                  self.dtype))
        out[q[:n1]] = v[q[:n1]] * x1
        out[q[n1:]] = v[q[n1:]] * x2
        return out

    def _apply_e(self, lv: LevelData, x1: np.ndarray, trans: bool) -> np.ndarray:
        if lv.n - lv.n1 == 0 or lv.n1 == 0:
            return np.zeros(lv.n - lv.n1, dtype=x1.dtype)
        if not trans:
            return spmv(lv.e, x1)
        return spmv(lv.f, x1, adjoint=True)

    def _apply_f(self, lv: LevelData, x2: np.ndarray, trans: bool) -> np.ndarray:
        if lv.n1 == 0 or lv.n - lv.n1 == 0:
            return np.zeros(lv.n1, dtype=x2.dtype)
        if not trans:
            return spmv(lv.f, x2)
        return spmv(lv.e, x2, adjoint=True)

    # -- iterative refinement ----------------------------------------------------

    def hifir(self, a: CompressedMatrix, q, nirs: int, trans: bool = False,
              rnk: int = -1) -> np.ndarray:
        """nirs sweeps of iterative refinement v <- v + M^g (q - A v)."""
        if nirs < 1:
            raise ValueError("nirs must be >= 1")
        q = as_vector(q, self.n)
        v = self.solve(q, trans=trans, rnk=rnk)
        for _ in range(nirs - 1):
            rres = q - spmv(a, v, adjoint=trans)
            v = v + self.solve(rres, trans=trans, rnk=rnk)
        return v

    # -- multilevel matrix-vector product -----------------------------------------

    def mmultiply(self, x, trans: bool = False, rnk: int = -1) -> np.ndarray:
        """M~ x (or M~^H x) through the stored factors and the truncated QRCP."""
        x = as_vector(x, self.n)
        r = self._rank(rnk)
        return self._mult_level(0, np.asarray(x), r, trans)

    def _mult_level(self, i: int, x: np.ndarray, r: int, trans: bool
                    ) -> np.ndarray:
        lv = self.levels[i]
        n1 = lv.n1
        if not trans:
            w, v, p, q = lv.w, lv.v, lv.p, lv.q
        else:
            w, v, p, q = lv.v, lv.w, lv.q, lv.p
        z = x[q] / v[q]
        z1, z2 = z[:n1], z[n1:]
        fz2 = self._apply_f(lv, z2, trans)
        top = self._mult_b(lv, z1, trans) + fz2
        if i + 1 < len(self.levels):
            sz2 = self._mult_level(i + 1, z2, r, trans)
        elif self.final is not None:
            sz2 = apply_forward(self.final, z2, r, adjoint=trans)
        else:
            sz2 = np.zeros(0, dtype=z.dtype)
        bot = self._apply_e(lv, z1 + self._solve_b(lv, fz2, trans), trans) + sz2
        out = np.empty(lv.n, dtype=np.result_type(top.dtype, bot.dtype))
        out[p[:n1]] = top / w[p[:n1]]
        out[p[n1:]] = bot / w[p[n1:]]
        return out


def _resolve_ibrp(mode: str, level: int, prev_defer_ratio: float,
                  trigger: float) -> bool:
    if mode == "off":
        return False
    if mode == "on":
        return level >= 2
    return level >= 2 and prev_defer_ratio >= trigger


def factorize(a: CompressedMatrix, params: Params | None = None,
              factor_dtype=None) -> HifPrecond:
    """Build the multilevel preconditioner for a square sparse matrix."""
    params = params or Params()
    if a.nrows != a.ncols:
        raise ValueError("factorize requires a square matrix")
    if a.nrows == 0:
        raise ValueError("empty matrix")
    in_complex = is_complex_kind(a.values.dtype)
    if factor_dtype is None:
        factor_dtype = a.values.dtype
    factor_dtype = np.dtype(factor_dtype)
    if in_complex != is_complex_kind(factor_dtype):
        raise ValueError("factor kind must match the input's real/complex kind")

    a_csr = a if a.orientation == ROW_MAJOR else convert(a, ROW_MAJOR)
    a_cur = a_csr.astype(factor_dtype)
    input_nnz = a.nnz
    n_top = a.nrows
    nr = np.diff(a_csr.offsets).astype(np.int64)
    a_csc0 = convert(a_csr, COL_MAJOR)
    nc = np.diff(a_csc0.offsets).astype(np.int64)

    levels: list[LevelData] = []
    details = []
    cells = 0
    prev_defer_ratio = 0.0
    alpha_l, alpha_u = params.alpha_l, params.alpha_u
    final = None
    final_dim = 0

    for level in range(1, params.max_levels + 1):
        n = a_cur.nrows
        pre = preprocess(a_cur, params)
        ibrp = _resolve_ibrp(params.ibrp, level, prev_defer_ratio,
                             params.ibrp_defer_trigger)
        if ibrp:
            alpha_l = min(alpha_l * params.alpha_growth, params.alpha_cap)
            alpha_u = min(alpha_u * params.alpha_growth, params.alpha_cap)
        lp = LevelParams(alpha_l=alpha_l, alpha_u=alpha_u, kappa=params.kappa,
                         kappa_d=params.kappa_d, tau_l=params.tau_l,
                         tau_u=params.tau_u, max_steps=params.max_steps,
                         ibrp=ibrp, nr=nr, nc=nc)
        lf = ilu_factorize(a_cur, pre.row_scale, pre.col_scale, pre.row_perm,
                           pre.col_perm, pre.n1, lp, level)
        n0 = pre.n1
        defer_ratio = lf.defer_count / n0 if n0 else 0.0
        ns = n - lf.n1_out
        decision = RECURSE
        if ns:
            if defer_ratio >= 0.75:
                decision = DISCARD_AND_DENSE
            else:
                s, sc = compute_schur(lf.c, lf.l_e, lf.d_b, lf.u_f, lp,
                                      row_counts=nr[lf.p[lf.n1_out:]],
                                      col_counts=nc[lf.q[lf.n1_out:]])
                cells += sc
                density = s.nnz / float(ns * ns)
                decision = level_decision(ns, density, defer_ratio, n_top,
                                          params)
                if lf.n1_out == 0:
                    decision = DENSE_RRQR
        if decision == DISCARD_AND_DENSE:
            # drop the level's incomplete factors; keep preprocessing and
            # hand the whole scaled permuted input to the dense stage
            lf = ilu_factorize(a_cur, pre.row_scale, pre.col_scale,
                               lf.p, lf.q, 0, lp, level)
            ns = n
            s, sc = compute_schur(lf.c, lf.l_e, lf.d_b, lf.u_f, lp)
            cells += sc
        cells += lf.cells
        levels.append(LevelData(n=n, n1=lf.n1_out, l_b=lf.l_b, d_b=lf.d_b,
                                u_b=lf.u_b, e=lf.e, f=lf.f, p=lf.p, q=lf.q,
                                w=pre.row_scale, v=pre.col_scale,
                                symmetric_mode=pre.symmetric_mode,
                                defer_count=lf.defer_count,
                                pivot_count=lf.pivot_count, ibrp=ibrp))
        details.append(dict(level=level, dim=n, n1=lf.n1_out,
                            defers=lf.defer_count, pivots=lf.pivot_count,
                            ibrp=ibrp, symmetric=pre.symmetric_mode,
                            nnz=levels[-1].stored_nnz))
        if ns == 0:
            break
        if decision == RECURSE and level < params.max_levels:
            a_cur = s
            nr = nr[lf.p[lf.n1_out:]]
            nc = nc[lf.q[lf.n1_out:]]
            prev_defer_ratio = defer_ratio
            continue
        # Diagonals at the elimination-noise scale count as exact zeros for
        # ranking: parent levels are equilibrated to unit magnitude, so
        # directions below eps^(2/3) of that scale cannot be inverted
        # meaningfully and would poison the generalized-inverse action.
        s_dense = s.to_dense()
        eps_f = float(np.finfo(factor_dtype).eps)
        hint = max(1.0, float(np.abs(s_dense).max()) if s_dense.size else 0.0)
        floor = eps_f ** (2.0 / 3.0) * hint
        final = attach_ranks(qrcp(s_dense), params.kappa_rrqr,
                             dtype=factor_dtype, zero_floor=floor)
        final_dim = ns
        break

    factor_nnz = sum(lv.stored_nnz for lv in levels)
    if final is not None:
        factor_nnz += final_dim * final_dim + final_dim
    stats = FactorStats(n=n_top, input_nnz=input_nnz, levels=len(levels),
                        nnz_ratio=factor_nnz / max(input_nnz, 1),
                        factor_nnz=factor_nnz, final_dim=final_dim,
                        rank_default=final.rank_default if final else 0,
                        rank_nullspace=final.rank_nullspace if final else 0,
                        work_cells=cells, factor_kind=str(factor_dtype),
                        level_details=details)
    return HifPrecond(levels, final, stats, params)
