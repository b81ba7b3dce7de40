"""Krylov solvers: right-preconditioned restarted GMRES, flexible GMRES with
iterative refinement as a variable preconditioner, null-space basis
extraction, and the three-step pseudoinverse driver.

Convergence is always judged on the true residual b - A x; rotation-based
estimates only steer the inner cycles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .precond import HifPrecond, Params, factorize
from .sparse import CompressedMatrix, as_vector, convert, spmv


@dataclass
class KspConfig:
    restart: int = 30
    rtol: float = 1e-6
    maxit: int = 500
    nirs_start: int = 1
    nirs_increment: int = 1
    nirs_cap: int = 16
    hessenberg_cond_limit: float = 1e12

    def __post_init__(self):
        if self.restart < 1:
            raise ValueError("restart must be >= 1")
        if self.rtol <= 0:
            raise ValueError("rtol must be positive")


@dataclass
class SolveStats:
    iterations: int = 0
    restarts: int = 0
    relres: float = 0.0
    converged: bool = False
    breakdown: str = ""
    history: list = field(default_factory=list)


def _norm(x) -> float:
    return float(np.linalg.norm(x))


class _Householder:
    """Householder-reflector Arnoldi basis (Walker's variant)."""

    def __init__(self, n: int, m: int, dtype):
        self.w = np.zeros((n, m + 2), dtype=dtype)
        self.count = 0

    def push(self, u: np.ndarray) -> np.ndarray:
        """Reflector zeroing u below position ``count``; returns P u."""
        j = self.count
        x = u.copy()
        sub = x[j:]
        alpha = _norm(sub)
        out = x.copy()
        if alpha > 0:
            a0 = sub[0]
            phase = a0 / abs(a0) if abs(a0) > 0 else 1.0
            v = sub.copy()
            v[0] += phase * alpha
            vn = _norm(v)
            if vn > 0:
                v /= vn
                self.w[j:, j] = v
                out[j:] = sub - 2.0 * v * np.vdot(v, sub)
                out[j + 1:] = 0.0
                out[j] = -phase * alpha
        self.count += 1
        return out

    def apply_prefix(self, u: np.ndarray, upto: int) -> np.ndarray:
        """P_upto ... P_1 u."""
        x = u.copy()
        for i in range(upto):
            v = self.w[i:, i]
            x[i:] -= 2.0 * v * np.vdot(v, x[i:])
        return x

    def basis_vector(self, j: int, n: int) -> np.ndarray:
        """P_1 ... P_{j+1} e_{j+1}."""
        x = np.zeros(n, dtype=self.w.dtype)
        x[j] = 1.0
        for i in range(j, -1, -1):
            v = self.w[i:, i]
            x[i:] -= 2.0 * v * np.vdot(v, x[i:])
        return x


def _givens(a, b):
    r = math.hypot(abs(a), abs(b))
    if r == 0.0:
        return 1.0, 0.0
    return a / r, b / r


def _fgmres_cycle(matvec, precfun, b, x0, m, abs_tol, history,
                  flexible: bool, ortho: str = "mgs",
                  cond_limit: float = np.inf):
    """One restart cycle.  Returns (x, res_estimate, inner_iters, reason).

    The small least-squares problem is carried by Givens rotations; its
    rotated right-hand-side tail is the (monotone) residual estimate.
    """
    n = b.shape[0]
    r0 = b - matvec(x0)
    beta = _norm(r0)
    dtype = np.result_type(r0.dtype, np.float64)
    if beta == 0.0:
        return x0, 0.0, 0, "exact"
    hh = _Householder(n, m, dtype) if ortho == "householder" else None
    V = np.zeros((n, m + 1), dtype=dtype)
    Z = np.zeros((n, m), dtype=dtype) if flexible else None
    H = np.zeros((m + 1, m), dtype=dtype)   # raw Hessenberg
    R = np.zeros((m + 1, m), dtype=dtype)   # rotated triangle
    g = np.zeros(m + 1, dtype=dtype)
    g[0] = beta
    rots: list = []
    if hh is not None:
        wt0 = hh.push(r0)
        g[0] = wt0[0]          # signed: the initial reflector may flip r0
        V[:, 0] = hh.basis_vector(0, n)
    else:
        V[:, 0] = r0 / beta
    g0 = g[0]
    eps = float(np.finfo(np.float64).eps)
    reason = "restart"
    j_done = 0
    singular_triangle = False
    for j in range(m):
        z = precfun(V[:, j])
        w = matvec(z)
        if flexible:
            Z[:, j] = z
        if hh is not None:
            wt = hh.apply_prefix(w, j + 1)
            wt = hh.push(wt)
            take = min(j + 2, n)
            H[:take, j] = wt[:take]
            hj1 = abs(H[j + 1, j])
            if j + 1 < min(m + 1, n):
                V[:, j + 1] = hh.basis_vector(j + 1, n)
        else:
            for i in range(j + 1):
                hij = np.vdot(V[:, i], w)
                H[i, j] += hij
                w -= hij * V[:, i]
            # one reorthogonalization pass keeps the basis crisp
            for i in range(j + 1):
                c = np.vdot(V[:, i], w)
                H[i, j] += c
                w -= c * V[:, i]
            hj1 = _norm(w)
            H[j + 1, j] = hj1
            if hj1 > 0:
                V[:, j + 1] = w / hj1
        col = H[:j + 2, j].copy()
        for i, (c, s) in enumerate(rots):
            t0 = np.conj(c) * col[i] + np.conj(s) * col[i + 1]
            t1 = -s * col[i] + c * col[i + 1]
            col[i], col[i + 1] = t0, t1
        c, s = _givens(col[j], col[j + 1])
        rots.append((c, s))
        col[j] = np.conj(c) * col[j] + np.conj(s) * col[j + 1]
        col[j + 1] = 0.0
        R[:j + 2, j] = col
        g[j + 1] = -s * g[j]
        g[j] = np.conj(c) * g[j]
        j_done = j + 1
        res_est = abs(g[j + 1])
        history.append(float(res_est))
        if abs(col[j]) <= eps * max(_norm(col), 1e-300):
            singular_triangle = True
        happy = hj1 <= 100.0 * eps * max(_norm(H[:j + 2, j]), 1e-300)
        if res_est <= abs_tol:
            reason = "tol"
            break
        if happy:
            reason = "happy"
            break
        if np.isfinite(cond_limit) and np.linalg.cond(H[:j + 2, :j + 1]) > cond_limit:
            reason = "hessenberg"
            break
    j = j_done
    if singular_triangle:
        e1 = np.zeros(j + 1, dtype=dtype)
        e1[0] = g0
        y, _, _, _ = np.linalg.lstsq(H[:j + 1, :j], e1, rcond=None)
    else:
        y = np.zeros(j, dtype=dtype)
        for i in range(j - 1, -1, -1):
            y[i] = (g[i] - np.dot(R[i, i + 1:j], y[i + 1:j])) / R[i, i]
    if flexible:
        x = x0 + Z[:, :j] @ y
    else:
        x = x0 + precfun(V[:, :j] @ y)
    return x, abs(g[j]), j, reason


def _resolve_precfun(precond: HifPrecond | None, trans: bool, rnk: int):
    if precond is None:
        return lambda v: v
    return lambda v: precond.solve(v, trans=trans, rnk=rnk)


def gmres(a: CompressedMatrix, b, precond: HifPrecond | None = None,
          cfg: KspConfig | None = None, x0=None, rnk: int = 0,
          trans: bool = False) -> tuple[np.ndarray, SolveStats]:
    """Restarted GMRES on A with the multilevel solve as right preconditioner."""
    cfg = cfg or KspConfig()
    n = a.nrows
    b = as_vector(b, n)
    bnorm = _norm(b)
    stats = SolveStats()
    x = np.zeros(n, dtype=np.result_type(b.dtype, a.values.dtype)) \
        if x0 is None else np.array(x0, dtype=np.result_type(b.dtype, a.values.dtype))
    if bnorm == 0.0:
        stats.converged = True
        stats.breakdown = "zero-rhs"
        stats.history = [0.0]
        return x, stats
    matvec = lambda v: spmv(a, v, adjoint=trans)
    precfun = _resolve_precfun(precond, trans, rnk)
    raw_hist: list = []
    relres = _norm(b - matvec(x)) / bnorm
    history = [relres]
    cycles = 0
    while relres > cfg.rtol and stats.iterations < cfg.maxit:
        m = min(cfg.restart, cfg.maxit - stats.iterations)
        raw_hist.clear()
        x, _, it, reason = _fgmres_cycle(matvec, precfun, b, x, m,
                                         cfg.rtol * bnorm, raw_hist,
                                         flexible=False)
        history.extend(r / bnorm for r in raw_hist)
        stats.iterations += it
        cycles += 1
        relres = _norm(b - matvec(x)) / bnorm
        if relres <= cfg.rtol:
            break
        if reason in ("happy", "exact") or it == 0:
            stats.breakdown = reason
            break
    stats.converged = relres <= cfg.rtol
    stats.relres = relres
    if len(history) > 1:
        history[-1] = relres
    stats.history = history
    stats.restarts = max(cycles - 1, 0)
    return x, stats


def fgmres_hifir(a: CompressedMatrix, b, precond: HifPrecond,
                 cfg: KspConfig | None = None, x0=None, rnk: int = -1,
                 trans: bool = False, ortho: str = "mgs",
                 cond_limit: float | None = None
                 ) -> tuple[np.ndarray, SolveStats]:
    """Flexible GMRES with the iterative-refinement variable preconditioner.

    The refinement sweep count starts at ``nirs_start`` and grows by
    ``nirs_increment`` at every restart, capped at ``nirs_cap``.
    """
    cfg = cfg or KspConfig()
    n = a.nrows
    b = as_vector(b, n)
    bnorm = _norm(b)
    stats = SolveStats()
    x = np.zeros(n, dtype=np.result_type(b.dtype, a.values.dtype)) \
        if x0 is None else np.array(x0, dtype=np.result_type(b.dtype, a.values.dtype))
    if bnorm == 0.0:
        stats.converged = True
        stats.breakdown = "zero-rhs"
        stats.history = [0.0]
        return x, stats
    matvec = lambda v: spmv(a, v, adjoint=trans)
    limit = cfg.hessenberg_cond_limit if cond_limit is None else cond_limit
    relres = _norm(b - matvec(x)) / bnorm
    history = [relres]
    raw_hist: list = []
    nirs = cfg.nirs_start
    cycles = 0
    while relres > cfg.rtol and stats.iterations < cfg.maxit:
        m = min(cfg.restart, cfg.maxit - stats.iterations)
        nr_now = nirs

        def precfun(v, _nr=nr_now):
            return precond.hifir(a, v, _nr, trans=trans, rnk=rnk)

        raw_hist.clear()
        x, _, it, reason = _fgmres_cycle(matvec, precfun, b, x, m,
                                         cfg.rtol * bnorm, raw_hist,
                                         flexible=True, ortho=ortho,
                                         cond_limit=limit)
        history.extend(r / bnorm for r in raw_hist)
        stats.iterations += it
        cycles += 1
        relres = _norm(b - matvec(x)) / bnorm
        if relres <= cfg.rtol:
            break
        if reason in ("happy", "exact", "hessenberg") or it == 0:
            stats.breakdown = reason
            break
        nirs = min(nirs + cfg.nirs_increment, cfg.nirs_cap)
    stats.converged = relres <= cfg.rtol
    stats.relres = relres
    if len(history) > 1:
        history[-1] = relres
    stats.history = history
    stats.restarts = max(cycles - 1, 0)
    return x, stats


@dataclass
class NullspaceInfo:
    accepted: list
    residuals: list
    iterations: int = 0
    message: str = ""
    exhausted: bool = False


def nullspace_basis(a: CompressedMatrix, precond: HifPrecond, count: int,
                    side: str = "left", cfg: KspConfig | None = None,
                    accept_tol: float = 1e-10, seed: int = 0,
                    stop_on_failure: bool = False
                    ) -> tuple[np.ndarray, NullspaceInfo]:
    """Orthonormal null-space vectors of A^H (side=left) or A (side=right).

    Each probe drives the homogeneous system to a null vector: flexible
    GMRES with the iterative-refinement variable preconditioner (rank
    ``-1``), Householder orthogonalization and a Hessenberg conditioning
    cutoff, started from a random unit vector orthogonal to the vectors
    already found.  A generalized-inverse action contracts everything
    outside the null space, so the solution itself converges into the null
    space; acceptance requires ||A^H v|| / ||A||_F <= accept_tol for left
    vectors (||A v|| for right ones).  A probe that collapses toward zero
    signals that no further null vector exists.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    cfg = cfg or KspConfig()
    n = a.nrows
    rng = np.random.default_rng(seed)
    adjoint = side == "left"
    anorm = _norm(a.values)
    dtype = np.result_type(a.values.dtype, np.float64)
    basis: list[np.ndarray] = []
    info = NullspaceInfo(accepted=[], residuals=[])
    matvec = lambda v: spmv(a, v, adjoint=adjoint)
    zero = np.zeros(n, dtype=dtype)

    def deflate(v: np.ndarray) -> np.ndarray:
        for u in basis:
            v = v - u * np.vdot(u, v)
        return v

    for _ in range(count):
        v = rng.standard_normal(n).astype(dtype)
        if np.issubdtype(dtype, np.complexfloating):
            v = v + 1j * rng.standard_normal(n)
        v = deflate(v)
        v /= _norm(v)
        nirs = cfg.nirs_start
        accepted = False
        exhausted = False
        residual = _norm(matvec(v)) / anorm
        iters = 0
        while iters < cfg.maxit:
            if residual <= accept_tol:
                accepted = True
                break
            m = min(cfg.restart, cfg.maxit - iters)

            def precfun(u, _nr=nirs):
                return precond.hifir(a, u, _nr, trans=adjoint, rnk=-1)

            hist: list = []
            v, _, it, _ = _fgmres_cycle(
                matvec, precfun, zero, v, m, accept_tol * anorm, hist,
                flexible=True, ortho="householder",
                cond_limit=cfg.hessenberg_cond_limit)
            iters += max(it, 1)
            v = deflate(v)
            vn = _norm(v)
            if vn <= 1e-8:
                # the iteration contracted the probe to (numerical) zero:
                # nothing left outside the range; no further null vectors
                exhausted = True
                break
            v /= vn
            residual = _norm(matvec(v)) / anorm
            nirs = min(nirs + cfg.nirs_increment, cfg.nirs_cap)
        if accepted:
            basis.append(v)
        info.iterations += iters
        info.accepted.append(accepted)
        info.residuals.append(None if exhausted else residual)
        if exhausted:
            info.exhausted = True
            info.message = "no further null vectors (probe contracted to zero)"
        elif not accepted:
            info.message = info.message or \
                f"null vector not accepted within maxit (best {residual:.3e})"
        if not accepted and stop_on_failure:
            break
    V = np.column_stack(basis) if basis else np.zeros((n, 0), dtype=dtype)
    return V, info


def _is_hermitian(a: CompressedMatrix, tol: float = 1e-12) -> bool:
    from .sparse import ROW_MAJOR
    ar = a if a.orientation == ROW_MAJOR else convert(a, ROW_MAJOR)
    at = convert(ar, "col")
    if not np.array_equal(np.asarray(ar.offsets), np.asarray(at.offsets)):
        return False
    if not np.array_equal(ar.indices, at.indices):
        return False
    scale = max(float(np.abs(ar.values).max()), 1e-300) if ar.nnz else 1.0
    return bool(np.max(np.abs(ar.values - np.conj(at.values)), initial=0.0)
                <= tol * scale)


def pipit(a: CompressedMatrix, b, null_dim_hint: int | None = None,
          cfg: KspConfig | None = None, params: Params | None = None,
          precond: HifPrecond | None = None, accept_tol: float = 1e-10,
          seed: int = 0):
    """Pseudoinverse solution of a (possibly inconsistent) square system.

    Step 1 extracts a left null basis, step 2 solves the projected
    consistent system by preconditioned GMRES, step 3 projects the result
    onto the orthogonal complement of the right null space.  One
    factorization serves all three steps.
    """
    cfg = cfg or KspConfig()
    if precond is None:
        precond = factorize(a, params)
    n = a.nrows
    b = as_vector(b, n)
    auto = null_dim_hint is None
    if auto:
        # the dropped factorization cannot reveal the null dimension
        # reliably; probe until a probe contracts to zero
        v_left, info = nullspace_basis(a, precond, n, side="left", cfg=cfg,
                                       accept_tol=accept_tol, seed=seed,
                                       stop_on_failure=True)
        if not info.exhausted and info.accepted and not info.accepted[-1]:
            raise RuntimeError(f"left null-space extraction failed: "
                               f"{info.message or info.residuals}")
    elif null_dim_hint > 0:
        v_left, info = nullspace_basis(a, precond, int(null_dim_hint),
                                       side="left", cfg=cfg,
                                       accept_tol=accept_tol, seed=seed)
        if not all(info.accepted):
            raise RuntimeError(f"left null-space extraction failed: "
                               f"{info.message or info.residuals}")
    else:
        v_left = np.zeros((n, 0), dtype=np.result_type(a.values.dtype,
                                                       np.float64))
    b_proj = b - v_left @ (v_left.conj().T @ b) if v_left.shape[1] else b
    x_ls, stats = gmres(a, b_proj, precond, cfg)
    k = v_left.shape[1]
    if k == 0:
        v_right = v_left
    elif _is_hermitian(a):
        v_right = v_left
    else:
        v_right, info_r = nullspace_basis(a, precond, k, side="right",
                                          cfg=cfg, accept_tol=accept_tol,
                                          seed=seed + 1)
        if not all(info_r.accepted):
            raise RuntimeError(f"right null-space extraction failed: "
                               f"{info_r.message or info_r.residuals}")
    x_pi = x_ls - v_right @ (v_right.conj().T @ x_ls) if v_right.shape[1] \
        else x_ls
    return x_pi, v_left, v_right, stats
