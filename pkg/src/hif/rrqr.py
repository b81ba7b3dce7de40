"""Column-pivoted QR of the final dense block, with incremental condition
estimation, two stored numerical ranks, and rank-truncated generalized-inverse
and adjoint applications.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla


def default_rrqr_threshold(dtype=np.float64) -> float:
    eps = float(np.finfo(np.dtype(dtype)).eps)
    return eps ** (-2.0 / 3.0)


@dataclass
class QrcpFactor:
    q: np.ndarray              # n_s x n_s unitary factor
    r: np.ndarray              # n_s x n_s upper triangular, |diag| nonincreasing
    perm: np.ndarray           # pivot permutation: S[:, perm] = Q R
    rank_default: int = 0      # numerical rank under the RRQR threshold
    rank_nullspace: int = 0    # numerical rank under 1/eps_mach
    cond_history: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n(self) -> int:
        return self.r.shape[0]

    @property
    def diag_magnitudes(self) -> np.ndarray:
        return np.abs(np.diag(self.r))


def qrcp(s: np.ndarray) -> QrcpFactor:
    """Householder QR with greedy column pivoting (largest residual norm)."""
    s = np.asarray(s)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError("expected a square dense matrix")
    n = s.shape[0]
    if n == 0:
        z = s.reshape(0, 0)
        return QrcpFactor(z.copy(), z.copy(), np.zeros(0, dtype=np.int64))
    q, r, perm = sla.qr(s, pivoting=True, mode="full")
    return QrcpFactor(q, r, perm.astype(np.int64))


def _ice_step(sest: float, x: np.ndarray, w: np.ndarray, gamma, job: str
              ) -> tuple[float, np.ndarray]:
    """One incremental estimation step for extreme singular pairs.

    Given an approximate extreme singular value ``sest`` with right vector
    ``x`` of a triangular matrix R, incorporate the new bordered column
    ``[w; gamma]`` through the 2x2 subproblem over span{[x;0], [0;1]} and
    return the updated estimate and vector.
    """
    alpha = np.vdot(x, w)
    a11 = sest * sest + abs(alpha) ** 2
    a12 = np.conj(alpha) * gamma
    a22 = abs(gamma) ** 2
    # Hermitian 2x2 [[a11, a12], [conj(a12), a22]]
    tr = a11 + a22
    det = a11 * a22 - abs(a12) ** 2
    disc = max((a11 - a22) ** 2 / 4.0 + abs(a12) ** 2, 0.0)
    root = np.sqrt(disc)
    mid = tr / 2.0
    lam = mid + root if job == "max" else max(mid - root, 0.0)
    # eigenvector (s, c) of the 2x2 for lam
    if abs(a12) > 0:
        svec = np.array([a12, lam - a11])
    else:
        svec = np.array([1.0, 0.0]) if (job == "max") == (a11 >= a22) \
            else np.array([0.0, 1.0])
    nrm = np.linalg.norm(svec)
    if nrm == 0:
        svec = np.array([1.0, 0.0])
        nrm = 1.0
    svec = svec / nrm
    xnew = np.concatenate([svec[0] * x, svec[1:2].astype(x.dtype)])
    return float(np.sqrt(max(lam, 0.0))), xnew


def condition_history(r: np.ndarray) -> np.ndarray:
    """Estimated 2-norm condition of each leading triangle R[:k,:k]."""
    n = r.shape[0]
    hist = np.zeros(n)
    if n == 0:
        return hist
    g0 = abs(r[0, 0])
    smax, xmax = g0, np.ones(1, dtype=r.dtype)
    smin, xmin = g0, np.ones(1, dtype=r.dtype)
    hist[0] = 1.0 if g0 > 0 else np.inf
    for k in range(1, n):
        w = r[:k, k]
        gamma = r[k, k]
        smax, xmax = _ice_step(smax, xmax, w, gamma, "max")
        smin, xmin = _ice_step(smin, xmin, w, gamma, "min")
        hist[k] = smax / smin if smin > 0 else np.inf
    return hist


def estimate_rank(f: QrcpFactor, kappa_threshold: float,
                  zero_floor: float = 0.0) -> int:
    """Largest r with estimated cond(R[:r,:r]) strictly below the threshold.

    Diagonal magnitudes at or below ``zero_floor`` terminate the prefix as
    exact zeros regardless of the (scale-free) condition estimate.
    """
    if f.cond_history.size != f.n:
        f.cond_history = condition_history(f.r)
    diag = f.diag_magnitudes
    r = 0
    for k in range(f.n):
        if diag[k] <= zero_floor or not f.cond_history[k] < kappa_threshold:
            break
        r = k + 1
    return r


def attach_ranks(f: QrcpFactor, kappa_rrqr: float, dtype=np.float64,
                 zero_floor: float = 0.0) -> QrcpFactor:
    """Compute and store both stored ranks (solve threshold and 1/eps)."""
    f.cond_history = condition_history(f.r)
    f.rank_default = estimate_rank(f, kappa_rrqr, zero_floor)
    f.rank_nullspace = estimate_rank(
        f, 1.0 / float(np.finfo(np.dtype(dtype)).eps), zero_floor)
    return f


def apply_pinv(f: QrcpFactor, y: np.ndarray, r: int, adjoint: bool = False
               ) -> np.ndarray:
    """Rank-r generalized-inverse action of the factored block.

    Computes P[:, :r] R_r^{-1} Q[:, :r]^H y, or its conjugate transpose
    Q[:, :r] R_r^{-H} P[:, :r]^T y when ``adjoint``.
    """
    n = f.n
    if r == 0 or n == 0:
        return np.zeros(n, dtype=np.result_type(f.r.dtype, np.asarray(y).dtype))
    if not (1 <= r <= n):
        raise ValueError(f"rank {r} out of range [1, {n}]")
    y = np.asarray(y)
    if not adjoint:
        t = f.q[:, :r].conj().T @ y
        t = sla.solve_triangular(f.r[:r, :r], t, lower=False)
        out = np.zeros(n, dtype=t.dtype)
        out[f.perm[:r]] = t
        return out
    t = y[f.perm[:r]]
    t = sla.solve_triangular(f.r[:r, :r], t, lower=False, trans="C")
    return f.q[:, :r] @ t


def apply_forward(f: QrcpFactor, x: np.ndarray, r: int, adjoint: bool = False
                  ) -> np.ndarray:
    """Rank-r reconstruction action: S x ~= Q[:, :r] R[:r, :] P^T x."""
    n = f.n
    if n == 0:
        return np.zeros(0, dtype=f.r.dtype)
    x = np.asarray(x)
    r = max(0, min(r, n))
    if not adjoint:
        t = x[f.perm]
        t = f.r[:r, :] @ t
        return f.q[:, :r] @ t
    t = f.q[:, :r].conj().T @ x
    t = f.r[:r, :].conj().T @ t
    out = np.zeros(n, dtype=t.dtype)
    out[f.perm] = t
    return out
