"""High-level wrapper around the hif preconditioner library.

Accepts scipy.sparse matrices (any format) and numpy arrays, and exposes
three entry points: a factorized handle (:func:`hif_create`), its four
application modes (:func:`hif_apply`), and the two solution drivers
(:func:`gmres_hif`, :func:`pipit_hifir`).  All numerics live in the
underlying library; this layer only marshals types.
"""

from __future__ import annotations

from dataclasses import fields as _dataclass_fields

import numpy as np
import scipy.sparse as sp

import hif
from hif.ksp import KspConfig, gmres, pipit
from hif.precond import Params, factorize

__all__ = ["Handle", "hif_create", "hif_apply", "gmres_hif", "pipit_hifir"]

_PARAM_FIELDS = {f.name for f in _dataclass_fields(Params)}
_KSP_FIELDS = {f.name for f in _dataclass_fields(KspConfig)}

_OPS = ("S", "SH", "M", "MH")


def _to_matrix(matrix) -> hif.CompressedMatrix:
    if isinstance(matrix, hif.CompressedMatrix):
        return matrix
    if sp.issparse(matrix):
        csr = matrix.tocsr().copy()
        csr.sum_duplicates()
        csr.sort_indices()
        return hif.from_arrays(hif.ROW_MAJOR, csr.shape[0], csr.shape[1],
                               csr.indptr, csr.indices, csr.data)
    arr = np.asarray(matrix)
    if arr.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    nz = np.nonzero(arr)
    trips = list(zip(nz[0].tolist(), nz[1].tolist(), arr[nz]))
    return hif.from_triplets(arr.shape[0], arr.shape[1], trips,
                             dtype=arr.dtype)


def _split_params(overrides: dict) -> tuple[Params, dict]:
    norm = {}
    extra = {}
    mixed = False
    for key, val in overrides.items():
        k = key.lower()
        if k == "mixed":
            mixed = bool(val)
        elif k in _PARAM_FIELDS:
            norm[k] = val
        else:
            extra[key] = val
    return Params(**norm), {"mixed": mixed, **extra}


class Handle:
    """Factorized preconditioner handle; valid until :meth:`release`."""

    def __init__(self, matrix, precond, params):
        self._matrix = matrix
        self._precond = precond
        self.params = params
        self._released = False

    def _check(self):
        if self._released:
            raise RuntimeError("handle has been released")

    @property
    def precond(self):
        self._check()
        return self._precond

    @property
    def matrix(self):
        self._check()
        return self._matrix

    @property
    def stats(self):
        self._check()
        return self._precond.stats

    def release(self) -> None:
        self._released = True
        self._precond = None
        self._matrix = None


def hif_create(matrix, sparsifier=None, **param_overrides) -> Handle:
    """Factorize ``matrix`` (or the sparsifier, when given) into a handle.

    When a sparsifier S is supplied, the factorization runs on S while
    applications and drivers keep targeting the full matrix.  Keyword
    overrides map onto the control parameters case-insensitively
    (``alpha_L=5`` works); ``mixed=True`` factorizes real input in single
    precision.
    """
    a = _to_matrix(matrix)
    target = _to_matrix(sparsifier) if sparsifier is not None else a
    params, extra = _split_params(param_overrides)
    factor_dtype = None
    if extra.pop("mixed"):
        if np.iscomplexobj(a.values):
            raise ValueError("mixed precision supports real input only")
        factor_dtype = np.float32
    if extra:
        raise TypeError(f"unknown parameter(s): {sorted(extra)}")
    precond = factorize(target, params, factor_dtype=factor_dtype)
    return Handle(a, precond, params)


def hif_apply(handle: Handle, x, op: str = "S", rnk: int = 0,
              nirs: int = 1) -> np.ndarray:
    """Apply one of the four preconditioner actions to a vector.

    op 'S' and 'SH' are the generalized-inverse solve and its adjoint
    (with ``nirs`` refinement sweeps when > 1); 'M' and 'MH' multiply by
    the factored operator and its adjoint.
    """
    if op not in _OPS:
        raise ValueError(f"op must be one of {_OPS}")
    handle._check()
    x = np.asarray(x)
    trans = op.endswith("H")
    if op.startswith("S"):
        if nirs > 1:
            return handle.precond.hifir(handle.matrix, x, nirs, trans=trans,
                                        rnk=rnk)
        return handle.precond.solve(x, trans=trans, rnk=rnk)
    return handle.precond.mmultiply(x, trans=trans, rnk=rnk)


def _split_cfg(kw: dict) -> tuple[KspConfig, dict]:
    cfg_kw = {k: v for k, v in kw.items() if k in _KSP_FIELDS}
    rest = {k: v for k, v in kw.items() if k not in _KSP_FIELDS}
    return KspConfig(**cfg_kw), rest


def gmres_hif(matrix, b, sparsifier=None, handle: Handle | None = None,
              x0=None, rnk: int = 0, **cfg_and_params):
    """Right-preconditioned restarted GMRES on standard sparse input."""
    cfg, rest = _split_cfg(cfg_and_params)
    if handle is None:
        handle = hif_create(matrix, sparsifier, **rest)
    elif rest:
        raise TypeError(f"unknown option(s): {sorted(rest)}")
    handle._check()
    x, stats = gmres(handle.matrix, np.asarray(b), handle.precond, cfg,
                     x0=x0, rnk=rnk)
    return x, stats


def pipit_hifir(matrix, b, null_dim_hint=None, handle: Handle | None = None,
                accept_tol: float = 1e-10, seed: int = 0, **cfg_and_params):
    """Pseudoinverse solution driver; returns (x, null_vectors, stats)."""
    cfg, rest = _split_cfg(cfg_and_params)
    if handle is None:
        handle = hif_create(matrix, **rest)
    elif rest:
        raise TypeError(f"unknown option(s): {sorted(rest)}")
    handle._check()
    x, v_left, v_right, stats = pipit(handle.matrix, np.asarray(b),
                                      null_dim_hint=null_dim_hint, cfg=cfg,
                                      precond=handle.precond,
                                      accept_tol=accept_tol, seed=seed)
    return x, {"left": v_left, "right": v_right}, stats
