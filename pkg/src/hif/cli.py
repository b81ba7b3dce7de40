"""Batch command-line front end: load a system, factorize, solve, emit the
solution vector (Matrix Market array format) and a JSON stats document.

Exit codes: 0 converged, 1 input error, 2 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import mmio
from .ksp import KspConfig, gmres, fgmres_hifir, pipit
from .precond import Params, factorize
from .sparse import spmv

STATS_SCHEMA_VERSION = 1

_PRECISIONS = {"f64": np.float64, "f32": np.float32, "c64": np.complex128}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hif-solve",
        description="Solve a sparse linear system with the multilevel "
                    "incomplete-LDU + rank-revealing-QR preconditioner.")
    p.add_argument("matrix", help="coefficient matrix (Matrix Market file)")
    p.add_argument("--rhs", default="ones-image",
                   help="right-hand side: file:PATH, ones-image (b = A*1), "
                        "or random[:seed]")
    p.add_argument("--solver", choices=("gmres", "fgmres", "pipit"),
                   default="gmres")
    p.add_argument("--rtol", type=float, default=1e-6)
    p.add_argument("--restart", type=int, default=30)
    p.add_argument("--maxit", type=int, default=500)
    p.add_argument("--ibrp", choices=("auto", "on", "off"), default="auto")
    p.add_argument("--tau", type=float, default=None,
                   help="drop tolerance for both factors")
    p.add_argument("--alpha", type=float, default=None,
                   help="fill factor for both factors")
    p.add_argument("--kappa", type=float, default=None,
                   help="inverse-norm threshold for factors and diagonal")
    p.add_argument("--precision", choices=sorted(_PRECISIONS), default=None,
                   help="factorization scalar kind (defaults to the input's)")
    p.add_argument("--output", default=None,
                   help="solution vector path (Matrix Market array format)")
    p.add_argument("--stats", default=None, help="stats JSON path")
    return p


def _make_rhs(spec: str, a) -> np.ndarray:
    if spec.startswith("file:"):
        return mmio.read_vector(spec[5:])
    if spec == "ones-image":
        return spmv(a, np.ones(a.ncols, dtype=a.values.dtype))
    if spec == "random" or spec.startswith("random:"):
        seed = int(spec.split(":", 1)[1]) if ":" in spec else 0
        rng = np.random.default_rng(seed)
        b = rng.standard_normal(a.nrows)
        if np.iscomplexobj(a.values):
            b = b + 1j * rng.standard_normal(a.nrows)
        return b
    raise ValueError(f"unknown rhs spec {spec!r}")


def run(args) -> int:
    try:
        a = mmio.read_matrix_market(args.matrix)
        if a.nrows != a.ncols:
            raise ValueError("matrix must be square")
        b = _make_rhs(args.rhs, a)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    params = Params(ibrp=args.ibrp)
    if args.tau is not None:
        params.tau_l = params.tau_u = args.tau
    if args.alpha is not None:
        params.alpha_l = params.alpha_u = args.alpha
    if args.kappa is not None:
        params.kappa = params.kappa_d = args.kappa
    cfg = KspConfig(restart=args.restart, rtol=args.rtol, maxit=args.maxit)
    factor_dtype = _PRECISIONS[args.precision] if args.precision else None

    t0 = time.perf_counter()
    try:
        m = factorize(a, params, factor_dtype=factor_dtype)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    t_factor = time.perf_counter() - t0

    t0 = time.perf_counter()
    nulls = 0
    if args.solver == "gmres":
        x, st = gmres(a, b, m, cfg)
    elif args.solver == "fgmres":
        x, st = fgmres_hifir(a, b, m, cfg)
    else:
        x, vl, vr, st = pipit(a, b, cfg=cfg, precond=m)
        nulls = vl.shape[1]
    t_solve = time.perf_counter() - t0

    if args.output:
        mmio.write_vector(x, args.output)
    fs = m.stats
    doc = {
        "schema_version": STATS_SCHEMA_VERSION,
        "matrix": args.matrix,
        "n": fs.n,
        "nnz": fs.input_nnz,
        "solver": args.solver,
        "levels": fs.levels,
        "level_details": fs.level_details,
        "nnz_ratio": fs.nnz_ratio,
        "final_schur_dim": fs.final_dim,
        "rank_default": fs.rank_default,
        "rank_nullspace": fs.rank_nullspace,
        "null_dim_found": nulls,
        "iterations": st.iterations,
        "restarts": st.restarts,
        "converged": st.converged,
        "relres": st.relres,
        "residual_history": list(st.history),
        "factor_kind": fs.factor_kind,
        "times": {"factorize": t_factor, "solve": t_solve},
    }
    text = json.dumps(doc, indent=2)
    if args.stats:
        with open(args.stats, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0 if st.converged else 2


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
