"""Multilevel incomplete-LDU preconditioning with a truncated rank-revealing
QR on the final Schur complement, plus Krylov drivers for ill-conditioned,
singular, and inconsistent sparse systems.
"""

from .sparse import (CompressedMatrix, ROW_MAJOR, COL_MAJOR, from_triplets,
                     from_arrays, identity, convert, spmv,
                     pattern_symmetry_ratio)
from .mmio import read_matrix_market, write_matrix_market, read_vector, \
    write_vector, MatrixMarketError
from .augmented import AugmentedFactor, AugMode
from .precond import Params, HifPrecond, FactorStats, factorize
from .rrqr import QrcpFactor, qrcp, estimate_rank, apply_pinv
from .ksp import (KspConfig, SolveStats, gmres, fgmres_hifir,
                  nullspace_basis, pipit)

__all__ = [
    "CompressedMatrix", "ROW_MAJOR", "COL_MAJOR", "from_triplets",
    "from_arrays", "identity", "convert", "spmv", "pattern_symmetry_ratio",
    "read_matrix_market", "write_matrix_market", "read_vector",
    "write_vector", "MatrixMarketError",
    "AugmentedFactor", "AugMode",
    "Params", "HifPrecond", "FactorStats", "factorize",
    "QrcpFactor", "qrcp", "estimate_rank", "apply_pinv",
    "KspConfig", "SolveStats", "gmres", "fgmres_hifir", "nullspace_basis",
    "pipit",
]

__version__ = "0.1.0"
