"""Matrix Market coordinate and array I/O.

Coordinate files are read as general matrices: symmetric, hermitian and
skew-symmetric storage is expanded, pattern entries become 1, and 1-based
indices are converted.  Writing always emits general coordinate format with
full precision so that read(write(m)) reproduces m exactly.
"""

from __future__ import annotations

import numpy as np

from .sparse import ROW_MAJOR, CompressedMatrix, from_triplets

_FIELDS = {"real", "complex", "integer", "pattern"}
_SYMMETRIES = {"general", "symmetric", "hermitian", "skew-symmetric"}


class MatrixMarketError(ValueError):
    """Malformed header, inconsistent counts, or out-of-bounds index."""


def _parse_header(line: str) -> tuple[str, str]:
    parts = line.strip().lower().split()
    if (len(parts) != 5 or parts[0] != "%%matrixmarket" or parts[1] != "matrix"
            or parts[2] != "coordinate"):
        raise MatrixMarketError(f"unsupported or malformed header: {line.strip()!r}")
    field, symmetry = parts[3], parts[4]
    if field not in _FIELDS:
        raise MatrixMarketError(f"unknown field kind {field!r}")
    if symmetry not in _SYMMETRIES:
        raise MatrixMarketError(f"unknown symmetry qualifier {symmetry!r}")
    return field, symmetry


def read_matrix_market(path, orientation: str = ROW_MAJOR) -> CompressedMatrix:
    with open(path, "r") as fh:
        header = fh.readline()
        if not header:
            raise MatrixMarketError("empty file")
        field, symmetry = _parse_header(header)
        line = fh.readline()
        while line and line.lstrip().startswith("%"):
            line = fh.readline()
        try:
            nrows, ncols, nnz = (int(t) for t in line.split())
        except Exception as exc:
            raise MatrixMarketError(f"bad size line: {line.strip()!r}") from exc
        if symmetry != "general" and nrows != ncols:
            raise MatrixMarketError("symmetric qualifiers require a square matrix")

        dtype = np.complex128 if field == "complex" else np.float64
        entries = []
        count = 0
        for line in fh:
            line = line.strip()
            if not line or line.startswith("%"):
                continue
            toks = line.split()
            try:
                i, j = int(toks[0]) - 1, int(toks[1]) - 1
                if field == "pattern":
                    v = 1.0
                elif field == "complex":
                    v = complex(float(toks[2]), float(toks[3]))
                else:
                    v = float(toks[2])
            except (IndexError, ValueError) as exc:
                raise MatrixMarketError(f"bad entry line: {line!r}") from exc
            if not (0 <= i < nrows and 0 <= j < ncols):
                raise MatrixMarketError(f"index out of bounds on line: {line!r}")
            count += 1
            entries.append((i, j, v))
            if symmetry != "general" and i != j:
                if symmetry == "symmetric":
                    entries.append((j, i, v))
                elif symmetry == "hermitian":
                    entries.append((j, i, np.conj(v)))
                else:  # skew-symmetric
                    entries.append((j, i, -v))
        if count != nnz:
            raise MatrixMarketError(f"entry count {count} does not match header {nnz}")
    return from_triplets(nrows, ncols, entries, orientation=orientation, dtype=dtype)


def _fmt(v) -> str:
    if np.iscomplexobj(np.asarray(v)):
        return f"{v.real:.17g} {v.imag:.17g}"
    return f"{v:.17g}"


def write_matrix_market(m: CompressedMatrix, path) -> None:
    field = "complex" if np.iscomplexobj(m.values) else "real"
    with open(path, "w") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate {field} general\n")
        fh.write(f"{m.nrows} {m.ncols} {m.nnz}\n")
        for k in range(m.primary_dim):
            idx, val = m.slice(k)
            for j, v in zip(idx, val):
                i, jj = (k, j) if m.orientation == ROW_MAJOR else (j, k)
                fh.write(f"{i + 1} {jj + 1} {_fmt(v)}\n")


def read_vector(path) -> np.ndarray:
    """Read a dense vector in Matrix Market array format."""
    with open(path, "r") as fh:
        header = fh.readline().strip().lower().split()
        if (len(header) != 5 or header[0] != "%%matrixmarket"
                or header[2] != "array"):
            raise MatrixMarketError("expected Matrix Market array format")
        field = header[3]
        line = fh.readline()
        while line and line.lstrip().startswith("%"):
            line = fh.readline()
        nrows, ncols = (int(t) for t in line.split())
        if ncols != 1:
            raise MatrixMarketError("expected a single-column array")
        vals = []
        for line in fh:
            line = line.strip()
            if not line or line.startswith("%"):
                continue
            toks = line.split()
            if field == "complex":
                vals.append(complex(float(toks[0]), float(toks[1])))
            else:
                vals.append(float(toks[0]))
        if len(vals) != nrows:
            raise MatrixMarketError("array entry count does not match header")
    dtype = np.complex128 if field == "complex" else np.float64
    return np.asarray(vals, dtype=dtype)


def write_vector(x: np.ndarray, path) -> None:
    field = "complex" if np.iscomplexobj(x) else "real"
    with open(path, "w") as fh:
        fh.write(f"%%MatrixMarket matrix array {field} general\n")
        fh.write(f"{x.shape[0]} 1\n")
        for v in x:
            fh.write(_fmt(v) + "\n")
