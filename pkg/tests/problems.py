"""Shared test-problem generators and oracles."""

import numpy as np

from hif.sparse import ROW_MAJOR, from_arrays, from_triplets


def dense_to_cm(A, orientation=ROW_MAJOR):
    n, m = A.shape
    trips = [(i, j, A[i, j]) for i in range(n) for j in range(m)
             if A[i, j] != 0]
    return from_triplets(n, m, trips, orientation=orientation,
                         dtype=A.dtype)


def random_sparse(n, density, rng, dtype=np.float64, dominant=0.0):
    A = np.where(rng.random((n, n)) < density,
                 rng.standard_normal((n, n)), 0.0).astype(dtype)
    if np.issubdtype(np.dtype(dtype), np.complexfloating):
        A = A + 1j * np.where(np.abs(A) > 0, rng.standard_normal((n, n)), 0.0)
    if dominant:
        A = A + np.diag(dominant + rng.random(n)).astype(dtype)
    return A


def svd_matrix(n, sigmas, rng, dtype=np.float64):
    """Dense matrix with prescribed singular values, via random factors."""
    X = rng.standard_normal((n, n))
    Y = rng.standard_normal((n, n))
    if np.issubdtype(np.dtype(dtype), np.complexfloating):
        X = X + 1j * rng.standard_normal((n, n))
        Y = Y + 1j * rng.standard_normal((n, n))
    U, _ = np.linalg.qr(X)
    V, _ = np.linalg.qr(Y)
    return ((U * np.asarray(sigmas)) @ V.conj().T).astype(dtype)


def grid_laplacian(nx, ny, neumann=False):
    """5-point Laplacian on an nx-by-ny grid (Dirichlet or pure Neumann)."""
    n = nx * ny
    cols, vals = [], []
    offs = [0]

    def idx(i, j):
        return i * ny + j

    for i in range(nx):
        for j in range(ny):
            ent = []
            deg = 0
            for (ii, jj) in ((i - 1, j), (i, j - 1), (i, j + 1), (i + 1, j)):
                if 0 <= ii < nx and 0 <= jj < ny:
                    ent.append((idx(ii, jj), -1.0))
                    deg += 1
            ent.append((idx(i, j), float(deg) if neumann else 4.0))
            ent.sort()
            for c, v in ent:
                cols.append(c)
                vals.append(v)
            offs.append(len(cols))
    return from_arrays(ROW_MAJOR, n, n, np.array(offs), np.array(cols),
                       np.array(vals))


def helmholtz_3d(nx, k2):
    """7-point (-laplacian - k^2) on an nx^3 Dirichlet grid, h^2-scaled."""
    n = nx ** 3
    h = 1.0 / (nx + 1)
    diag = 6.0 - k2 * h * h
    cols, vals = [], []
    offs = [0]

    def idx(i, j, l):
        return (i * nx + j) * nx + l

    for i in range(nx):
        for j in range(nx):
            for l in range(nx):
                ent = []
                for (a, b, c) in ((i - 1, j, l), (i, j - 1, l), (i, j, l - 1),
                                  (i, j, l + 1), (i, j + 1, l), (i + 1, j, l)):
                    if 0 <= a < nx and 0 <= b < nx and 0 <= c < nx:
                        ent.append((idx(a, b, c), -1.0))
                ent.append((idx(i, j, l), diag))
                ent.sort()
                for cc, v in ent:
                    cols.append(cc)
                    vals.append(v)
                offs.append(len(cols))
    return from_arrays(ROW_MAJOR, n, n, np.array(offs), np.array(cols),
                       np.array(vals))
