import numpy as np
import pytest

from hif.rrqr import (apply_forward, apply_pinv, attach_ranks,
                      condition_history, default_rrqr_threshold,
                      estimate_rank, qrcp)

from problems import svd_matrix


class TestQrcp:
    def test_identity(self):
        f = qrcp(np.eye(4))
        assert np.array_equal(f.perm, np.arange(4))
        assert np.allclose(np.abs(np.diag(f.r)), 1.0)
        assert np.allclose(np.abs(f.q @ f.r), np.eye(4))

    def test_rank_one_ones(self):
        f = qrcp(np.ones((3, 3)))
        d = f.diag_magnitudes
        assert d[0] == pytest.approx(np.sqrt(3.0))  # pivot column norm
        assert d[1] == pytest.approx(0.0, abs=1e-14)
        assert d[2] == pytest.approx(0.0, abs=1e-14)

    def test_random_reconstruction_and_ordering(self):
        rng = np.random.default_rng(30)
        S = rng.standard_normal((20, 20))
        f = qrcp(S)
        err = np.linalg.norm(S[:, f.perm] - f.q @ f.r)
        assert err <= 1e-13 * np.linalg.norm(S)
        d = f.diag_magnitudes
        assert np.all(d[:-1] >= d[1:] - 1e-12)

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            qrcp(np.ones((2, 3)))


class TestEstimateRank:
    def test_identity_full_rank(self):
        f = qrcp(np.eye(6))
        assert estimate_rank(f, default_rrqr_threshold()) == 6

    def test_tiny_second_diagonal(self):
        f = qrcp(np.diag([1.0, 1e-20]))
        assert estimate_rank(f, default_rrqr_threshold()) == 1

    def test_known_numerical_rank(self):
        rng = np.random.default_rng(31)
        sig = np.concatenate([0.5 + rng.random(7), np.full(5, 1e-14)])
        S = svd_matrix(12, sig, rng)
        f = qrcp(S)
        assert estimate_rank(f, default_rrqr_threshold()) == 7

    def test_zero_matrix(self):
        f = qrcp(np.zeros((3, 3)))
        assert estimate_rank(f, default_rrqr_threshold()) == 0

    def test_condition_estimate_sanity(self):
        rng = np.random.default_rng(32)
        worst = 1.0
        for _ in range(15):
            n = int(rng.integers(3, 41))
            R = np.triu(rng.standard_normal((n, n)))
            R[np.diag_indices(n)] += np.sign(np.diag(R)) * 0.5
            hist = condition_history(R)
            exact = np.linalg.cond(R)
            ratio = max(hist[-1] / exact, exact / hist[-1])
            worst = max(worst, ratio)
            assert ratio <= 10.0 * n
        # directional estimators are loose by design; record the spread
        assert worst >= 1.0


class TestApplyPinv:
    def test_identity_any_rank(self):
        f = attach_ranks(qrcp(np.eye(5)), default_rrqr_threshold())
        y = np.arange(5.0)
        assert np.allclose(apply_pinv(f, y, 5), y)

    def test_nonsingular_matches_dense_solve(self):
        rng = np.random.default_rng(33)
        S = rng.standard_normal((12, 12)) + 4 * np.eye(12)
        f = qrcp(S)
        y = rng.standard_normal(12)
        x = apply_pinv(f, y, 12)
        assert np.linalg.norm(x - np.linalg.solve(S, y)) <= \
            1e-12 * np.linalg.norm(x)

    def test_range_identity_rank_deficient(self):
        rng = np.random.default_rng(34)
        sig = np.concatenate([0.5 + rng.random(8), np.zeros(4)])
        S = svd_matrix(12, sig, rng)
        f = attach_ranks(qrcp(S), default_rrqr_threshold())
        z = rng.standard_normal(12)
        y = S @ z
        x = apply_pinv(f, y, f.rank_default)
        assert np.linalg.norm(S @ x - y) <= 1e-10 * np.linalg.norm(y)

    def test_generalized_inverse_identity(self):
        rng = np.random.default_rng(35)
        for n, k in ((20, 3), (50, 5)):
            sig = np.concatenate([0.5 + rng.random(n - k), np.zeros(k)])
            S = svd_matrix(n, sig, rng)
            f = attach_ranks(qrcp(S), default_rrqr_threshold(),
                             zero_floor=n * 16 * np.finfo(float).eps)
            G = np.column_stack([apply_pinv(f, e, f.rank_nullspace)
                                 for e in np.eye(n)])
            err = np.linalg.norm(S @ G @ S - S)
            assert err <= 1e-9 * np.linalg.norm(S)

    def test_adjoint_is_conjugate_transpose(self):
        rng = np.random.default_rng(36)
        S = rng.standard_normal((9, 9)) + 1j * rng.standard_normal((9, 9))
        f = qrcp(S)
        r = 7
        G = np.column_stack([apply_pinv(f, e, r) for e in np.eye(9)])
        GH = np.column_stack([apply_pinv(f, e, r, adjoint=True)
                              for e in np.eye(9)])
        assert np.linalg.norm(GH - G.conj().T) <= 1e-13 * np.linalg.norm(G)

    def test_rank_out_of_range(self):
        f = qrcp(np.eye(3))
        with pytest.raises(ValueError):
            apply_pinv(f, np.ones(3), 4)

    def test_forward_reconstruction(self):
        rng = np.random.default_rng(37)
        S = rng.standard_normal((10, 10))
        f = qrcp(S)
        x = rng.standard_normal(10)
        assert np.allclose(apply_forward(f, x, 10), S @ x)
        assert np.allclose(apply_forward(f, x, 10, adjoint=True), S.T @ x)
