"""Binding-equivalence suite: every entry point is a pure delegation, so
outputs must reproduce the primary library's on identical inputs.
"""

import json

import numpy as np
import pytest
import scipy.sparse as sp

import hif
from hif.cli import main as hif_cli_main
from hif.ksp import KspConfig, gmres, pipit
from hif.precond import Params, factorize

import hifpy
from hifpy import Handle, gmres_hif, hif_apply, hif_create, pipit_hifir


def neumann_laplacian_2d(nx, ny):
    n = nx * ny
    A = sp.lil_matrix((n, n))

    def idx(i, j):
        return i * ny + j

    for i in range(nx):
        for j in range(ny):
            deg = 0
            for ii, jj in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
                if 0 <= ii < nx and 0 <= jj < ny:
                    A[idx(i, j), idx(ii, jj)] = -1.0
                    deg += 1
            A[idx(i, j), idx(i, j)] = deg
    return A.tocsr()


def random_csr(n, density, rng, dominant=4.0):
    A = sp.random(n, n, density=density, random_state=np.random.RandomState(1),
                  format="csr")
    A = A + sp.diags(dominant + rng.random(n))
    return A.tocsr()


@pytest.fixture
def fixture_system():
    rng = np.random.default_rng(0)
    A = random_csr(30, 0.2, rng)
    b = rng.standard_normal(30)
    return A, b


class TestHandle:
    def test_identity_one_level(self):
        h = hif_create(sp.eye(6, format="csr"))
        assert h.stats.levels == 1
        assert h.stats.final_dim == 0

    def test_param_override_reflected(self):
        h = hif_create(sp.eye(4, format="csr"), alpha_L=5)
        assert h.params.alpha_l == 5

    def test_release_semantics(self):
        h = hif_create(sp.eye(4, format="csr"))
        h.release()
        with pytest.raises(RuntimeError):
            hif_apply(h, np.ones(4))

    def test_dense_input_accepted(self):
        A = np.diag([2.0, 3.0])
        h = hif_create(A)
        x = hif_apply(h, np.ones(2))
        assert np.allclose(x, [0.5, 1.0 / 3.0])

    def test_unknown_param_rejected(self):
        with pytest.raises(TypeError):
            hif_create(sp.eye(3, format="csr"), bogus=1)

    def test_mixed_precision(self):
        rng = np.random.default_rng(1)
        A = random_csr(20, 0.2, rng)
        h = hif_create(A, mixed=True)
        assert h.stats.factor_kind == "float32"


class TestApplyEquivalence:
    @pytest.mark.parametrize("op", ["S", "SH", "M", "MH"])
    def test_four_ops_bitwise(self, fixture_system, op):
        A, b = fixture_system
        h = hif_create(A)
        m = h.precond
        got = hif_apply(h, b, op=op)
        trans = op.endswith("H")
        if op.startswith("S"):
            ref = m.solve(b, trans=trans, rnk=0)
        else:
            ref = m.mmultiply(b, trans=trans, rnk=0)
        assert np.array_equal(got, ref)  # shared native path: 0 ulp

    def test_nirs_routes_through_refinement(self, fixture_system):
        A, b = fixture_system
        h = hif_create(A)
        am = h.matrix
        ref = h.precond.hifir(am, b, 3, trans=False, rnk=2)
        got = hif_apply(h, b, op="S", rnk=2, nirs=3)
        assert np.array_equal(got, ref)

    def test_sh_self_adjoint_on_real_symmetric(self):
        rng = np.random.default_rng(2)
        B = rng.standard_normal((10, 10))
        A = sp.csr_matrix(B + B.T + 12 * np.eye(10))
        h = hif_create(A)
        x = rng.standard_normal(10)
        # real symmetric input: the operator is self-adjoint
        assert np.allclose(hif_apply(h, x, op="SH"), hif_apply(h, x, op="S"),
                           rtol=1e-12)

    def test_bad_op(self, fixture_system):
        A, _ = fixture_system
        h = hif_create(A)
        with pytest.raises(ValueError):
            hif_apply(h, np.ones(30), op="X")


class TestSparsifier:
    def test_factorization_on_sparsifier_solves_full(self):
        rng = np.random.default_rng(3)
        n = 24
        A = random_csr(n, 0.25, rng).toarray()
        S = np.triu(A)  # sparsifier: drop the strictly lower block
        b = rng.standard_normal(n)
        x, stats = gmres_hif(sp.csr_matrix(A), b,
                             sparsifier=sp.csr_matrix(S), rtol=1e-10)
        # primary-route reference: factorize the sparsifier, solve full A
        a_cm = hifpy._to_matrix(sp.csr_matrix(A))
        s_cm = hifpy._to_matrix(sp.csr_matrix(S))
        m = factorize(s_cm, Params())
        ref, ref_stats = gmres(a_cm, b, m, KspConfig(rtol=1e-10))
        assert np.array_equal(x, ref)
        assert stats.iterations == ref_stats.iterations
        # the solve really targeted A, not the sparsifier
        assert np.linalg.norm(A @ x - b) <= 1e-9 * np.linalg.norm(b)


class TestDrivers:
    def test_gmres_identity(self):
        x, stats = gmres_hif(sp.eye(5, format="csr"), np.arange(5.0))
        assert stats.converged and stats.iterations == 1

    def test_gmres_matches_primary(self, fixture_system):
        A, b = fixture_system
        x, stats = gmres_hif(A, b, rtol=1e-10)
        a_cm = hifpy._to_matrix(A)
        m = factorize(a_cm, Params())
        ref, ref_stats = gmres(a_cm, b, m, KspConfig(rtol=1e-10))
        assert np.linalg.norm(x - ref) <= 1e-12 * np.linalg.norm(ref)
        assert stats.iterations == ref_stats.iterations
        assert stats.relres == ref_stats.relres

    def test_pipit_neumann_vs_pinv(self):
        A = neumann_laplacian_2d(9, 9)
        rng = np.random.default_rng(4)
        b = rng.standard_normal(A.shape[0])
        x, nulls, stats = pipit_hifir(A, b, rtol=1e-10)
        ref = np.linalg.pinv(A.toarray()) @ b
        assert np.linalg.norm(x - ref) <= 1e-8 * np.linalg.norm(ref)
        assert nulls["left"].shape[1] == 1

    def test_pipit_matches_primary(self):
        A = neumann_laplacian_2d(7, 7)
        rng = np.random.default_rng(5)
        b = rng.standard_normal(A.shape[0])
        x, nulls, stats = pipit_hifir(A, b, rtol=1e-10)
        a_cm = hifpy._to_matrix(A)
        m = factorize(a_cm, Params())
        ref_x, ref_l, ref_r, ref_stats = pipit(a_cm, b, precond=m,
                                               cfg=KspConfig(rtol=1e-10))
        assert np.linalg.norm(x - ref_x) <= 1e-12 * np.linalg.norm(ref_x)
        assert np.array_equal(nulls["left"], ref_l)


class TestCliCrossCheck:
    def test_stats_fields_equal_cli(self, tmp_path, fixture_system):
        A, _ = fixture_system
        a_cm = hifpy._to_matrix(A)
        mpath = tmp_path / "a.mtx"
        hif.write_matrix_market(a_cm, mpath)
        spath = tmp_path / "s.json"
        rc = hif_cli_main([str(mpath), "--rhs", "ones-image",
                           "--rtol", "1e-8", "--stats", str(spath)])
        assert rc == 0
        doc = json.loads(spath.read_text())
        b = A @ np.ones(A.shape[0])
        x, stats = gmres_hif(A, b, rtol=1e-8)
        h = hif_create(A)
        assert doc["iterations"] == stats.iterations
        assert doc["levels"] == h.stats.levels
        assert doc["final_schur_dim"] == h.stats.final_dim
        assert doc["nnz_ratio"] == pytest.approx(h.stats.nnz_ratio)
        # rhs vectors come from different matvec kernels (last-ulp apart),
        # so converged residuals agree to leading digits only
        assert doc["relres"] == pytest.approx(stats.relres, rel=1e-3,
                                              abs=1e-14)


def test_acceptance_binding_equivalence(fixture_system):
    """[SECONDARY] all four op codes plus both drivers reproduce the
    primary component's outputs on the shared fixture to 1e-12."""
    A, b = fixture_system
    h = hif_create(A)
    m = h.precond
    for op, ref in (("S", m.solve(b)), ("SH", m.solve(b, trans=True)),
                    ("M", m.mmultiply(b, rnk=0)),
                    ("MH", m.mmultiply(b, trans=True, rnk=0))):
        got = hif_apply(h, b, op=op)
        assert np.linalg.norm(got - ref) <= 1e-12 * np.linalg.norm(ref)
    x, _ = gmres_hif(A, b, handle=h, rtol=1e-10)
    a_cm = h.matrix
    ref_x, _ = gmres(a_cm, b, m, KspConfig(rtol=1e-10))
    assert np.linalg.norm(x - ref_x) <= 1e-12 * max(np.linalg.norm(ref_x), 1)
    An = neumann_laplacian_2d(8, 8)
    bn = np.random.default_rng(6).standard_normal(An.shape[0])
    x1, nulls, _ = pipit_hifir(An, bn, rtol=1e-10)
    an_cm = hifpy._to_matrix(An)
    mn = factorize(an_cm, Params())
    x2, vl, vr, _ = pipit(an_cm, bn, precond=mn, cfg=KspConfig(rtol=1e-10))
    assert np.linalg.norm(x1 - x2) <= 1e-12 * max(np.linalg.norm(x2), 1)
    print("\nACCEPTANCE binding equivalence: PASS")
