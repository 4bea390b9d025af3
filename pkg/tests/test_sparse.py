import numpy as np
import pytest
import scipy.sparse as sp

from owsim.sparse import (LinearSolverError, ZeroPivotError, bicgstab,
                          gmres, ilu0_factor, ilu0_solve, read_coo_text,
                          spmv, write_coo_text)


def dense_solve(A, b):
    """Brute-force dense LU oracle for systems up to a few hundred rows."""
    return np.linalg.solve(np.asarray(A.todense()), b)


def laplacian_1d(n):
    main = 2.0 * np.ones(n)
    off = -1.0 * np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1]).tocsr()


def convection_diffusion_1d(n, peclet=0.4):
    """Nonsymmetric tridiagonal operator (upwinded convection term)."""
    main = (2.0 + peclet) * np.ones(n)
    lower = (-1.0 - peclet) * np.ones(n - 1)
    upper = -1.0 * np.ones(n - 1)
    return sp.diags([lower, main, upper], [-1, 0, 1]).tocsr()


class TestSpmv:
    def test_identity(self):
        A = sp.identity(5, format="csr")
        x = np.arange(5.0)
        assert np.array_equal(spmv(A, x), x)

    def test_small_product(self):
        A = sp.csr_matrix(np.array([[2.0, 1.0], [0.0, 3.0]]))
        assert np.array_equal(spmv(A, np.array([1.0, 1.0])),
                              np.array([3.0, 3.0]))

    def test_zero_matrix(self):
        A = sp.csr_matrix((4, 4))
        assert np.array_equal(spmv(A, np.ones(4)), np.zeros(4))

    def test_dimension_mismatch(self):
        A = sp.identity(4, format="csr")
        with pytest.raises(LinearSolverError, match="mismatch"):
            spmv(A, np.ones(5))


class TestCooText:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        A = sp.random(12, 12, density=0.3, random_state=3, format="csr")
        path = tmp_path / "mat.txt"
        write_coo_text(A, path)
        B = read_coo_text(path)
        assert (A != B).nnz == 0


class TestBicgstab:
    def test_zero_rhs(self):
        A = laplacian_1d(10)
        res = bicgstab(A, np.zeros(10))
        assert res.converged and res.iterations == 0
        assert np.array_equal(res.x, np.zeros(10))

    def test_laplacian_against_dense_oracle(self):
        A = laplacian_1d(50)
        rng = np.random.default_rng(0)
        b = rng.normal(size=50)
        res = bicgstab(A, b, tol=1e-10, max_iter=300)
        assert res.converged
        expected = dense_solve(A, b)
        assert np.allclose(res.x, expected, rtol=1e-7, atol=1e-9)

    def test_zero_iteration_budget(self):
        A = laplacian_1d(10)
        b = np.ones(10)
        res = bicgstab(A, b, max_iter=0)
        assert not res.converged
        assert res.iterations == 0
        assert np.array_equal(res.x, np.zeros(10))

    def test_reported_residual_is_true_residual(self):
        A = convection_diffusion_1d(80)
        b = np.sin(np.arange(80.0))
        res = bicgstab(A, b, tol=1e-8, max_iter=300)
        recomputed = np.linalg.norm(b - A @ res.x)
        assert res.residual_norm == pytest.approx(recomputed, rel=1e-12)

    def test_preconditioned_two_applications_per_iteration(self):
        A = laplacian_1d(60)
        b = np.ones(60)

        class CountingIlu:
            def __init__(self):
                self.f = ilu0_factor(A)
                self.calls = 0

            def apply(self, r):
                self.calls += 1
                return self.f.solve(r)

        M = CountingIlu()
        res = bicgstab(A, b, M=M, tol=1e-10, max_iter=100)
        assert res.converged
        # at most two preconditioner solves per iteration (the final
        # iteration may exit after the first)
        assert 2 * res.iterations - 1 <= M.calls <= 2 * res.iterations

    def test_bit_reproducible(self):
        A = convection_diffusion_1d(64)
        b = np.cos(np.arange(64.0))
        r1 = bicgstab(A, b, tol=1e-9, max_iter=200)
        r2 = bicgstab(A, b, tol=1e-9, max_iter=200)
        assert np.array_equal(r1.x, r2.x)
        assert r1.iterations == r2.iterations
        assert r1.residual_norm == r2.residual_norm


class TestGmres:
    def test_zero_rhs(self):
        A = laplacian_1d(10)
        res = gmres(A, np.zeros(10))
        assert res.converged and res.iterations == 0

    def test_spd_diagonal_iteration_bound(self):
        # distinct eigenvalues bound the Krylov dimension needed
        diag = np.array([1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0])
        A = sp.diags(diag).tocsr()
        b = np.ones(8)
        res = gmres(A, b, tol=1e-12, restart=8, max_iter=50)
        assert res.converged
        assert res.iterations <= 4

    def test_convection_diffusion_vs_dense(self):
        A = convection_diffusion_1d(100)
        rng = np.random.default_rng(1)
        b = rng.normal(size=100)
        res = gmres(A, b, tol=1e-8, restart=50, max_iter=400)
        assert res.converged
        assert np.allclose(res.x, dense_solve(A, b), rtol=1e-4, atol=1e-6)

    def test_full_restart_solves_random_systems(self):
        rng = np.random.default_rng(7)
        for trial in range(3):
            M = rng.normal(size=(20, 20)) + 20.0 * np.eye(20)
            A = sp.csr_matrix(M)
            b = rng.normal(size=20)
            res = gmres(A, b, tol=1e-12, restart=20, max_iter=40)
            expected = np.linalg.solve(M, b)
            assert np.linalg.norm(res.x - expected) <= \
                1e-10 * np.linalg.norm(expected)

    def test_one_preconditioner_application_per_inner_iteration(self):
        A = laplacian_1d(60)
        b = np.ones(60)

        class CountingIlu:
            def __init__(self):
                self.f = ilu0_factor(A)
                self.calls = 0

            def apply(self, r):
                self.calls += 1
                return self.f.solve(r)

        M = CountingIlu()
        res = gmres(A, b, M=M, tol=1e-10, restart=30, max_iter=100)
        assert res.converged
        assert M.calls == res.iterations

    def test_max_iter_returns_with_flag(self):
        A = laplacian_1d(200)
        b = np.ones(200)
        res = gmres(A, b, tol=1e-14, restart=5, max_iter=3)
        assert not res.converged
        assert res.flag == "max_iter"
        assert res.iterations == 3


class TestIlu0:
    def test_tridiagonal_is_exact(self):
        A = laplacian_1d(30)
        f = ilu0_factor(A)
        product = (f.L @ f.U).toarray()
        assert np.allclose(product, A.toarray(), atol=1e-14)
        rng = np.random.default_rng(5)
        r = rng.normal(size=30)
        z = ilu0_solve(f, r)
        assert np.allclose(z, dense_solve(A, r), rtol=1e-10, atol=1e-12)

    def test_diagonal_matrix(self):
        A = sp.diags([2.0, 3.0, 4.0]).tocsr()
        f = ilu0_factor(A)
        assert np.allclose(f.L.toarray(), np.eye(3))
        assert np.allclose(f.U.toarray(), A.toarray())

    def test_zero_pivot_names_row(self):
        A = sp.diags([1.0, 0.0, 2.0]).tocsr()
        with pytest.raises(ZeroPivotError, match="row 1"):
            ilu0_factor(A)

    def test_factors_keep_sparsity_pattern(self):
        rng = np.random.default_rng(11)
        A = (sp.random(40, 40, density=0.1, random_state=11)
             + 10.0 * sp.identity(40)).tocsr()
        f = ilu0_factor(A)
        combined = (f.L + f.U).tocsr()
        A_csr = A.copy()
        A_csr.sort_indices()
        pattern_a = set(zip(*A_csr.nonzero()))
        pattern_f = set(zip(*combined.nonzero()))
        # L carries an explicit unit diagonal; everything else must come
        # from A's pattern
        assert pattern_f <= pattern_a | {(i, i) for i in range(40)}

    def test_solve_identity_factors(self):
        A = sp.identity(6, format="csr")
        f = ilu0_factor(A)
        r = np.arange(6.0)
        assert np.array_equal(ilu0_solve(f, r), r)

    def test_zero_rhs(self):
        A = laplacian_1d(8)
        f = ilu0_factor(A)
        assert np.array_equal(ilu0_solve(f, np.zeros(8)), np.zeros(8))
