import numpy as np
import pytest
import scipy.sparse as sp

from owsim.discretization import BlockMap
from owsim.matproc import (MatProcError, apply_decoupling, apply_permutation,
                           build_decoupler, identity_permutation,
                           potential_permutation_from_values,
                           strictly_upper_fraction, unpermute_solution)


def dense(A):
    return np.asarray(A.todense())


class TestBuildDecoupler:
    def test_single_cell_blocks(self):
        # A_pp=[2], A_ps=[1], A_sp=[1], A_ss=[2]
        A = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
        bm = BlockMap(n_cells=1, n_wells=0)
        d_abf = build_decoupler(A, bm, "abf")
        # D_ABF assembles the four block diagonals
        d_mat = np.linalg.inv(dense(d_abf.inverse_matrix()))
        assert np.allclose(d_mat, [[2.0, 1.0], [1.0, 2.0]])
        d_qi = build_decoupler(A, bm, "qi")
        dq = np.linalg.inv(dense(d_qi.inverse_matrix()))
        assert np.allclose(dq, [[1.0, 0.5], [0.0, 1.0]])

    def test_diagonal_system_gives_identity_qi(self):
        A = sp.csr_matrix(np.diag([3.0, 4.0, 5.0, 6.0]))
        bm = BlockMap(n_cells=2, n_wells=0)
        d = build_decoupler(A, bm, "qi")
        assert np.allclose(dense(d.inverse_matrix()), np.eye(4))

    def test_well_rows_keep_identity(self):
        n, tau = 2, 1
        rng = np.random.default_rng(0)
        A = sp.csr_matrix(rng.normal(size=(5, 5)) + 5 * np.eye(5))
        bm = BlockMap(n_cells=n, n_wells=tau)
        for kind in ("qi", "abf"):
            dinv = dense(build_decoupler(A, bm, kind).inverse_matrix())
            assert np.allclose(dinv[4, :], np.eye(5)[4])
            assert np.allclose(dinv[:, 4], np.eye(5)[:, 4])

    def test_singular_abf_block_names_cell(self):
        # det of cell-1 block = 1*1 - 1*1 = 0
        A = sp.csr_matrix(np.array([
            [2.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 1.0],
            [1.0, 0.0, 2.0, 0.0],
            [0.0, 1.0, 0.0, 1.0]]))
        bm = BlockMap(n_cells=2, n_wells=0)
        with pytest.raises(MatProcError, match="cell 1"):
            build_decoupler(A, bm, "abf")


class TestApplyDecoupling:
    def test_identity_decoupler(self):
        A = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
        b = np.array([1.0, 2.0])
        bm = BlockMap(n_cells=1, n_wells=0)
        d = build_decoupler(A, bm, "none")
        A2, b2 = apply_decoupling(d, A, b)
        assert A2 is A and b2 is b

    def test_single_cell_qi_decouples_pressure_row(self):
        A = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
        b = np.array([1.0, 1.0])
        bm = BlockMap(n_cells=1, n_wells=0)
        d = build_decoupler(A, bm, "qi")
        A2, b2 = apply_decoupling(d, A, b)
        assert np.allclose(dense(A2), [[1.5, 0.0], [1.0, 2.0]])
        assert np.allclose(b2, [0.5, 1.0])

    def test_solution_equivalence_dense_oracle(self):
        rng = np.random.default_rng(42)
        n, tau = 10, 2
        N = 2 * n + tau
        M = rng.normal(size=(N, N)) + N * np.eye(N)
        A = sp.csr_matrix(M)
        b = rng.normal(size=N)
        x_ref = np.linalg.solve(M, b)
        bm = BlockMap(n_cells=n, n_wells=tau)
        for kind in ("qi", "abf"):
            d = build_decoupler(A, bm, kind)
            A2, b2 = apply_decoupling(d, A, b)
            x = np.linalg.solve(dense(A2), b2)
            assert np.allclose(x, x_ref, rtol=1e-12, atol=1e-12)


class TestPotentialPermutation:
    def test_worked_example(self):
        # potentials 2.1, 1.3, 4.2, 1 sort to positions 2, 3, 1, 4
        bm = BlockMap(n_cells=4, n_wells=0)
        perm = potential_permutation_from_values(
            np.array([2.1, 1.3, 4.2, 1.0]), bm)
        assert list(perm.pm + 1) == [2, 3, 1, 4]

    def test_equal_potentials_identity(self):
        bm = BlockMap(n_cells=5, n_wells=0)
        perm = potential_permutation_from_values(np.ones(5), bm)
        assert np.array_equal(perm.pm, np.arange(5))
        assert perm.is_identity

    def test_full_system_mapping_with_well(self):
        bm = BlockMap(n_cells=4, n_wells=1)
        perm = potential_permutation_from_values(
            np.array([2.1, 1.3, 4.2, 1.0]), bm)
        pm = np.array([1, 2, 0, 3])
        assert np.array_equal(perm.pt[:4], pm)
        assert np.array_equal(perm.pt[4:8], 4 + pm)
        assert perm.pt[8] == 8  # well index fixed

    def test_well_rows_always_fixed(self):
        rng = np.random.default_rng(1)
        bm = BlockMap(n_cells=12, n_wells=3)
        perm = potential_permutation_from_values(rng.normal(size=12), bm)
        assert np.array_equal(perm.pt[24:], np.arange(24, 27))

    def test_block_preservation(self):
        rng = np.random.default_rng(2)
        bm = BlockMap(n_cells=12, n_wells=3)
        perm = potential_permutation_from_values(rng.normal(size=12), bm)
        # pressure indices map to pressure indices, saturation likewise
        assert np.all(perm.pt[:12] < 12)
        assert np.all((perm.pt[12:24] >= 12) & (perm.pt[12:24] < 24))

    def test_per_worker_locality(self):
        class FakePartition:
            local_cells = [np.array([0, 1, 2]), np.array([3, 4, 5])]

        bm = BlockMap(n_cells=6, n_wells=0)
        phi = np.array([1.0, 5.0, 3.0, 9.0, 2.0, 4.0])
        perm = potential_permutation_from_values(phi, bm, FakePartition())
        # each worker's cells stay inside the worker's own slots
        assert set(perm.pm[:3]) == {0, 1, 2}
        assert set(perm.pm[3:]) == {3, 4, 5}
        # per-worker descending potential: worker 0 order 1,2,0
        assert list(perm.pm[:3]) == [2, 0, 1]


class TestApplyPermutation:
    def test_identity(self):
        bm = BlockMap(n_cells=3, n_wells=1)
        perm = identity_permutation(bm)
        A = sp.identity(7, format="csr")
        b = np.arange(7.0)
        A2, b2 = apply_permutation(perm, A, b)
        assert np.array_equal(b2, b)
        assert perm.is_identity

    def test_round_trip_against_dense_oracle(self):
        rng = np.random.default_rng(3)
        n, tau = 8, 2
        N = 2 * n + tau
        bm = BlockMap(n_cells=n, n_wells=tau)
        M = rng.normal(size=(N, N)) + N * np.eye(N)
        A = sp.csr_matrix(M)
        b = rng.normal(size=N)
        x_ref = np.linalg.solve(M, b)
        perm = potential_permutation_from_values(rng.normal(size=n), bm)
        A2, b2 = apply_permutation(perm, A, b)
        x_tilde = np.linalg.solve(dense(A2), b2)
        x = unpermute_solution(perm, x_tilde)
        assert np.allclose(x, x_ref, rtol=1e-12, atol=1e-12)

    def test_permuted_entries_land_in_blocks(self):
        rng = np.random.default_rng(4)
        n, tau = 6, 1
        N = 2 * n + tau
        bm = BlockMap(n_cells=n, n_wells=tau)
        blocks = np.zeros((N, N))
        blocks[:n, n:2 * n] = rng.normal(size=(n, n))  # only ps block
        A = sp.csr_matrix(blocks)
        perm = potential_permutation_from_values(rng.normal(size=n), bm)
        A2, _ = apply_permutation(perm, A, np.zeros(N))
        out = dense(A2)
        assert np.allclose(out[:, :n], 0.0)
        assert np.allclose(out[n:, :], 0.0)
        # and the ps block keeps exactly the same multiset of values
        assert np.allclose(np.sort(out[:n, n:2 * n], axis=None),
                           np.sort(blocks[:n, n:2 * n], axis=None))

    def test_dimension_mismatch(self):
        bm = BlockMap(n_cells=3, n_wells=0)
        perm = identity_permutation(bm)
        with pytest.raises(MatProcError):
            apply_permutation(perm, sp.identity(5, format="csr"), np.zeros(5))


def test_strictly_upper_fraction():
    bm = BlockMap(n_cells=2, n_wells=0)
    A = np.zeros((4, 4))
    A[2, 3] = 1.0  # ss upper
    A[3, 2] = 1.0  # ss lower
    A[2, 2] = 1.0  # ss diagonal
    frac = strictly_upper_fraction(sp.csr_matrix(A), bm)
    assert frac == pytest.approx(1.0 / 3.0)
