"""Jacobian pre-processing before the preconditioned Krylov solve:
block decoupling (Quasi-IMPES / alternate-block-factorization) applied as
an explicit left transformation, and the per-worker potential reordering
permutation.

Both transformations act on locally owned rows only and are pure functions
of the assembled system and the current state: no cross-worker exchange is
involved. The decoupled/permuted system is equivalent to the original one;
solutions map back exactly.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .units import GRAV_HEAD
from . import props as pr


class MatProcError(ValueError):
    pass


@dataclass
class DecouplingOperator:
    """Left-scaling operator D of the block system.

    Holds the per-cell 2x2 blocks of D^-1 applied to the (oil-row,
    water-row) pair of every cell; well rows carry the identity. Assembled
    once per Jacobian, then applied as a sparse left multiplication.
    """

    kind: str
    n_cells: int
    n_total: int
    w11: np.ndarray
    w12: np.ndarray
    w21: np.ndarray
    w22: np.ndarray

    def inverse_matrix(self):
        """D^-1 as a sparse matrix (identity on well rows)."""
        n, N = self.n_cells, self.n_total
        cells = np.arange(n)
        rows = np.concatenate([cells, cells, n + cells, n + cells,
                               np.arange(2 * n, N)])
        cols = np.concatenate([cells, n + cells, cells, n + cells,
                               np.arange(2 * n, N)])
        vals = np.concatenate([self.w11, self.w12, self.w21, self.w22,
                               np.ones(N - 2 * n)])
        return sp.csr_matrix((vals, (rows, cols)), shape=(N, N))


def _block_diagonals(A, block_map):
    n = block_map.n_cells
    d_full = A.diagonal(0)
    d_pp = d_full[:n]
    d_ss = d_full[n:2 * n]
    d_ps = A.diagonal(n)[:n]
    d_sp = A.diagonal(-n)[:n]
    return d_pp, d_ps, d_sp, d_ss


def build_decoupler(A, block_map, kind):
    """Decoupling operator from the diagonals of the reservoir blocks.

    'quasi_impes' scales only the pressure rows: D has Diag(A_ps)
    Diag(A_ss)^-1 above a unit diagonal. 'abf' collects all four per-cell
    block diagonals. Well rows are never touched. 'none' is the identity.
    """
    n = block_map.n_cells
    N = block_map.n_total
    ones = np.ones(n)
    zeros = np.zeros(n)
    if kind == "none":
        return DecouplingOperator("none", n, N, ones, zeros, zeros, ones)
    d_pp, d_ps, d_sp, d_ss = _block_diagonals(A, block_map)
    if kind in ("qi", "quasi_impes"):
        if np.any(d_ss == 0.0):
            cell = int(np.nonzero(d_ss == 0.0)[0][0])
            raise MatProcError(
                f"quasi-IMPES needs nonsingular Diag(A_ss); zero at cell "
                f"{cell}")
        # D = [[I, Diag(A_ps) Diag(A_ss)^-1], [0, I]]
        return DecouplingOperator("quasi_impes", n, N,
                                  ones, -d_ps / d_ss, zeros, ones)
    if kind == "abf":
        det = d_pp * d_ss - d_ps * d_sp
        if np.any(det == 0.0):
            cell = int(np.nonzero(det == 0.0)[0][0])
            raise MatProcError(
                f"ABF per-cell block is singular at cell {cell}")
        return DecouplingOperator("abf", n, N,
                                  d_ss / det, -d_ps / det,
                                  -d_sp / det, d_pp / det)
    raise MatProcError(f"unknown decoupling kind {kind!r}")


def apply_decoupling(dec, A, b):
    """Left-multiply the system by D^-1: returns (D^-1 A, D^-1 b).

    Sparsity of a cell's pressure/saturation rows grows only to the union
    of the two row patterns; communication-free by construction.
    """
    if dec.kind == "none":
        return A, b
    dinv = dec.inverse_matrix()
    A2 = (dinv @ A).tocsr()
    A2.sort_indices()
    return A2, dinv @ b


@dataclass
class PotentialPermutation:
    """Per-worker permutation of local unknowns by descending oil potential.

    pm maps a cell index to its new position (within its worker's own
    slots); pt extends pm to the full 2n+tau layout, fixing well indices
    and preserving the pressure/saturation block split. inv is the
    argsort of pt used for matrix row/column gathers.
    """

    pm: np.ndarray
    pt: np.ndarray
    inv: np.ndarray

    @property
    def is_identity(self):
        return bool(np.all(self.pt == np.arange(self.pt.size)))

    def permute_vector(self, v):
        """Reorder a row-aligned vector into the permuted layout."""
        return v[self.inv]

    def unpermute_vector(self, v_tilde):
        """Inverse of permute_vector (x[i] = x_tilde[pt[i]])."""
        return v_tilde[self.pt]


def identity_permutation(block_map):
    n_total = block_map.n_total
    idx = np.arange(n_total, dtype=np.int64)
    return PotentialPermutation(pm=np.arange(block_map.n_cells,
                                             dtype=np.int64),
                                pt=idx, inv=idx.copy())


def potential_permutation_from_values(phi_o, block_map, partition=None):
    """Permutation sorting each worker's owned cells by descending
    potential, ties broken by ascending cell index."""
    n = block_map.n_cells
    tau = block_map.n_wells
    phi_o = np.asarray(phi_o, dtype=float)
    if phi_o.shape != (n,):
        raise MatProcError("potential vector length does not match grid")
    pm = np.empty(n, dtype=np.int64)
    if partition is None:
        owned_sets = [np.arange(n)]
    else:
        owned_sets = partition.local_cells
    for owned in owned_sets:
        owned = np.asarray(owned)
        # stable argsort of -phi gives ascending-index tie-breaks
        ranked = owned[np.argsort(-phi_o[owned], kind="stable")]
        pm[ranked] = owned  # cell ranked r-th lands in the r-th owned slot
    pt = np.empty(2 * n + tau, dtype=np.int64)
    pt[:n] = pm
    pt[n:2 * n] = n + pm
    pt[2 * n:] = np.arange(2 * n, 2 * n + tau)
    return PotentialPermutation(pm=pm, pt=pt, inv=np.argsort(pt))


def build_potential_permutation(model, state, partition=None):
    """Potential permutation from the current state's oil potentials."""
    rho_o, _ = pr.density(state.p, model.fluids.oil)
    phi_o = state.p + rho_o * GRAV_HEAD * model.grid.depth
    return potential_permutation_from_values(
        phi_o, model.block_map,
        partition if partition is not None else model.partition)


def apply_permutation(perm, A, b):
    """Symmetric row/column permutation of A and row permutation of b."""
    N = perm.pt.size
    if A.shape != (N, N) or b.shape[0] != N:
        raise MatProcError(
            f"permutation built for size {N}, got matrix {A.shape}")
    if perm.is_identity:
        return A, b
    A2 = A[perm.inv][:, perm.inv].tocsr()
    A2.sort_indices()
    return A2, b[perm.inv]


def unpermute_solution(perm, x_tilde):
    """Map the permuted system's solution back to the original ordering."""
    return x_tilde[perm.pt]


def strictly_upper_fraction(A, block_map):
    """Fraction of the saturation block's nonzeros strictly above the
    diagonal; logged as a reordering diagnostic (no threshold asserted)."""
    n = block_map.n_cells
    ss = sp.coo_matrix(A[block_map.saturation, block_map.saturation])
    if ss.nnz == 0:
        return 0.0
    return float(np.count_nonzero(ss.col > ss.row)) / float(ss.nnz)
