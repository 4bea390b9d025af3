"""Preconditioner stack: restricted additive Schwarz over ILU(0)
subdomains, smoothed-aggregation algebraic multigrid for the pressure
block, and their three-stage composition (Schwarz smoothing around an AMG
pressure correction).

All operators are linear for a fixed setup, and setup must see the same
matrix the apply is used with; the driver rebuilds them every Newton
iteration.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .sparse import ilu0_factor


def restrict_pressure(x, block_map):
    """Extract the pressure sub-vector (indices [0, n))."""
    return np.asarray(x)[block_map.pressure].copy()


def prolong_pressure(p_vec, block_map):
    """Zero-pad a pressure vector back to full system length."""
    out = np.zeros(block_map.n_total)
    out[block_map.pressure] = p_vec
    return out


@dataclass
class RasPreconditioner:
    """Restricted additive Schwarz with ILU(0) subdomain solves.

    Subdomains are the per-worker owned rows extended by `overlap` matrix
    graph layers; corrections are written back only for owned rows (the
    'restricted' part), so overlap-zone corrections from neighbors are
    discarded. overlap=0 degenerates to block-Jacobi ILU(0).
    """

    overlap: int
    n: int
    sub_rows: list = field(repr=False)
    owned_rows: list = field(repr=False)
    owned_pos: list = field(repr=False)
    factors: list = field(repr=False)

    def apply(self, r):
        z = np.zeros(self.n)
        for rows, owned, pos, fac in zip(self.sub_rows, self.owned_rows,
                                         self.owned_pos, self.factors):
            z_sub = fac.solve(r[rows])
            z[owned] = z_sub[pos]
        return z


def ras_setup(A, row_owner, num_workers, overlap):
    """Build overlapped subdomains from row ownership and factor each with
    ILU(0)."""
    if overlap < 0:
        raise ValueError("overlap must be >= 0")
    A = sp.csr_matrix(A)
    n = A.shape[0]
    row_owner = np.asarray(row_owner)
    sub_rows, owned_rows, owned_pos, factors = [], [], [], []
    for w in range(num_workers):
        owned = np.nonzero(row_owner == w)[0]
        rows = owned
        for _ in range(overlap):
            nbrs = np.unique(A[rows].indices)
            rows = np.union1d(rows, nbrs[nbrs < n])
        rows = np.asarray(rows, dtype=np.int64)
        pos = np.searchsorted(rows, owned)
        sub = A[rows][:, rows].tocsr()
        factors.append(ilu0_factor(sub))
        sub_rows.append(rows)
        owned_rows.append(owned)
        owned_pos.append(pos)
    return RasPreconditioner(overlap=overlap, n=n, sub_rows=sub_rows,
                             owned_rows=owned_rows, owned_pos=owned_pos,
                             factors=factors)


def ras_apply(M, r):
    """One RAS application: z ~ A^-1 r with owned-entry write-back."""
    return M.apply(r)


@dataclass
class _AmgLevel:
    A: sp.csr_matrix
    inv_diag: np.ndarray
    P: sp.csr_matrix = None  # prolongator to this level's fine grid


@dataclass
class AmgHierarchy:
    """Smoothed-aggregation multigrid hierarchy.

    Galerkin coarse operators A_{l+1} = P^T A_l P down to a dense-factored
    coarsest level; applied as one V(1,1) cycle with weighted-Jacobi
    smoothing.
    """

    levels: list
    coarse_lu: tuple
    omega: float

    @property
    def n_levels(self):
        return len(self.levels) + 1

    def apply(self, r):
        return self._cycle(0, np.asarray(r, dtype=np.float64))

    def _cycle(self, lvl, r):
        if lvl == len(self.levels):
            return sla.lu_solve(self.coarse_lu, r)
        level = self.levels[lvl]
        x = self.omega * level.inv_diag * r
        resid = r - level.A @ x
        coarse = self._cycle(lvl + 1, level.P.T @ resid)
        x = x + level.P @ coarse
        x = x + self.omega * level.inv_diag * (r - level.A @ x)
        return x


def _strength_aggregates(A, theta):
    """Greedy strength-based aggregation; returns (aggregate id per node,
    number of aggregates). Deterministic: nodes scanned in ascending index
    order."""
    n = A.shape[0]
    diag = np.abs(A.diagonal())
    indptr, indices, data = A.indptr, A.indices, A.data

    strong = [[] for _ in range(n)]
    for i in range(n):
        for idx in range(indptr[i], indptr[i + 1]):
            j = indices[idx]
            if j == i:
                continue
            if abs(data[idx]) >= theta * np.sqrt(diag[i] * diag[j]):
                strong[i].append((j, abs(data[idx])))

    agg = np.full(n, -1, dtype=np.int64)
    n_agg = 0
    # pass 1: roots whose strong neighborhood is untouched
    for i in range(n):
        if agg[i] != -1:
            continue
        if all(agg[j] == -1 for j, _ in strong[i]):
            agg[i] = n_agg
            for j, _ in strong[i]:
                agg[j] = n_agg
            n_agg += 1
    # pass 2: attach leftovers to their strongest aggregated neighbor
    for i in range(n):
        if agg[i] != -1:
            continue
        best = -1
        best_w = -1.0
        for j, wgt in strong[i]:
            if agg[j] != -1 and wgt > best_w:
                best, best_w = agg[j], wgt
        if best != -1:
            agg[i] = best
    # pass 3: isolated nodes become singletons
    for i in range(n):
        if agg[i] == -1:
            agg[i] = n_agg
            n_agg += 1
    return agg, n_agg


def amg_setup(A, theta=0.08, max_coarse=64, omega=2.0 / 3.0, max_levels=25):
    """Build the smoothed-aggregation hierarchy for a pressure-type matrix.

    Strength of connection: |a_ij| >= theta*sqrt(a_ii*a_jj). The tentative
    piecewise-constant prolongator is smoothed by one weighted-Jacobi step;
    coarsening stops at max_coarse rows (or when aggregation stalls) and
    the coarsest operator is dense-factored.
    """
    A = sp.csr_matrix(A).astype(np.float64)
    A.sort_indices()
    _dominance_check(A)
    levels = []
    current = A
    while current.shape[0] > max_coarse and len(levels) < max_levels:
        n = current.shape[0]
        diag = current.diagonal()
        if np.any(diag == 0.0):
            break  # Jacobi smoothing undefined; solve this level directly
        agg, n_agg = _strength_aggregates(current, theta)
        if n_agg >= n:
            break  # aggregation stalled (e.g. diagonal matrix)
        tentative = sp.csr_matrix(
            (np.ones(n), (np.arange(n), agg)), shape=(n, n_agg))
        inv_diag = 1.0 / diag
        smoothed = tentative - sp.diags(omega * inv_diag) @ (
            current @ tentative)
        smoothed = smoothed.tocsr()
        coarse = (smoothed.T @ current @ smoothed).tocsr()
        coarse.sort_indices()
        levels.append(_AmgLevel(A=current, inv_diag=inv_diag, P=smoothed))
        current = coarse
    if current.shape[0] > 2000:
        warnings.warn(
            f"AMG coarsest level is large ({current.shape[0]} rows); "
            f"dense factorization will be slow", RuntimeWarning)
    coarse_lu = sla.lu_factor(current.toarray())
    return AmgHierarchy(levels=levels, coarse_lu=coarse_lu, omega=omega)


def _dominance_check(A):
    diag = np.abs(A.diagonal())
    if np.any(diag == 0.0):
        warnings.warn("pressure block has zero diagonal entries",
                      RuntimeWarning)
        return
    off = np.asarray(np.abs(A).sum(axis=1)).ravel() - diag
    weak = np.count_nonzero(diag < 0.1 * off)
    if weak > 0.2 * A.shape[0]:
        warnings.warn(
            f"pressure block is far from diagonally dominant "
            f"({weak}/{A.shape[0]} weak rows)", RuntimeWarning)


def amg_apply(hierarchy, r):
    """One V(1,1) cycle of the hierarchy applied to a residual."""
    return hierarchy.apply(r)


@dataclass
class CprFpfPreconditioner:
    """Three-stage composition: full-system Schwarz, AMG on the pressure
    block of the residual, full-system Schwarz again.

    Setup and apply must see the same (decoupled, reordered) matrix.
    """

    A: sp.csr_matrix
    block_map: object
    ras: RasPreconditioner
    amg: AmgHierarchy

    def apply(self, f):
        x = self.ras.apply(f)
        r = f - self.A @ x
        p_corr = self.amg.apply(restrict_pressure(r, self.block_map))
        x = x + prolong_pressure(p_corr, self.block_map)
        r = f - self.A @ x
        x = x + self.ras.apply(r)
        return x


def cpr_fpf_setup(A, block_map, row_owner, num_workers, overlap,
                  amg_theta=0.08):
    """Set up the three-stage preconditioner for the given system."""
    A = sp.csr_matrix(A)
    ras = ras_setup(A, row_owner, num_workers, overlap)
    n = block_map.n_cells
    a_pp = A[:n, :n].tocsr()
    amg = amg_setup(a_pp, theta=amg_theta)
    return CprFpfPreconditioner(A=A, block_map=block_map, ras=ras, amg=amg)


def cpr_fpf_apply(P, f):
    """Apply the three-stage preconditioner to a right-hand side."""
    return P.apply(f)


def make_preconditioner(kind, A, block_map, row_owner, num_workers, overlap):
    """Factory for the CLI-facing preconditioner choices:
    none | ras | cpr-fpf."""
    if kind == "none":
        return None
    if kind == "ras":
        return ras_setup(A, row_owner, num_workers, overlap)
    if kind in ("cpr-fpf", "cpr_fpf", "cpr"):
        return cpr_fpf_setup(A, block_map, row_owner, num_workers, overlap)
    raise ValueError(f"unknown preconditioner {kind!r}")
