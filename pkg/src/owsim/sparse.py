"""Sparse matrices, Krylov solvers and ILU(0) factorization.

Matrices are scipy CSR throughout (row offsets / column indices / values).
The two Krylov solvers are right-preconditioned so the residual they
monitor and report is the true-system residual; both return the recomputed
true residual norm, never the recursive one. ILU(0) is a zero-fill
factorization on the matrix's own sparsity pattern, with the hot loops
compiled by numba. All operations are deterministic: identical inputs give
bit-identical outputs.
"""

from dataclasses import dataclass

import numpy as np
import numba
import scipy.sparse as sp


class LinearSolverError(RuntimeError):
    """Unrecoverable linear-solver failure (breakdown, bad dimensions)."""


class ZeroPivotError(LinearSolverError):
    """ILU(0) hit a zero pivot; carries the offending row."""

    def __init__(self, row):
        super().__init__(f"zero pivot in ILU(0) at row {row}")
        self.row = row


def spmv(A, x):
    """Sparse matrix-vector product A @ x (owned-row exact product)."""
    if A.shape[1] != x.shape[0]:
        raise LinearSolverError(
            f"dimension mismatch: matrix {A.shape} times vector {x.shape}")
    return A @ x


def write_coo_text(A, path):
    """Dump a sparse matrix as 'row col value' lines for offline debugging."""
    coo = sp.coo_matrix(A)
    with open(path, "w") as fh:
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {float(v)!r}\n")


def read_coo_text(path):
    """Read a matrix written by write_coo_text back into CSR form."""
    with open(path) as fh:
        nrows, ncols, nnz = (int(t) for t in fh.readline().split())
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz)
        for k in range(nnz):
            r, c, v = fh.readline().split()
            rows[k], cols[k], vals[k] = int(r), int(c), float(v)
    return sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols)).tocsr()


# ---------------------------------------------------------------------------
# ILU(0)
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def _ilu0_factor_kernel(n, indptr, indices, data, diag_pos):
    """In-place IKJ ILU(0) on a CSR matrix with sorted column indices.

    After return, data holds the strict-lower L entries (unit diagonal
    implied) and the U entries including the diagonal. Returns -1 on
    success or the row index of a zero pivot.
    """
    colmap = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        start, end = indptr[i], indptr[i + 1]
        for idx in range(start, end):
            colmap[indices[idx]] = idx
        for idx in range(start, end):
            k = indices[idx]
            if k >= i:
                break
            dk = diag_pos[k]
            ukk = data[dk]
            if ukk == 0.0:
                return k
            lik = data[idx] / ukk
            data[idx] = lik
            for kidx in range(dk + 1, indptr[k + 1]):
                j = indices[kidx]
                pos = colmap[j]
                if pos >= 0:
                    data[pos] -= lik * data[kidx]
        dpos = diag_pos[i]
        if dpos < 0 or data[dpos] == 0.0:
            return i
        for idx in range(start, end):
            colmap[indices[idx]] = -1
    return -1


@numba.njit(cache=True)
def _ilu0_solve_kernel(n, indptr, indices, data, diag_pos, r, z):
    """z = U^-1 L^-1 r via forward then backward substitution."""
    for i in range(n):
        acc = r[i]
        for idx in range(indptr[i], diag_pos[i]):
            acc -= data[idx] * z[indices[idx]]
        z[i] = acc
    for i in range(n - 1, -1, -1):
        acc = z[i]
        for idx in range(diag_pos[i] + 1, indptr[i + 1]):
            acc -= data[idx] * z[indices[idx]]
        z[i] = acc / data[diag_pos[i]]


@dataclass
class Ilu0Factors:
    """Combined L/U factors of an ILU(0) factorization.

    The factors share the sparsity pattern of the factored matrix; L has a
    unit diagonal (stored implicitly). The .L/.U properties materialize
    explicit triangular CSR matrices for inspection and testing.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    diag_pos: np.ndarray

    @property
    def L(self):
        rows, cols, vals = [], [], []
        for i in range(self.n):
            for idx in range(self.indptr[i], self.diag_pos[i]):
                rows.append(i); cols.append(self.indices[idx])
                vals.append(self.data[idx])
            rows.append(i); cols.append(i); vals.append(1.0)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))

    @property
    def U(self):
        rows, cols, vals = [], [], []
        for i in range(self.n):
            for idx in range(self.diag_pos[i], self.indptr[i + 1]):
                rows.append(i); cols.append(self.indices[idx])
                vals.append(self.data[idx])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))

    def solve(self, r):
        z = np.empty_like(r, dtype=np.float64)
        _ilu0_solve_kernel(self.n, self.indptr, self.indices, self.data,
                           self.diag_pos, np.asarray(r, dtype=np.float64), z)
        return z


def ilu0_factor(A):
    """Zero-fill incomplete LU of a square CSR matrix.

    For matrices whose exact LU factors fit the sparsity pattern (e.g.
    tridiagonal) the factorization is exact. Raises ZeroPivotError naming
    the first row whose pivot vanishes.
    """
    A = sp.csr_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise LinearSolverError("ILU(0) requires a square matrix")
    A.sort_indices()
    n = A.shape[0]
    indptr = A.indptr.astype(np.int64)
    indices = A.indices.astype(np.int64)
    data = A.data.astype(np.float64).copy()

    diag_pos = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        row = indices[indptr[i]:indptr[i + 1]]
        hit = np.searchsorted(row, i)
        if hit < row.size and row[hit] == i:
            diag_pos[i] = indptr[i] + hit
    bad = _ilu0_factor_kernel(n, indptr, indices, data, diag_pos)
    if bad >= 0:
        raise ZeroPivotError(int(bad))
    return Ilu0Factors(n=n, indptr=indptr, indices=indices, data=data,
                       diag_pos=diag_pos)


def ilu0_solve(factors, r):
    """Apply the ILU(0) factors: z = U^-1 L^-1 r."""
    return factors.solve(r)


# ---------------------------------------------------------------------------
# Krylov solvers
# ---------------------------------------------------------------------------

@dataclass
class KrylovResult:
    x: np.ndarray
    iterations: int
    residual_norm: float      # true ||b - A x||, recomputed at exit
    converged: bool
    flag: str = "ok"          # ok | max_iter | breakdown | drift


def _apply_precond(M, v):
    if M is None:
        return v.copy()
    return M.apply(v)


def bicgstab(A, b, M=None, tol=1e-6, max_iter=300, x0=None):
    """Right-preconditioned BiCGSTAB.

    Stops when ||b - A x|| <= tol*||b||; at the iteration cap the best
    iterate seen so far is returned. Applies the preconditioner twice per
    iteration. On a rho-breakdown the recursion restarts once from the
    current iterate, then fails.
    """
    b = np.asarray(b, dtype=np.float64)
    n = b.shape[0]
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return KrylovResult(x=np.zeros(n), iterations=0, residual_norm=0.0,
                            converged=True)
    threshold = tol * bnorm

    r = b - spmv(A, x) if x.any() else b.copy()
    rnorm = float(np.linalg.norm(r))
    if rnorm <= threshold:
        return KrylovResult(x=x, iterations=0, residual_norm=rnorm,
                            converged=True)
    if max_iter <= 0:
        return KrylovResult(x=x, iterations=0, residual_norm=rnorm,
                            converged=False, flag="max_iter")

    r0 = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros(n)
    p = np.zeros(n)
    best_x = x.copy()
    best_norm = rnorm
    restarted = False
    iters = 0

    while iters < max_iter:
        rho_new = float(r0 @ r)
        if abs(rho_new) < 1e-300 or (omega == 0.0 and iters > 0):
            if restarted:
                return _finalize(A, b, best_x, iters, threshold, "breakdown")
            # restart the recursion from the current iterate
            r0 = r.copy()
            rho_new = float(r0 @ r)
            if rho_new == 0.0:
                return _finalize(A, b, best_x, iters, threshold, "breakdown")
            rho = alpha = omega = 1.0
            v[:] = 0.0
            p[:] = 0.0
            restarted = True
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        p_hat = _apply_precond(M, p)
        v = spmv(A, p_hat)
        denom = float(r0 @ v)
        if denom == 0.0:
            return _finalize(A, b, best_x, iters, threshold, "breakdown")
        alpha = rho / denom
        s = r - alpha * v
        iters += 1
        snorm = float(np.linalg.norm(s))
        if snorm <= threshold:
            x = x + alpha * p_hat
            return _finalize(A, b, x, iters, threshold, "ok")
        s_hat = _apply_precond(M, s)
        t = spmv(A, s_hat)
        tt = float(t @ t)
        if tt == 0.0:
            return _finalize(A, b, best_x, iters, threshold, "breakdown")
        omega = float(t @ s) / tt
        x = x + alpha * p_hat + omega * s_hat
        r = s - omega * t
        rnorm = float(np.linalg.norm(r))
        if rnorm < best_norm:
            best_norm = rnorm
            best_x = x.copy()
        if rnorm <= threshold:
            return _finalize(A, b, x, iters, threshold, "ok")
    return _finalize(A, b, best_x, iters, threshold, "max_iter")


def gmres(A, b, M=None, tol=1e-6, restart=50, max_iter=100, x0=None):
    """Right-preconditioned restarted GMRES(m) with Givens rotations.

    max_iter caps the total number of inner iterations; one preconditioner
    application per inner iteration. The least-squares problem is solved
    through Givens rotations, never normal equations.
    """
    b = np.asarray(b, dtype=np.float64)
    n = b.shape[0]
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return KrylovResult(x=np.zeros(n), iterations=0, residual_norm=0.0,
                            converged=True)
    threshold = tol * bnorm
    m = max(1, int(restart))
    iters = 0

    while True:
        r = b - spmv(A, x) if x.any() else b.copy()
        beta = float(np.linalg.norm(r))
        if beta <= threshold or iters >= max_iter:
            flag = "ok" if beta <= threshold else "max_iter"
            return _finalize(A, b, x, iters, threshold, flag)
        V = np.zeros((m + 1, n))
        Z = np.zeros((m, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j_used = 0
        for j in range(m):
            if iters >= max_iter:
                break
            Z[j] = _apply_precond(M, V[j])
            w = spmv(A, Z[j])
            for i in range(j + 1):
                H[i, j] = float(w @ V[i])
                w -= H[i, j] * V[i]
            H[j + 1, j] = float(np.linalg.norm(w))
            if H[j + 1, j] > 0.0:
                V[j + 1] = w / H[j + 1, j]
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = float(np.hypot(H[j, j], H[j + 1, j]))
            if denom == 0.0:
                cs[j], sn[j] = 1.0, 0.0
            else:
                cs[j] = H[j, j] / denom
                sn[j] = H[j + 1, j] / denom
            H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            iters += 1
            j_used = j + 1
            if abs(g[j + 1]) <= threshold:
                break
        y = np.zeros(j_used)
        for i in range(j_used - 1, -1, -1):
            y[i] = (g[i] - H[i, i + 1:j_used] @ y[i + 1:]) / H[i, i]
        x = x + Z[:j_used].T @ y


def _finalize(A, b, x, iters, threshold, flag):
    """Recompute the true residual and classify the outcome."""
    true_norm = float(np.linalg.norm(b - spmv(A, x)))
    if flag == "ok":
        if true_norm <= 10.0 * threshold:
            # recursive claim holds (allowing benign recursion/true drift)
            converged = True
        else:
            converged = False
            flag = "drift"
    else:
        converged = true_norm <= threshold
        if converged:
            flag = "ok"
    return KrylovResult(x=x, iterations=iters, residual_norm=true_norm,
                        converged=converged, flag=flag)
