"""Dense direct solves for local systems, ILU(0) + BiCGSTAB for the global one."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numba
import numpy as np
import scipy.linalg
import scipy.sparse as sp

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10


class SingularMatrixError(np.linalg.LinAlgError):
    def __init__(self, msg, index=None):
        super().__init__(msg)
        self.index = index


class ZeroPivotError(ArithmeticError):
    def __init__(self, row):
        super().__init__(f"ILU(0) hit a zero pivot in row {row}")
        self.row = row


# --------------------------------------------------------------------------
# dense


@dataclass(frozen=True)
class DenseLU:
    lu: np.ndarray
    piv: np.ndarray

    def solve(self, b: np.ndarray) -> np.ndarray:
        return scipy.linalg.lu_solve((self.lu, self.piv), b, check_finite=False)


def lu_factor(a: np.ndarray) -> DenseLU:
    """Partial-pivot LU; raises SingularMatrixError on a numerically zero pivot."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    amax = np.abs(a).max() if a.size else 0.0
    if amax == 0.0:
        raise SingularMatrixError("matrix is identically zero")
    with warnings.catch_warnings():
        # singularity is reported below as an exception instead
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
    pivots = np.abs(np.diag(lu))
    thresh = np.finfo(float).eps * n * amax
    if pivots.min() <= thresh:
        raise SingularMatrixError(
            f"numerically singular: pivot {pivots.min():.3e} below {thresh:.3e}"
        )
    return DenseLU(lu, piv)


def lu_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A X = B for one or several right-hand sides."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != np.shape(a)[0]:
        raise ValueError("row count of B does not match A")
    return lu_factor(a).solve(b)


def batched_solve(a: np.ndarray, b: np.ndarray, labels=None) -> np.ndarray:
    """Solve a stack of small dense systems (LAPACK getrf/getrs per matrix).

    On failure the error names the first singular system, using ``labels`` to
    translate stack positions into node ids when given.
    """
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        x = None
    if x is None or not np.all(np.isfinite(x)):
        for i in range(a.shape[0]):
            try:
                xi = np.linalg.solve(a[i], b[i])
            except np.linalg.LinAlgError:
                xi = None
            if xi is None or not np.all(np.isfinite(xi)):
                idx = int(labels[i]) if labels is not None else i
                raise SingularMatrixError(f"local matrix of node {idx} is singular", index=idx)
    return x


def condition_numbers(a: np.ndarray) -> np.ndarray:
    """2-norm condition number of each matrix in a (n, s, s) stack (or one matrix)."""
    s = np.linalg.svd(a, compute_uv=False)
    with np.errstate(divide="ignore"):
        return s[..., 0] / s[..., -1]


# --------------------------------------------------------------------------
# ILU(0)


@numba.njit(cache=True)
def _ilu0_kernel(n, indptr, indices, data, diag):
    lu = data.copy()
    iw = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        start, end = indptr[i], indptr[i + 1]
        for p in range(start, end):
            iw[indices[p]] = p
        for p in range(start, end):
            k = indices[p]
            if k >= i:
                break
            pivot = lu[diag[k]]
            lu[p] /= pivot
            lik = lu[p]
            for pp in range(diag[k] + 1, indptr[k + 1]):
                pos = iw[indices[pp]]
                if pos >= 0:
                    lu[pos] -= lik * lu[pp]
        for p in range(start, end):
            iw[indices[p]] = -1
        if lu[diag[i]] == 0.0:
            return lu, i
    return lu, -1


@numba.njit(cache=True)
def _lu_solve_kernel(n, indptr, indices, lu, diag, b):
    x = b.copy()
    for i in range(n):
        acc = x[i]
        for p in range(indptr[i], diag[i]):
            acc -= lu[p] * x[indices[p]]
        x[i] = acc
    for i in range(n - 1, -1, -1):
        acc = x[i]
        for p in range(diag[i] + 1, indptr[i + 1]):
            acc -= lu[p] * x[indices[p]]
        x[i] = acc / lu[diag[i]]
    return x


def _csr(a) -> sp.csr_matrix:
    a = sp.csr_matrix(a, dtype=float)
    if not a.has_sorted_indices:
        a = a.copy()
        a.sort_indices()
    return a


class Ilu0Factors:
    """Zero-fill incomplete LU sharing the sparsity pattern of A.

    L (unit lower) and U are stored together in one CSR value array, like the
    classical in-place ILU(0).
    """

    def __init__(self, indptr, indices, lu, diag):
        self.indptr = indptr
        self.indices = indices
        self.lu = lu
        self.diag = diag
        self.n = len(indptr) - 1

    def solve(self, b: np.ndarray) -> np.ndarray:
        return _lu_solve_kernel(
            self.n, self.indptr, self.indices, self.lu, self.diag, np.asarray(b, dtype=float)
        )

    __call__ = solve

    def _as_csr(self):
        return sp.csr_matrix((self.lu, self.indices, self.indptr), shape=(self.n, self.n))

    @property
    def L(self) -> sp.csr_matrix:
        return (sp.tril(self._as_csr(), k=-1) + sp.identity(self.n)).tocsr()

    @property
    def U(self) -> sp.csr_matrix:
        return sp.triu(self._as_csr()).tocsr()


def ilu0(a) -> Ilu0Factors:
    a = _csr(a)
    n = a.shape[0]
    if a.shape[0] != a.shape[1]:
        raise ValueError("ILU(0) needs a square matrix")
    indptr = a.indptr.astype(np.int64)
    indices = a.indices.astype(np.int64)
    diag = np.full(n, -1, dtype=np.int64)
    rows = np.repeat(np.arange(n), np.diff(indptr))
    on_diag = np.flatnonzero(rows == indices)
    diag[rows[on_diag]] = on_diag
    missing = np.flatnonzero(diag < 0)
    if missing.size:
        raise ZeroPivotError(int(missing[0]))
    zero = np.flatnonzero(a.data[diag] == 0.0)
    if zero.size:
        raise ZeroPivotError(int(zero[0]))
    lu, bad = _ilu0_kernel(n, indptr, indices, a.data.astype(float), diag)
    if bad >= 0:
        raise ZeroPivotError(int(bad))
    return Ilu0Factors(indptr, indices, lu, diag)


# --------------------------------------------------------------------------
# BiCGSTAB


@dataclass
class SolveStats:
    iterations: int
    residual: float  # relative: ||b - Ax|| / ||b||
    converged: bool
    tol: float = DEFAULT_TOL

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "relative_residual": self.residual,
            "converged": self.converged,
            "tol": self.tol,
        }


def bicgstab(
    a,
    b: np.ndarray,
    precond: Ilu0Factors | None = None,
    tol: float = DEFAULT_TOL,
    max_iters: int | None = None,
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, SolveStats]:
    """Right-preconditioned BiCGSTAB (van der Vorst).

    Never raises on stagnation or breakdown: the best iterate seen is returned
    with ``converged=False`` so the caller can decide what to do.
    """
    a = _csr(a)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"matrix {a.shape} does not match rhs length {n}")
    if max_iters is None:
        max_iters = 10 * n
    apply_m = precond.solve if precond is not None else (lambda v: v)

    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return np.zeros(n), SolveStats(0, 0.0, True, tol)
    target = tol * bnorm

    r = b - a @ x
    rnorm = np.linalg.norm(r)
    best_x, best_r = x.copy(), rnorm
    it = 0
    restarts = 0
    while rnorm > target and it < max_iters:
        # (re)start the Krylov recurrence from the current iterate
        r_hat = r.copy()
        rho = alpha = omega = 1.0
        v = np.zeros(n)
        p = np.zeros(n)
        breakdown = False
        while it < max_iters:
            rho_new = r_hat @ r
            if abs(rho_new) < 1e-300 or omega == 0.0:
                breakdown = True
                break
            beta = (rho_new / rho) * (alpha / omega)
            rho = rho_new
            p = r + beta * (p - omega * v)
            p_hat = apply_m(p)
            v = a @ p_hat
            denom = r_hat @ v
            if denom == 0.0:
                breakdown = True
                break
            alpha = rho / denom
            s = r - alpha * v
            it += 1
            if np.linalg.norm(s) <= target:
                x = x + alpha * p_hat
                break
            s_hat = apply_m(s)
            t = a @ s_hat
            tt = t @ t
            omega = (t @ s) / tt if tt > 0 else 0.0
            x = x + alpha * p_hat + omega * s_hat
            r = s - omega * t
            rn = np.linalg.norm(r)
            if not np.isfinite(rn):
                breakdown = True
                break
            if rn <= target:
                break
        # recurrence residual drifts from the true one; check before trusting it
        r = b - a @ x
        rnorm = np.linalg.norm(r)
        if not np.isfinite(rnorm):
            x = best_x.copy()
            r = b - a @ x
            rnorm = best_r
        elif rnorm < best_r:
            best_x, best_r = x.copy(), rnorm
        if rnorm <= target or it >= max_iters:
            break
        restarts += 1
        if restarts > 20:
            break
    converged = best_r <= target
    if not converged:
        log.warning("BiCGSTAB stopped after %d iterations at relative residual %.3e", it, best_r / bnorm)
    return best_x, SolveStats(it, float(best_r / bnorm), bool(converged), tol)
