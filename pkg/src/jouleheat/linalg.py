"""Sparse storage helpers and a Jacobi-preconditioned conjugate gradient solver.

Matrices are ``scipy.sparse.csr_matrix`` objects; the solver itself is
written out here so that iteration counts and residuals are under our
control.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

DENSE_FALLBACK_MAX = 200


class SolverError(RuntimeError):
    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True)
class SolverConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_iter: int | None = None  # default 10 n
    preconditioner: str = "jacobi"

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.preconditioner not in ("none", "jacobi"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    residual: float

    def __iter__(self):
        return iter((self.x, self.iterations, self.residual))


def csr(A) -> sp.csr_matrix:
    """Canonical CSR: sorted unique column indices per row."""
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def is_symmetric(A, tol: float = 1e-12) -> bool:
    D = (A - A.T).tocoo()
    return D.nnz == 0 or float(np.abs(D.data).max()) <= tol


def spmv(A, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} times {x.shape}")
    return A @ x


def cg_solve(A, b: np.ndarray, config: SolverConfig | None = None,
             x0: np.ndarray | None = None) -> SolveResult:
    """Preconditioned CG for SPD ``A``.

    Stops when ||b - A x|| <= max(rel_tol ||b||, abs_tol); the returned
    residual is the true residual norm.
    """
    config = config or SolverConfig()
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"dimension mismatch: {A.shape} vs {n}")
    bnorm = float(np.linalg.norm(b))
    target = max(config.rel_tol * bnorm, config.abs_tol)
    max_iter = config.max_iter or 10 * n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0 and x0 is None:
        return SolveResult(x, 0, 0.0)
    if config.preconditioner == "jacobi":
        d = A.diagonal()
        if np.any(d <= 0):
            raise SolverError("non-positive diagonal, matrix is not SPD")
        dinv = 1.0 / d
    else:
        dinv = np.ones(n)

    r = b - A @ x
    rnorm = float(np.linalg.norm(r))
    it = 0
    # a few restarts guard against drift between recursive and true residual
    for _ in range(4):
        if rnorm <= target:
            break
        z = dinv * r
        p = z.copy()
        rz = float(r @ z)
        while it < max_iter:
            Ap = A @ p
            pAp = float(p @ Ap)
            if not np.isfinite(pAp):
                raise SolverError("NaN breakdown in CG", it, rnorm)
            if pAp <= 0:
                raise SolverError("matrix is not positive definite", it, rnorm)
            alpha = rz / pAp
            x += alpha * p
            r -= alpha * Ap
            it += 1
            rnorm = float(np.linalg.norm(r))
            if not np.isfinite(rnorm):
                raise SolverError("NaN breakdown in CG", it, rnorm)
            if rnorm <= target:
                break
            z = dinv * r
            rz_new = float(r @ z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        r = b - A @ x
        rnorm = float(np.linalg.norm(r))
        if it >= max_iter:
            break
    if rnorm > target:
        raise SolverError(f"CG did not converge in {it} iterations (residual {rnorm:.3e}, "
                          f"target {target:.3e})", it, rnorm)
    return SolveResult(x, it, rnorm)


def dense_solve(A, b: np.ndarray) -> np.ndarray:
    """Dense fallback for small systems (tests and oracles)."""
    n = A.shape[0]
    if n > DENSE_FALLBACK_MAX:
        raise ValueError(f"dense fallback limited to n <= {DENSE_FALLBACK_MAX}")
    dense = A.toarray() if sp.issparse(A) else np.asarray(A)
    return np.linalg.solve(dense, b)


def write_matrix_market(path, A):
    """Coordinate-format Matrix Market dump for debugging."""
    import scipy.io

    path = str(path)
    scipy.io.mmwrite(path, sp.coo_matrix(A))
    return path if path.endswith(".mtx") else path + ".mtx"
