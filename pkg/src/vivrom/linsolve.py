"""Linear algebra kernels: Gauss-Seidel smoother, sparse direct fallback,
symmetric eigensolver and a rank-revealing dense solve."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu, spsolve_triangular

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class RankDeficiencyError(SolverError):
    def __init__(self, rank: int, size: int):
        super().__init__(f"matrix is rank deficient: estimated rank {rank} of {size}")
        self.rank = rank
        self.size = size


@dataclass
class SolverControls:
    tolerance: float = 1e-8
    max_iterations: int = 1000
    relaxation: float = 1.0
    method: str = "gauss-seidel"

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0 < self.relaxation <= 1:
            raise ValueError("relaxation must lie in (0, 1]")
        if self.method not in ("gauss-seidel", "direct"):
            raise ValueError(f"unknown solver method {self.method!r}")


@dataclass
class SolveResult:
    x: np.ndarray
    residual: float
    iterations: int
    converged: bool
    history: list[float]


def _relres(A, x, b, bnorm):
    return float(np.linalg.norm(b - A @ x)) / bnorm


def gauss_seidel(A, b, x0=None, controls: SolverControls | None = None) -> SolveResult:
    """Forward Gauss-Seidel sweeps until ``|b - Ax| / |b| <= tolerance``.

    Each sweep is the triangular solve ``(D + L) x_new = b - U x_old``.
    """
    controls = controls or SolverControls()
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    diag = A.diagonal()
    if np.any(diag == 0.0):
        raise SolverError(f"zero diagonal entry in row {int(np.argmax(diag == 0.0))}")
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        bnorm = 1.0
    lower = sp.tril(A, format="csr")
    upper = sp.triu(A, k=1, format="csr")
    res = _relres(A, x, b, bnorm)
    history = [res]
    it = 0
    while res > controls.tolerance and it < controls.max_iterations:
        x = spsolve_triangular(lower, b - upper @ x, lower=True, overwrite_b=True)
        it += 1
        res = _relres(A, x, b, bnorm)
        history.append(res)
    converged = res <= controls.tolerance
    if not converged:
        log.warning("Gauss-Seidel stopped after %d sweeps at residual %.3e", it, res)
    return SolveResult(x, res, it, converged, history)


def direct_solve(A, b) -> SolveResult:
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    try:
        x = splu(A).solve(b)
    except RuntimeError as exc:
        raise SolverError(f"sparse LU failed: {exc}") from exc
    bnorm = float(np.linalg.norm(b)) or 1.0
    res = _relres(A, x, b, bnorm)
    return SolveResult(x, res, 1, True, [res])


def solve(A, b, x0=None, controls: SolverControls | None = None) -> SolveResult:
    controls = controls or SolverControls()
    if controls.method == "direct":
        return direct_solve(A, b)
    return gauss_seidel(A, b, x0, controls)


# --------------------------------------------------------------------------
# dense


def _check_symmetric(C):
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("expected a square matrix")
    scale = np.linalg.norm(C) or 1.0
    if np.linalg.norm(C - C.T) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (C + C.T)


def _fix_signs(vecs):
    # largest-magnitude component of each eigenvector made positive
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def jacobi_eig(C, tol: float = 1e-12, max_sweeps: int = 100):
    """Cyclic Jacobi rotations; fixed row-major sweep order.

    Stops once the off-diagonal Frobenius norm falls below ``tol * |C|``.
    """
    A = _check_symmetric(C).copy()
    n = A.shape[0]
    V = np.eye(n)
    scale = np.linalg.norm(A) or 1.0
    for _ in range(max_sweeps):
        # measured directly: |A|^2 - |diag|^2 cancels near convergence
        off = np.sqrt(2.0) * np.linalg.norm(A[np.triu_indices(n, 1)])
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if theta == 0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        log.warning("Jacobi eigensolver hit %d sweeps", max_sweeps)
    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], _fix_signs(V[:, order])


def symmetric_eig(C, method: str = "lapack"):
    """Eigenpairs of a symmetric matrix, eigenvalues descending, vectors
    orthonormal with a deterministic sign convention."""
    if method == "jacobi":
        return jacobi_eig(C)
    C = _check_symmetric(C)
    w, V = np.linalg.eigh(C)
    order = np.argsort(-w, kind="stable")
    return w[order], _fix_signs(V[:, order])


def dense_solve(A, b, rcond: float = 1e-12):
    """Solve a small dense system by QR with column pivoting.

    The diagonal of R estimates the numerical rank; a deficient system raises
    :class:`RankDeficiencyError` instead of returning garbage.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise ValueError("expected a square matrix")
    if n == 0:
        return np.zeros_like(b)
    Q, R, piv = scipy.linalg.qr(A, pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > rcond * d[0])) if d[0] > 0 else 0
    if rank < n:
        raise RankDeficiencyError(rank, n)
    y = scipy.linalg.solve_triangular(R, Q.T @ b)
    x = np.empty_like(y)
    x[piv] = y
    return x
