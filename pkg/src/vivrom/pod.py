"""Proper orthogonal decomposition by the method of snapshots.

Snapshots are the columns of ``S`` (DOF x N).  The correlation matrix is
``C = S^T W S`` without a ``1/N`` factor, so the squared training
reconstruction error with ``r`` modes equals the sum of the discarded
eigenvalues.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linsolve import symmetric_eig

RANK_TOL = 1e-12


class PodRankError(ValueError):
    def __init__(self, requested: int, usable: int):
        super().__init__(f"requested {requested} modes but only {usable} are "
                         f"numerically resolved (eigenvalues above {RANK_TOL:g} * lambda_1)")
        self.requested = requested
        self.usable = usable


@dataclass
class PodBasis:
    """Weighted-orthonormal modes with their eigenvalue spectrum."""

    modes: np.ndarray  # (n_dof, n_modes)
    eigenvalues: np.ndarray  # full spectrum, descending
    weights: np.ndarray
    lifting: np.ndarray | None = None

    @property
    def n_modes(self) -> int:
        return self.modes.shape[1]

    @property
    def n_dof(self) -> int:
        return self.modes.shape[0]

    def truncate(self, n: int) -> "PodBasis":
        if not 0 <= n <= self.n_modes:
            raise ValueError(f"cannot keep {n} of {self.n_modes} modes")
        return PodBasis(self.modes[:, :n], self.eigenvalues, self.weights, self.lifting)

    def gram(self) -> np.ndarray:
        return self.modes.T @ (self.weights[:, None] * self.modes)


def _weights(w, n_dof):
    w = np.ones(n_dof) if w is None else np.asarray(w, dtype=float)
    if w.shape != (n_dof,):
        raise ValueError(f"weights have shape {w.shape}, expected ({n_dof},)")
    if np.any(w <= 0):
        raise ValueError("inner-product weights must be positive")
    return w


def build_correlation(S, weights=None) -> np.ndarray:
    """``C_ij = (s_i, s_j)_W``."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[1] < 2:
        raise ValueError("need a DOF x N snapshot matrix with at least 2 snapshots")
    w = _weights(weights, S.shape[0])
    C = S.T @ (w[:, None] * S)
    return 0.5 * (C + C.T)


def numerical_rank(eigenvalues, tol: float = RANK_TOL) -> int:
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size == 0 or lam[0] <= 0:
        return 0
    return int(np.sum(lam > tol * lam[0]))


def weighted_orthonormalize(Phi: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """QR in the weighted inner product, column signs preserved."""
    sw = np.sqrt(weights)[:, None]
    Q, R = np.linalg.qr(Phi * sw)
    s = np.sign(np.diag(R))
    s[s == 0] = 1.0
    return Q * s / sw


def compute_modes(S, n_modes: int | None = None, weights=None, C=None,
                  method: str = "lapack", rank_tol: float = RANK_TOL) -> PodBasis:
    """Modes ``phi_i = S v_i / sqrt(lambda_i)`` re-orthonormalized in the
    weighted inner product.  ``n_modes=None`` keeps the numerical rank."""
    S = np.asarray(S, dtype=float)
    w = _weights(weights, S.shape[0])
    C = build_correlation(S, w) if C is None else np.asarray(C, dtype=float)
    lam, V = symmetric_eig(C, method)
    lam = np.maximum(lam, 0.0)
    rank = numerical_rank(lam, rank_tol)
    if n_modes is None:
        n_modes = rank
    if n_modes > rank:
        raise PodRankError(n_modes, rank)
    if n_modes < 0:
        raise ValueError("n_modes must be nonnegative")
    Phi = S @ V[:, :n_modes] / np.sqrt(lam[:n_modes])
    if n_modes:
        Phi = weighted_orthonormalize(Phi, w)
    return PodBasis(Phi, lam, w)


def span_basis(S, weights=None, rel_tol: float = 1e-12, max_passes: int = 6,
               rank_tol: float = 1e-10) -> PodBasis:
    """Weighted-orthonormal basis spanning the snapshots to ``rel_tol``.

    The eigenproblem of ``S^T W S`` resolves directions only down to about
    ``sqrt(machine eps)`` of the dominant one, so the snapshots are deflated
    against the modes found so far and the method of snapshots is repeated
    on the residual.  Eigenvalues returned are those of the first pass.
    """
    S = np.asarray(S, dtype=float)
    w = _weights(weights, S.shape[0])
    first = compute_modes(S, None, w, rank_tol=rank_tol)
    Phi = first.modes
    scale = np.sqrt(np.max(np.sum(w[:, None] * S * S, axis=0)))
    for _ in range(max_passes):
        R = S - Phi @ (Phi.T @ (w[:, None] * S))
        norms = np.sqrt(np.sum(w[:, None] * R * R, axis=0))
        if norms.max() <= rel_tol * scale:
            break
        extra = compute_modes(R, None, w, rank_tol=rank_tol).modes
        Phi = weighted_orthonormalize(np.hstack([Phi, extra]), w)
    return PodBasis(Phi, first.eigenvalues, w)


def ric(eigenvalues, M: int) -> float:
    """Relative information content of the first ``M`` eigenvalues."""
    lam = np.maximum(np.asarray(eigenvalues, dtype=float), 0.0)
    total = lam.sum()
    if total <= 0:
        return 1.0
    return float(lam[:max(M, 0)].sum() / total)


def modes_for_energy(eigenvalues, delta: float) -> int:
    """Smallest ``M`` with ``RIC(M) >= delta``."""
    if not 0 < delta <= 1:
        raise ValueError("energy fraction must lie in (0, 1]")
    lam = np.maximum(np.asarray(eigenvalues, dtype=float), 0.0)
    c = np.cumsum(lam) / max(lam.sum(), 1e-300)
    return int(min(np.searchsorted(c, delta - 1e-15) + 1, len(lam)))


def project(field, basis: PodBasis) -> np.ndarray:
    """Coefficients ``a_j = (phi_j, s - lifting)_W``; ``field`` may hold one
    snapshot per column."""
    f = np.asarray(field, dtype=float)
    if basis.lifting is not None:
        f = f - (basis.lifting if f.ndim == 1 else basis.lifting[:, None])
    wf = basis.weights * f if f.ndim == 1 else basis.weights[:, None] * f
    return basis.modes.T @ wf


def reconstruct(a, basis: PodBasis) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    out = basis.modes @ a
    if basis.lifting is not None:
        out = out + (basis.lifting if out.ndim == 1 else basis.lifting[:, None])
    return out


def apply_lifting(S, lifting) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    return S - np.asarray(lifting, dtype=float)[:, None]


def reconstruction_error(S, basis: PodBasis) -> float:
    """Sum over snapshots of the squared weighted projection error."""
    R = np.asarray(S, float) - reconstruct(project(S, basis), basis)
    return float(np.sum(basis.weights[:, None] * R * R))


# vector fields are stored component-blocked: [u_x(all cells), u_y(all cells)]


def stack_vector(u: np.ndarray) -> np.ndarray:
    return np.asarray(u, dtype=float).T.ravel()


def unstack_vector(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v.reshape(2, -1).T


def uniform_lifting(n_cells: int, U: float) -> np.ndarray:
    """Free-stream ``(U, 0)`` in stacked layout."""
    return np.concatenate([np.full(n_cells, float(U)), np.zeros(n_cells)])
