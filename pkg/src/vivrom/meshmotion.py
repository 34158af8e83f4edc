"""Mesh deformation by radial basis functions or the linear spring analogy.

The RBF network here is also the interpolator behind the ROM displacement
surrogate, where the "points" are scalar parameter values.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .linsolve import RankDeficiencyError, dense_solve
from .mesh import Mesh2D, compute_geometry

log = logging.getLogger(__name__)

BASES = ("tps", "gaussian", "imq")


class RbfSingularError(ValueError):
    pass


def basis_function(kind: str, r: np.ndarray, eps: float = 1.0) -> np.ndarray:
    """Radial kernel ``rho(r)``: thin-plate ``r^2 log r``, Gaussian
    ``exp(-(r/eps)^2)`` or inverse multiquadric ``1/sqrt(1 + (r/eps)^2)``."""
    r = np.asarray(r, dtype=float)
    if kind == "tps":
        with np.errstate(divide="ignore", invalid="ignore"):
            out = r * r * np.log(r)
        return np.where(r > 0, out, 0.0)
    if kind == "gaussian":
        return np.exp(-(r / eps) ** 2)
    if kind == "imq":
        return 1.0 / np.sqrt(1.0 + (r / eps) ** 2)
    raise ValueError(f"unknown RBF basis {kind!r}; choose from {BASES}")


@dataclass
class RbfModel:
    centers: np.ndarray  # (n, d)
    basis: str
    eps: float
    gamma: np.ndarray  # (n, m)
    beta: np.ndarray  # (d + 1, m) or (0, m) without tail
    tail: bool

    @property
    def n_outputs(self) -> int:
        return self.gamma.shape[1]


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def _tail_matrix(x: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((len(x), 1)), x])


def mean_spacing(centers) -> float:
    """Mean nearest-neighbour distance between centers."""
    c = _as_points(centers)
    if len(c) < 2:
        return 1.0
    d = cdist(c, c)
    np.fill_diagonal(d, np.inf)
    return float(np.mean(d.min(axis=1)))


def rbf_train(centers, values, basis: str = "tps", eps: float | None = None,
              tail: bool = True) -> RbfModel:
    """Solve ``[Phi Q; Q^T 0] [gamma; beta] = [d; 0]`` for every output column.

    ``eps`` defaults to twice the mean center spacing (ignored by ``tps``).
    """
    c = _as_points(centers)
    v = np.asarray(values, dtype=float)
    squeeze = v.ndim == 1
    v = v[:, None] if squeeze else v
    n, d = c.shape
    if len(v) != n:
        raise ValueError("one value row per center required")
    if basis not in BASES:
        raise ValueError(f"unknown RBF basis {basis!r}; choose from {BASES}")
    if n > 1:
        dist = cdist(c, c)
        np.fill_diagonal(dist, np.inf)
        scale = max(float(np.max(np.abs(c))), 1.0)
        if np.min(dist) <= 1e-12 * scale:
            i, j = sorted(np.unravel_index(int(np.argmin(dist)), dist.shape))
            raise RbfSingularError(f"coincident RBF centers {i} and {j}")
    if eps is None:
        eps = 2.0 * mean_spacing(c)
    Phi = basis_function(basis, cdist(c, c), eps)
    if tail:
        Q = _tail_matrix(c)
        q = Q.shape[1]
        A = np.block([[Phi, Q], [Q.T, np.zeros((q, q))]])
        rhs = np.vstack([v, np.zeros((q, v.shape[1]))])
    else:
        A, rhs = Phi, v
    try:
        sol = np.column_stack([dense_solve(A, rhs[:, k]) for k in range(rhs.shape[1])])
    except RankDeficiencyError as exc:
        raise RbfSingularError(f"RBF system is singular ({exc}); "
                               "too few centers for the polynomial tail?") from exc
    res = np.linalg.norm(A @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if res > 1e-10:
        log.warning("RBF training residual %.2e", res)
    gamma = sol[:n]
    beta = sol[n:] if tail else np.zeros((0, v.shape[1]))
    return RbfModel(c, basis, float(eps), gamma, beta, tail)


def rbf_evaluate(model: RbfModel, points) -> np.ndarray:
    x = _as_points(points)
    out = basis_function(model.basis, cdist(x, model.centers), model.eps) @ model.gamma
    if model.tail:
        out = out + _tail_matrix(x) @ model.beta
    return out


# --------------------------------------------------------------------------
# spring analogy


def spring_stiffness(points: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Edge stiffness inversely proportional to edge length."""
    L = np.linalg.norm(points[edges[:, 1]] - points[edges[:, 0]], axis=1)
    if np.any(L <= 0):
        raise ValueError("zero-length edge")
    return 1.0 / L


@dataclass
class SpringResult:
    displacement: np.ndarray
    iterations: int
    change: float
    converged: bool


def spring_relax(points: np.ndarray, edges: np.ndarray, fixed: np.ndarray,
                 fixed_disp: np.ndarray, tolerance: float = 1e-10,
                 max_iter: int = 100000, initial: np.ndarray | None = None) -> SpringResult:
    """Jacobi iteration ``delta_i <- sum_j a_ij delta_j / sum_j a_ij``.

    Points listed in ``fixed`` keep ``fixed_disp`` at every iterate.  Stops
    when the largest update falls below ``tolerance`` times the largest
    prescribed displacement.
    """
    points = np.asarray(points, float)
    n = len(points)
    fixed = np.asarray(fixed, dtype=np.int64)
    fixed_disp = np.asarray(fixed_disp, float)
    a = spring_stiffness(points, edges)
    i, j = edges[:, 0], edges[:, 1]
    wsum = np.bincount(i, a, n) + np.bincount(j, a, n)
    free = np.ones(n, dtype=bool)
    free[fixed] = False
    if np.any(wsum[free] == 0):
        raise ValueError("free point without any edge")
    dim = fixed_disp.shape[1] if fixed_disp.ndim == 2 else 1
    delta = np.zeros((n, dim)) if initial is None else np.array(initial, float).reshape(n, dim)
    delta[fixed] = fixed_disp.reshape(len(fixed), dim)
    scale = max(float(np.max(np.abs(fixed_disp))) if fixed_disp.size else 0.0, 1e-300)
    change = np.inf
    it = 0
    while it < max_iter:
        acc = np.empty_like(delta)
        for k in range(dim):
            acc[:, k] = (np.bincount(i, a * delta[j, k], n)
                         + np.bincount(j, a * delta[i, k], n))
        new = delta.copy()
        new[free] = acc[free] / wsum[free, None]
        change = float(np.max(np.abs(new - delta))) / scale
        delta = new
        it += 1
        if change <= tolerance:
            break
    converged = change <= tolerance
    if not converged:
        log.warning("spring relaxation stopped after %d sweeps (update %.2e)", it, change)
    out = delta if fixed_disp.ndim == 2 else delta[:, 0]
    return SpringResult(out, it, change, converged)


# --------------------------------------------------------------------------
# mesh deformation


@dataclass
class MeshMotionConfig:
    method: str = "rbf"
    basis: str = "tps"
    coarsen: int = 1
    moving_patch: str = "cylinder"
    spring_tolerance: float = 1e-10
    spring_max_iter: int = 200000

    def __post_init__(self):
        if self.method not in ("rbf", "spring"):
            raise ValueError(f"unknown mesh motion method {self.method!r}")
        if self.coarsen < 1:
            raise ValueError("coarsen must be >= 1")


class MeshDeformer:
    """Point motion for a rigid transverse translation of the moving patch.

    Both methods are linear in the prescribed displacement, so the response
    to a unit displacement is computed once and scaled.
    """

    def __init__(self, mesh: Mesh2D, config: MeshMotionConfig | None = None):
        self.mesh = mesh
        self.config = config or MeshMotionConfig()
        cfg = self.config
        if cfg.moving_patch not in mesh.patches:
            raise ValueError(f"mesh has no patch {cfg.moving_patch!r}")
        self.moving = mesh.patch_points(cfg.moving_patch)
        boundary = mesh.boundary_points()
        self.static = np.setdiff1d(boundary, self.moving)
        self.unit = self._unit_response()

    def _unit_response(self) -> np.ndarray:
        cfg, mesh = self.config, self.mesh
        pts = mesh.points
        n = mesh.n_points
        if cfg.method == "rbf":
            mov = self.moving[::cfg.coarsen]
            centers = np.concatenate([mov, self.static])
            vals = np.concatenate([np.ones(len(mov)), np.zeros(len(self.static))])
            model = rbf_train(pts[centers], vals, cfg.basis)
            unit = rbf_evaluate(model, pts)[:, 0]
        else:
            fixed = np.concatenate([self.moving, self.static])
            vals = np.concatenate([np.ones(len(self.moving)), np.zeros(len(self.static))])
            res = spring_relax(pts, mesh.edges(), fixed, vals[:, None],
                               cfg.spring_tolerance, cfg.spring_max_iter)
            unit = res.displacement[:, 0]
        out = np.zeros(n)
        out[:] = unit
        out[self.moving] = 1.0
        out[self.static] = 0.0
        return out

    def displacement(self, y: float) -> np.ndarray:
        """Per-point displacement ``(n_points, 2)`` for cylinder offset ``y``."""
        d = np.zeros((self.mesh.n_points, 2))
        d[:, 1] = y * self.unit
        return d

    def deform(self, y: float, check: bool = True) -> np.ndarray:
        """New point positions; raises :class:`~vivrom.mesh.MeshError` on
        inverted cells."""
        new = self.mesh.points + self.displacement(y)
        if check:
            try:
                compute_geometry(self.mesh, new)
            except ValueError as exc:
                raise type(exc)(f"{exc}; displacement y={y:g} too large, "
                                "reduce the time step") from exc
        return new


def deform_mesh(mesh: Mesh2D, y: float, method: str = "rbf") -> np.ndarray:
    """One-off convenience wrapper around :class:`MeshDeformer`."""
    return MeshDeformer(mesh, MeshMotionConfig(method=method)).deform(y)
