"""Reduced PIMPLE solver: Galerkin-projected momentum and pressure solves on
the full-order assembled operators, plus a POD-RBF surrogate for the point
displacement driven by the cylinder offset."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import pod
from .fvops import LduMatrix
from .linsolve import dense_solve
from .meshmotion import RbfModel, mean_spacing, rbf_evaluate, rbf_train
from .pimple import (FlowCase, FlowState, PimpleControls, RunResult, compute_forces,
                     initial_state, run)
from .mesh import compute_geometry
from .pod import PodBasis

log = logging.getLogger(__name__)


@dataclass
class DisplacementSurrogate:
    """POD of point displacements plus an RBF map from cylinder offset to
    mode coefficients."""

    basis: PodBasis
    model: RbfModel
    theta_min: float
    theta_max: float
    clamp_warnings: int = 0

    @property
    def n_modes(self) -> int:
        return self.basis.n_modes

    def coefficients(self, theta: float) -> np.ndarray:
        t = float(theta)
        slack = 1e-12 * max(abs(self.theta_min), abs(self.theta_max), 1e-300)
        if t < self.theta_min - slack or t > self.theta_max + slack:
            self.clamp_warnings += 1
            if self.clamp_warnings <= 5:
                log.warning("cylinder offset %.4g outside the training range [%.4g, %.4g]; "
                            "clamped", t, self.theta_min, self.theta_max)
            t = min(max(t, self.theta_min), self.theta_max)
        return rbf_evaluate(self.model, np.array([t]))[0]

    def displacement(self, theta: float) -> np.ndarray:
        """Point displacement ``(n_points, 2)``."""
        return pod.unstack_vector(pod.reconstruct(self.coefficients(theta), self.basis))


def train_displacement_surrogate(displacements, thetas, n_modes: int = 1,
                                 basis: str = "gaussian", tail: bool = True,
                                 dedup_tol: float = 1e-10) -> DisplacementSurrogate:
    """``displacements``: sequence of ``(n_points, 2)`` arrays; ``thetas``:
    the cylinder offsets they belong to."""
    thetas = np.asarray(thetas, dtype=float)
    D = np.column_stack([pod.stack_vector(d) for d in displacements])
    if D.shape[1] != len(thetas):
        raise ValueError("one offset per displacement snapshot required")
    order = np.argsort(thetas, kind="stable")
    span = thetas[order[-1]] - thetas[order[0]]
    n_unique = len(np.unique(np.round(thetas / dedup_tol))) if span > dedup_tol else 1
    # thin clustered offsets (turning points of the motion) to keep the
    # Gaussian system well conditioned
    gap = max(dedup_tol, 0.5 * span / max(n_unique - 1, 1))
    keep = [order[0]]
    for i in order[1:]:
        if thetas[i] - thetas[keep[-1]] >= gap:
            keep.append(i)
    keep = np.sort(np.array(keep))
    if len(keep) < 2:
        raise ValueError("all training offsets coincide; the surrogate is degenerate")
    D, th = D[:, keep], thetas[keep]
    b = pod.compute_modes(D, n_modes)
    c = pod.project(D, b).T
    model = rbf_train(th, c, basis, eps=2.0 * mean_spacing(th), tail=tail)
    return DisplacementSurrogate(b, model, float(thetas.min()), float(thetas.max()))


def project_system(A, b, basis: np.ndarray, lifting: np.ndarray | None = None):
    """Galerkin triple product ``Phi^T A Phi`` and ``Phi^T (b - A L)``."""
    A = sp.csr_matrix(A) if sp.issparse(A) else np.asarray(A, dtype=float)
    AP = A @ basis
    Ar = basis.T @ AP
    rhs = np.asarray(b, dtype=float)
    if lifting is not None:
        rhs = rhs - A @ lifting
    return np.asarray(Ar), basis.T @ rhs


def lifted_reconstruct(a, basis: PodBasis) -> np.ndarray:
    """Velocity ``lifting + Phi a`` as an ``(n_cells, 2)`` array."""
    return pod.unstack_vector(pod.reconstruct(a, basis))


@dataclass
class RomBases:
    u: PodBasis
    p: PodBasis
    displacement: DisplacementSurrogate | None = None

    def __post_init__(self):
        if self.u.n_modes < 1 or self.p.n_modes < 1:
            raise ValueError("velocity and pressure bases need at least one mode each")


class ReducedSolvers:
    """Strategy for :func:`vivrom.pimple.run` replacing every linear solve by
    its Galerkin projection onto the POD bases."""

    def __init__(self, bases: RomBases):
        self.bases = bases
        self.a = np.zeros(bases.u.n_modes)
        self.b = np.zeros(bases.p.n_modes)
        self.c = np.zeros(bases.displacement.n_modes if bases.displacement else 0)

    def momentum(self, mats: tuple[LduMatrix, LduMatrix], rhs: np.ndarray,
                 u0: np.ndarray) -> np.ndarray:
        bu = self.bases.u
        A = sp.block_diag([M.to_csr() for M in mats], format="csr")
        Ar, br = project_system(A, pod.stack_vector(rhs), bu.modes, bu.lifting)
        self.a = dense_solve(Ar, br)
        return lifted_reconstruct(self.a, bu)

    def pressure(self, M: LduMatrix, p0: np.ndarray) -> np.ndarray:
        bp = self.bases.p
        Ar, br = project_system(M.to_csr(), M.source, bp.modes)
        self.b = dense_solve(Ar, br)
        return bp.modes @ self.b

    def velocity(self, u: np.ndarray) -> np.ndarray:
        self.a = pod.project(pod.stack_vector(u), self.bases.u)
        return lifted_reconstruct(self.a, self.bases.u)

    def displacement(self, y: float) -> np.ndarray:
        s = self.bases.displacement
        if s is None:
            raise ValueError("moving case needs a displacement surrogate")
        self.c = s.coefficients(y)
        return s.displacement(y)


@dataclass
class RomResult:
    run: RunResult
    times: list = field(default_factory=list)
    coeffs: list = field(default_factory=list)


def reduced_initial_state(case: FlowCase, controls: PimpleControls, bases: RomBases,
                          u0: np.ndarray, p0: np.ndarray, phi0: np.ndarray,
                          t0: float = 0.0, y0: float = 0.0, ydot0: float = 0.0,
                          accel0: float = 0.0) -> tuple[FlowState, ReducedSolvers]:
    """Project a full-order state onto the bases to start the reduced run."""
    solvers = ReducedSolvers(bases)
    state = initial_state(case, controls, t0)
    state.u = solvers.velocity(u0)
    solvers.b = pod.project(p0, bases.p)
    state.p = bases.p.modes @ solvers.b
    state.phi = np.array(phi0, dtype=float)
    state.y, state.ydot, state.accel = y0, ydot0, accel0
    if state.osc is not None:
        state.osc = replace(state.osc, y=y0, ydot=ydot0)
    if case.moving:
        state.points = case.mesh.points + solvers.displacement(y0)
        state.geom = compute_geometry(case.mesh, state.points)
    state.forces = compute_forces(case, state)
    return state, solvers


def run_rom(case: FlowCase, controls: PimpleControls, bases: RomBases,
            state: FlowState, solvers: ReducedSolvers | None = None,
            n_steps: int | None = None) -> RomResult:
    """Reduced time loop; records ``(t, a, b, c)`` after every step."""
    if bases.p.n_modes < 1:
        raise ValueError("the pressure basis must have at least one mode")
    solvers = solvers or ReducedSolvers(bases)
    out = RomResult(None)

    def log_coeffs(s: FlowState):
        out.times.append(s.t)
        out.coeffs.append(np.concatenate([solvers.a, solvers.b, solvers.c]))

    log_coeffs(state)
    out.run = run(case, controls, solvers, state=state, n_steps=n_steps, on_step=log_coeffs)
    return out
