"""Segregated PIMPLE solver for incompressible flow on a moving mesh, coupled
loosely to the cylinder oscillator.

One time step: forces on the body, structural step, point motion, then the
outer momentum/pressure loop on the moved mesh.  The linear solves and the
point displacement are delegated to a strategy object so that the reduced
solver can replay the identical algorithm with projected systems.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import fvops
from .fvops import BC, Field, LduMatrix
from .linsolve import SolverControls, solve
from .mesh import Mesh2D, MeshGeometry, compute_geometry, move_points
from .meshmotion import MeshDeformer, MeshMotionConfig
from .structure import ForceResult, Oscillator, integrate_forces, symplectic_step

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    pass


@dataclass
class PimpleControls:
    n_outer: int = 3
    n_correctors: int = 1
    n_nonorth: int = 1
    alpha_u: float = 0.7
    alpha_p: float = 0.3
    dt: float = 0.01
    end_time: float = 1.0
    adaptive_dt: bool = False
    max_cfl: float = 0.9
    max_dt: float = 0.05
    write_interval: float = 0.1
    momentum_solver: SolverControls = field(default_factory=lambda: SolverControls(1e-8, 200))
    pressure_solver: SolverControls = field(default_factory=lambda: SolverControls(method="direct"))
    relax_final: bool = False
    divergence_growth: int = 3
    divergence_floor: float = 1e-2

    def __post_init__(self):
        if not (0 < self.alpha_u <= 1 and 0 < self.alpha_p <= 1):
            raise ValueError("relaxation factors must lie in (0, 1]")
        if self.max_cfl <= 0:
            raise ValueError("maxCFL must be positive")
        if self.n_outer < 1 or self.n_correctors < 1 or self.n_nonorth < 0:
            raise ValueError("need n_outer >= 1, n_correctors >= 1, n_nonorth >= 0")
        if self.dt <= 0 or self.write_interval <= 0:
            raise ValueError("dt and write_interval must be positive")


@dataclass
class FlowCase:
    """Geometry, physics and boundary conditions of one run.

    ``oscillator=None`` keeps the body fixed.  ``prescribed_motion(t)`` gives
    the body offset directly and overrides the oscillator.  A ``transparent``
    body carries the free-stream velocity instead of a no-slip wall.
    """

    mesh: Mesh2D
    nu: float = 0.005
    rho: float = 1.0
    U_in: float = 1.0
    D: float = 1.0
    oscillator: Oscillator | None = None
    added_mass_coeff: float = 1.0
    prescribed_motion: Callable[[float], float] | None = None
    motion: MeshMotionConfig = field(default_factory=MeshMotionConfig)
    inlet: tuple[str, ...] = ("inlet",)
    outlet: tuple[str, ...] = ("outlet",)
    wall: str = "cylinder"
    transparent: bool = False
    perturbation: float = 0.0

    @property
    def moving(self) -> bool:
        return self.oscillator is not None or self.prescribed_motion is not None

    @property
    def added_mass(self) -> float:
        if self.oscillator is None:
            return 0.0
        return self.added_mass_coeff * self.rho * math.pi * self.D**2 / 4.0

    def velocity_bcs(self, ydot: float = 0.0) -> dict[str, BC]:
        bcs = {}
        for name in self.mesh.patches:
            if name in self.inlet:
                bcs[name] = BC("fixedValue", (self.U_in, 0.0))
            elif name in self.outlet:
                bcs[name] = BC("zeroGradient")
            elif name == self.wall:
                bcs[name] = (BC("fixedValue", (self.U_in, 0.0)) if self.transparent
                             else BC("movingWall", (0.0, ydot)))
            else:
                bcs[name] = BC("symmetry")
        return bcs

    def pressure_bcs(self) -> dict[str, BC]:
        return {name: BC("fixedValue", 0.0) if name in self.outlet else BC("zeroGradient")
                for name in self.mesh.patches}


@dataclass
class FlowState:
    t: float
    step: int
    u: np.ndarray
    p: np.ndarray
    phi: np.ndarray
    points: np.ndarray
    geom: MeshGeometry
    osc: Oscillator | None
    y: float = 0.0
    ydot: float = 0.0
    accel: float = 0.0
    dt: float = 0.01
    forces: ForceResult | None = None

    def copy(self) -> "FlowState":
        return replace(self, u=self.u.copy(), p=self.p.copy(), phi=self.phi.copy(),
                       points=self.points.copy())


@dataclass
class SnapshotRecord:
    time: float
    u: np.ndarray
    p: np.ndarray
    displacement: np.ndarray
    y: float
    ydot: float
    forces: ForceResult
    phi: np.ndarray | None = None
    accel: float = 0.0


@dataclass
class History:
    t: list = field(default_factory=list)
    CL: list = field(default_factory=list)
    CD: list = field(default_factory=list)
    Fy: list = field(default_factory=list)
    y: list = field(default_factory=list)
    ydot: list = field(default_factory=list)
    dt: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    continuity: list = field(default_factory=list)

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: np.asarray(v, dtype=float) for k, v in self.__dict__.items()}


@dataclass
class RunResult:
    history: History
    snapshots: list[SnapshotRecord]
    state: FlowState
    iterates: dict[str, list] | None = None


# --------------------------------------------------------------------------
# strategies


class FullOrderSolvers:
    """Sparse linear solves and cached mesh deformation."""

    def __init__(self, case: FlowCase, controls: PimpleControls):
        self.case = case
        self.controls = controls
        self.deformer = MeshDeformer(case.mesh, case.motion) if case.moving else None
        self.iterates: dict[str, list] | None = None

    def record(self, kind: str, values: np.ndarray) -> None:
        if self.iterates is not None:
            self.iterates.setdefault(kind, []).append(values.copy())

    def momentum(self, mats: tuple[LduMatrix, LduMatrix], rhs: np.ndarray,
                 u0: np.ndarray) -> np.ndarray:
        u = np.empty_like(u0)
        for k, M in enumerate(mats):
            u[:, k] = solve(M.to_csr(), rhs[:, k], u0[:, k], self.controls.momentum_solver).x
        self.record("u", u)
        return u

    def pressure(self, M: LduMatrix, p0: np.ndarray) -> np.ndarray:
        p = solve(M.to_csr(), M.source, p0, self.controls.pressure_solver).x
        self.record("p", p)
        return p

    def velocity(self, u: np.ndarray) -> np.ndarray:
        self.record("u", u)
        return u

    def displacement(self, y: float) -> np.ndarray:
        d = self.deformer.displacement(y)
        self.record("d", d)
        self.record("theta", np.array(y))
        return d


# --------------------------------------------------------------------------
# helpers


def adaptive_dt(phi: np.ndarray, mesh: Mesh2D, geom: MeshGeometry, dt: float,
                max_cfl: float = 0.9, growth: float = 1.2, max_dt: float = np.inf) -> float:
    """Next time step so that the largest cell Courant number stays at or
    below ``max_cfl``; growth per step is capped."""
    cfl = float(np.max(fvops.courant(phi, mesh, geom, dt)))
    scale = growth if cfl <= 0 else min(growth, max_cfl / cfl)
    return min(dt * scale, max_dt)


def boundary_flux(u_bcs: dict[str, BC], mesh: Mesh2D, geom: MeshGeometry,
                  mesh_flux: np.ndarray | None) -> np.ndarray:
    """Imposed flux on every boundary face (zero where it is not imposed).

    A moving wall carries exactly the mesh flux, so the relative flux
    through it vanishes.
    """
    ni = mesh.n_internal
    out = np.zeros(mesh.n_faces - ni)
    for name, (start, size) in mesh.patches.items():
        bc = u_bcs[name]
        sl = slice(start, start + size)
        if bc.kind == "movingWall" and mesh_flux is not None:
            out[start - ni:start - ni + size] = mesh_flux[sl]
        elif bc.fixed:
            val = np.broadcast_to(np.asarray(bc.value, float), (size, 2))
            out[start - ni:start - ni + size] = np.einsum("ij,ij->i", val, geom.Sf[sl])
    return out


def initial_state(case: FlowCase, controls: PimpleControls, t0: float = 0.0) -> FlowState:
    mesh = case.mesh
    geom = compute_geometry(mesh)
    u = np.zeros((mesh.n_cells, 2))
    u[:, 0] = case.U_in
    if case.perturbation:
        # asymmetric kick in the near wake to trigger shedding early
        r2 = (geom.C[:, 0] - 1.5 * case.D) ** 2 + (geom.C[:, 1] - 0.5 * case.D) ** 2
        u[:, 1] += case.perturbation * case.U_in * np.exp(-r2 / (0.5 * case.D) ** 2)
    bcs = case.velocity_bcs()
    ub = fvops.boundary_values(u, bcs, mesh, geom)
    phi = fvops.face_flux(u, ub, mesh, geom)
    fm = fvops.flux_fixed_mask(bcs, mesh)
    phi[mesh.n_internal:][fm] = boundary_flux(bcs, mesh, geom, None)[fm]
    osc = case.oscillator
    y = osc.y if osc is not None else 0.0
    ydot = osc.ydot if osc is not None else 0.0
    if case.prescribed_motion is not None:
        y = float(case.prescribed_motion(t0))
    state = FlowState(t0, 0, u, np.zeros(mesh.n_cells), phi, mesh.points.copy(), geom,
                      osc, y, ydot, 0.0, controls.dt)
    state.forces = compute_forces(case, state)
    return state


def compute_forces(case: FlowCase, state: FlowState) -> ForceResult:
    mesh = case.mesh.with_points(state.points)
    if case.wall not in mesh.patches:
        return ForceResult(0.0, 0.0, 0.0, 0.0)
    u = Field(state.u, case.velocity_bcs(state.ydot))
    p = Field(state.p, case.pressure_bcs())
    return integrate_forces(u, p, mesh, state.geom, case.wall, case.nu, case.rho,
                            max(abs(case.U_in), 1e-300), case.D)


def _momentum_residual(mats, rhs, u) -> float:
    num = sum(float(np.linalg.norm(rhs[:, k] - M.amul(u[:, k]))) ** 2 for k, M in enumerate(mats))
    den = float(np.linalg.norm(rhs)) or 1.0
    return math.sqrt(num) / den


# --------------------------------------------------------------------------
# one time step


def advance(case: FlowCase, controls: PimpleControls, state: FlowState, solvers,
            dt: float) -> tuple[FlowState, float]:
    """Advance ``state`` by ``dt``; returns the new state and the largest
    initial momentum residual over the outer loop."""
    mesh0 = case.mesh
    old_mesh = mesh0.with_points(state.points)
    old_geom = state.geom
    t1 = state.t + dt

    # structure and mesh motion
    y, ydot, accel, osc = state.y, state.ydot, state.accel, state.osc
    if case.prescribed_motion is not None:
        y1 = float(case.prescribed_motion(t1))
        ydot = (y1 - y) / dt
        y = y1
    elif osc is not None:
        Fy = state.forces.Fy if state.forces is not None else 0.0
        new = symplectic_step(osc, Fy, dt, case.added_mass, state.accel)
        accel = (new.ydot - osc.ydot) / dt
        osc, y, ydot = new, new.y, new.ydot
    if case.moving:
        points = mesh0.points + solvers.displacement(y)
        motion = move_points(old_mesh, points, dt)
        geom, mesh_flux = motion.geometry, motion.mesh_flux
    else:
        points, geom, mesh_flux = state.points, old_geom, None
    mesh = mesh0.with_points(points)

    u_bcs = case.velocity_bcs(ydot)
    p_bcs = case.pressure_bcs()
    phi_b = boundary_flux(u_bcs, mesh, geom, mesh_flux)
    fmask = fvops.flux_fixed_mask(u_bcs, mesh)
    ni = mesh.n_internal
    u_old, V_old = state.u, old_geom.V
    u, p = state.u.copy(), state.p.copy()
    phi = state.phi.copy()
    phi[ni:][fmask] = phi_b[fmask]
    res_max = 0.0

    for outer in range(controls.n_outer):
        final = outer == controls.n_outer - 1
        relax = controls.relax_final or not final
        a_u = controls.alpha_u if relax else 1.0
        a_p = controls.alpha_p if relax else 1.0
        msys = fvops.assemble_momentum(Field(u, u_bcs), phi, mesh, geom, case.nu, dt,
                                       u_old, V_old, mesh_flux)
        mats = msys.components
        for M, k in zip(mats, range(2)):
            M.relax(a_u, u[:, k])
        gradp = fvops.pressure_gradient_source(Field(p, p_bcs), mesh, geom)
        rhs = np.column_stack([M.source for M in mats]) - gradp
        res = _momentum_residual(mats, rhs, u)
        res_max = max(res_max, res)
        u = solvers.momentum(mats, rhs, u)

        for _ in range(controls.n_correctors):
            ah = fvops.ah_split(mats[0], mats[1], u, geom.V)
            p_prev = p.copy()
            p_new = p
            for _ in range(controls.n_nonorth + 1):
                pb = fvops.boundary_values(p_new, p_bcs, mesh, geom)
                gp = fvops.grad_gauss(p_new, pb, mesh, geom)
                ps = fvops.assemble_pressure(ah, np.where(fmask, phi_b, 0.0), u_bcs,
                                             Field(p_new, p_bcs), mesh, geom, gp)
                p_new = solvers.pressure(ps.matrix, p_new)
            phi = fvops.pressure_flux(ps, p_new, mesh)
            p = p_prev + a_p * (p_new - p_prev)
            gp = fvops.pressure_gradient_source(Field(p, p_bcs), mesh, geom) / geom.V[:, None]
            u = solvers.velocity(ah.HbyA - ah.rAU[:, None] * gp)
        if not np.all(np.isfinite(u)) or not np.all(np.isfinite(p)):
            raise DivergenceError(f"non-finite field at t={t1:.6g}")

    new_state = FlowState(t1, state.step + 1, u, p, phi, points, geom, osc, y, ydot,
                          accel, dt)
    new_state.forces = compute_forces(case, new_state)
    return new_state, res_max


def _dump(state: FlowState, path: Path | None, reason: str) -> None:
    if path is None:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, t=state.t, u=state.u, p=state.p, phi=state.phi, points=state.points,
             y=state.y, ydot=state.ydot, reason=reason)
    log.error("state dumped to %s", path)


def snapshot_of(case: FlowCase, state: FlowState) -> SnapshotRecord:
    return SnapshotRecord(state.t, state.u.copy(), state.p.copy(),
                          state.points - case.mesh.points, state.y, state.ydot,
                          state.forces, state.phi.copy(), state.accel)


def _log_history(h: History, state: FlowState, res: float, mesh: Mesh2D) -> None:
    f = state.forces
    h.t.append(state.t)
    h.CL.append(f.CL)
    h.CD.append(f.CD)
    h.Fy.append(f.Fy)
    h.y.append(state.y)
    h.ydot.append(state.ydot)
    h.dt.append(state.dt)
    h.residual.append(res)
    h.continuity.append(float(np.max(np.abs(fvops.divergence(state.phi, mesh)))))


def run(case: FlowCase, controls: PimpleControls, solvers=None, state: FlowState | None = None,
        n_steps: int | None = None, dump_path: Path | None = None,
        record_iterates: bool = False,
        on_step: Callable[[FlowState], None] | None = None) -> RunResult:
    """Time loop; returns histories, snapshots and the final state.

    Snapshots are taken at ``t0`` and whenever the time reaches a multiple
    of ``write_interval``.  With ``n_steps`` the loop stops after that many
    steps instead of at ``end_time``.
    """
    solvers = solvers or FullOrderSolvers(case, controls)
    if record_iterates and isinstance(solvers, FullOrderSolvers):
        solvers.iterates = {}
    state = state or initial_state(case, controls)
    hist = History()
    _log_history(hist, state, 0.0, case.mesh.with_points(state.points))
    snaps = [snapshot_of(case, state)]
    next_write = state.t + controls.write_interval
    eps = 1e-9 * controls.dt
    growth = 0
    last_res = np.inf
    dt = state.dt
    while True:
        if n_steps is not None and state.step >= n_steps:
            break
        if n_steps is None and state.t >= controls.end_time - eps:
            break
        if controls.adaptive_dt and state.step > 0:
            dt = adaptive_dt(state.phi, case.mesh.with_points(state.points), state.geom,
                             dt, controls.max_cfl, max_dt=controls.max_dt)
        if n_steps is None:
            dt = min(dt, controls.end_time - state.t)
        try:
            new, res = advance(case, controls, state, solvers, dt)
        except DivergenceError as exc:
            _dump(state, dump_path, str(exc))
            raise
        growth = growth + 1 if res > last_res else 0
        last_res = res
        if growth >= controls.divergence_growth and res > controls.divergence_floor:
            _dump(new, dump_path, "residual growth")
            raise DivergenceError(f"momentum residual grew {growth} consecutive steps "
                                  f"to {res:.3e} at t={new.t:.6g}")
        state = new
        _log_history(hist, state, res, case.mesh.with_points(state.points))
        if state.t >= next_write - eps:
            snaps.append(snapshot_of(case, state))
            while next_write <= state.t + eps:
                next_write += controls.write_interval
        if on_step is not None:
            on_step(state)
    it = solvers.iterates if isinstance(solvers, FullOrderSolvers) else None
    return RunResult(hist, snaps, state, it)
