"""1-DOF mass-spring-damper cylinder and the fluid loads that drive it."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .fvops import Field, boundary_values
from .mesh import Mesh2D, MeshGeometry


@dataclass(frozen=True)
class Oscillator:
    """Transverse oscillator ``m y'' + c y' + k y = F_y`` (per unit depth)."""

    m: float
    k: float
    zeta: float
    y: float = 0.0
    ydot: float = 0.0

    def __post_init__(self):
        if not (self.m > 0 and self.k > 0 and self.zeta >= 0):
            raise ValueError("need m > 0, k > 0, zeta >= 0")

    @property
    def omega_n(self) -> float:
        return math.sqrt(self.k / self.m)

    @property
    def f_n(self) -> float:
        return self.omega_n / (2 * math.pi)

    @property
    def c(self) -> float:
        return 2.0 * self.m * self.zeta * self.omega_n

    def acceleration(self, force: float) -> float:
        return force / self.m - 2 * self.zeta * self.omega_n * self.ydot - self.omega_n**2 * self.y

    def energy(self) -> float:
        """Mass-normalised mechanical energy ``(ydot^2 + omega_n^2 y^2) / 2``."""
        return 0.5 * (self.ydot**2 + self.omega_n**2 * self.y**2)


def natural_quantities(m: float, k: float, U: float = 1.0, D: float = 1.0):
    """``(omega_n, f_n, U*)`` with ``U* = U / (f_n D)``."""
    if not (m > 0 and k > 0):
        raise ValueError("need m > 0 and k > 0")
    omega = math.sqrt(k / m)
    f = omega / (2 * math.pi)
    return omega, f, U / (f * D)


def symplectic_step(osc: Oscillator, force: float, dt: float,
                    added_mass: float = 0.0, accel_prev: float = 0.0) -> Oscillator:
    """Velocity-Verlet step (kick-drift-kick) with the force held constant.

    The damping force is linear in ``ydot``, so the closing half-kick is
    solved for the new velocity in closed form.  ``added_mass`` moves an
    estimate of the fluid added mass to the left-hand side, balanced by
    ``added_mass * accel_prev`` on the right; it vanishes as ``dt -> 0`` and
    stabilises loosely coupled runs at low mass ratio.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    me = osc.m + added_mass
    fe = force + added_mass * accel_prev
    c_m = osc.c / me
    k_m = osc.k / me
    a0 = fe / me - c_m * osc.ydot - k_m * osc.y
    v_half = osc.ydot + 0.5 * dt * a0
    y1 = osc.y + dt * v_half
    v1 = (v_half + 0.5 * dt * (fe / me - k_m * y1)) / (1.0 + 0.5 * dt * c_m)
    return replace(osc, y=y1, ydot=v1)


@dataclass
class ForceResult:
    Fx: float
    Fy: float
    CL: float
    CD: float
    Fx_pressure: float = 0.0
    Fy_pressure: float = 0.0


def integrate_forces(u: Field, p: Field, mesh: Mesh2D, geom: MeshGeometry,
                     patch: str = "cylinder", nu: float = 0.005, rho: float = 1.0,
                     U_ref: float = 1.0, D_ref: float = 1.0) -> ForceResult:
    """Pressure plus viscous force exerted by the fluid on the body.

    Face area vectors on the patch point out of the fluid, i.e. into the
    body, so ``F = sum (p I - nu (grad u + grad u^T)) . S`` times ``rho``.
    The wall-normal velocity gradient is one-sided, cell centre to wall.
    """
    if patch not in mesh.patches or mesh.patches[patch][1] == 0:
        raise ValueError(f"patch {patch!r} is missing or empty")
    ni = mesh.n_internal
    sl = mesh.patch_slice(patch)
    bsl = slice(sl.start - ni, sl.stop - ni)
    cells = mesh.owner[sl]
    S = geom.Sf[sl]
    pw = boundary_values(p.values, p.bcs, mesh, geom)[bsl]
    uw = boundary_values(u.values, u.bcs, mesh, geom)[bsl]
    n = S / geom.magSf[sl, None]
    dn = np.einsum("ij,ij->i", geom.delta[sl], n)
    dudn = (uw - u.values[cells]) / dn[:, None]
    # grad u ~ n (x) du/dn, so (grad u + grad u^T) . S = |S| (du/dn + n (du/dn . n))
    shear = geom.magSf[sl, None] * (dudn + n * np.einsum("ij,ij->i", dudn, n)[:, None])
    Fp = np.sum(pw[:, None] * S, axis=0)
    Fv = -nu * np.sum(shear, axis=0)
    F = rho * (Fp + Fv)
    q = 0.5 * rho * U_ref**2 * D_ref
    return ForceResult(float(F[0]), float(F[1]), float(F[1] / q), float(F[0] / q),
                       float(rho * Fp[0]), float(rho * Fp[1]))


def force_coefficients(Fx: float, Fy: float, rho: float = 1.0, U: float = 1.0, D: float = 1.0):
    q = 0.5 * rho * U**2 * D
    return Fy / q, Fx / q
