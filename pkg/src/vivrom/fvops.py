"""
Finite-volume operators on :class:`~vivrom.mesh.Mesh2D`.

Pressure is kinematic (p / rho).  Matrices are stored in LDU form (one
diagonal, one coefficient per internal face for each off-diagonal
triangle), which makes the diagonal / off-diagonal split used by the
segregated solvers a one-liner.

Sign conventions: face fluxes are positive out of the owner cell; matrix
rows are integrated over the cell (they already carry the cell volume).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh2D, MeshGeometry, cell_sum

FIXED = ("fixedValue", "movingWall")
BC_KINDS = ("fixedValue", "movingWall", "zeroGradient", "symmetry")


@dataclass
class BC:
    kind: str
    value: object = 0.0

    def __post_init__(self):
        if self.kind not in BC_KINDS:
            raise ValueError(f"unknown boundary condition {self.kind!r}")

    @property
    def fixed(self) -> bool:
        return self.kind in FIXED


@dataclass
class Field:
    """Cell values plus one boundary condition per patch."""

    values: np.ndarray
    bcs: dict[str, BC]

    def check(self, mesh: Mesh2D):
        if len(self.values) != mesh.n_cells:
            raise ValueError("field length does not match the cell count")
        missing = set(mesh.patches) - set(self.bcs)
        if missing:
            raise ValueError(f"no boundary condition for patches {sorted(missing)}")

    def copy(self) -> "Field":
        return Field(self.values.copy(), dict(self.bcs))


def boundary_values(values: np.ndarray, bcs: dict[str, BC], mesh: Mesh2D,
                    geom: MeshGeometry) -> np.ndarray:
    """Face values on every boundary face (ordered like the boundary faces)."""
    ni = mesh.n_internal
    out = np.empty((mesh.n_faces - ni,) + values.shape[1:])
    for name, (start, size) in mesh.patches.items():
        bc = bcs[name]
        sl = slice(start - ni, start - ni + size)
        cells = mesh.owner[start:start + size]
        if bc.fixed:
            out[sl] = np.broadcast_to(np.asarray(bc.value, float), out[sl].shape)
        elif bc.kind == "zeroGradient" or values.ndim == 1:
            out[sl] = values[cells]
        else:  # symmetry on a vector: strip the normal component
            n = geom.nf_hat[start:start + size]
            vp = values[cells]
            out[sl] = vp - np.einsum("ij,ij->i", vp, n)[:, None] * n
    return out


def interpolate(values: np.ndarray, bvals: np.ndarray, mesh: Mesh2D,
                geom: MeshGeometry) -> np.ndarray:
    """Linear (distance weighted) face values; boundary faces take ``bvals``."""
    ni = mesh.n_internal
    w = geom.weights.reshape((-1,) + (1,) * (values.ndim - 1))
    out = np.empty((mesh.n_faces,) + values.shape[1:])
    out[:ni] = w * values[mesh.owner[:ni]] + (1 - w) * values[mesh.neighbour]
    out[ni:] = bvals
    return out


def surface_sum(mesh: Mesh2D, face_values: np.ndarray) -> np.ndarray:
    """Owner-minus-neighbour accumulation of face quantities of any trailing
    shape."""
    if face_values.ndim == 1:
        return cell_sum(mesh, face_values)
    flat = face_values.reshape(len(face_values), -1)
    out = np.column_stack([cell_sum(mesh, flat[:, k]) for k in range(flat.shape[1])])
    return out.reshape((mesh.n_cells,) + face_values.shape[1:])


def grad_gauss(values: np.ndarray, bvals: np.ndarray, mesh: Mesh2D,
               geom: MeshGeometry) -> np.ndarray:
    """Gauss-linear cell gradient.  For a vector field the result has shape
    ``(n_cells, 2, 2)`` with ``g[c, i, j] = d u_j / d x_i``."""
    phi_f = interpolate(values, bvals, mesh, geom)
    if values.ndim == 1:
        flux = geom.Sf * phi_f[:, None]
    else:
        flux = geom.Sf[:, :, None] * phi_f[:, None, :]
    g = surface_sum(mesh, flux)
    return g / geom.V.reshape((-1,) + (1,) * (g.ndim - 1))


# --------------------------------------------------------------------------
# LDU system


@dataclass
class LduMatrix:
    """``diag[i] x_i + sum_f upper[f] x_N + lower[f] x_P = source``."""

    mesh: Mesh2D
    diag: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    source: np.ndarray

    @classmethod
    def zeros(cls, mesh: Mesh2D) -> "LduMatrix":
        nc, ni = mesh.n_cells, mesh.n_internal
        return cls(mesh, np.zeros(nc), np.zeros(ni), np.zeros(ni), np.zeros(nc))

    def copy(self) -> "LduMatrix":
        return LduMatrix(self.mesh, self.diag.copy(), self.upper.copy(),
                         self.lower.copy(), self.source.copy())

    def offdiag_mul(self, x: np.ndarray) -> np.ndarray:
        m = self.mesh
        nc, ni = m.n_cells, m.n_internal
        o, n = m.owner[:ni], m.neighbour
        return (np.bincount(o, self.upper * x[n], nc)
                + np.bincount(n, self.lower * x[o], nc))

    def amul(self, x: np.ndarray) -> np.ndarray:
        return self.diag * x + self.offdiag_mul(x)

    def residual(self, x: np.ndarray) -> np.ndarray:
        return self.source - self.amul(x)

    def to_csr(self) -> sp.csr_matrix:
        m = self.mesh
        nc, ni = m.n_cells, m.n_internal
        o, n = m.owner[:ni], m.neighbour
        idx = np.arange(nc)
        rows = np.concatenate([idx, o, n])
        cols = np.concatenate([idx, n, o])
        data = np.concatenate([self.diag, self.upper, self.lower])
        return sp.csr_matrix((data, (rows, cols)), shape=(nc, nc))

    def relax(self, alpha: float, x: np.ndarray) -> None:
        """Implicit under-relaxation of the diagonal."""
        if alpha >= 1.0:
            return
        d0 = self.diag.copy()
        self.diag = d0 / alpha
        self.source = self.source + (1.0 - alpha) / alpha * d0 * x


@dataclass
class AHSplit:
    """Component-averaged diagonal ``A`` (per unit volume) and the explicit
    remainder ``H`` so that ``A*u - H(u) = M u - b`` per component."""

    A: np.ndarray
    H: np.ndarray
    V: np.ndarray

    @property
    def rAU(self) -> np.ndarray:
        return 1.0 / self.A

    @property
    def HbyA(self) -> np.ndarray:
        return self.H / self.A[:, None]


def ah_split(Mx: LduMatrix, My: LduMatrix, u: np.ndarray, V: np.ndarray) -> AHSplit:
    d = 0.5 * (Mx.diag + My.diag)
    H = np.empty_like(u)
    for k, M in enumerate((Mx, My)):
        H[:, k] = M.source - M.offdiag_mul(u[:, k]) + (d - M.diag) * u[:, k]
    return AHSplit(d / V, H / V[:, None], V)


# --------------------------------------------------------------------------
# convection / diffusion


def van_leer(r: np.ndarray) -> np.ndarray:
    return (r + np.abs(r)) / (1.0 + np.abs(r))


def limited_face_values(phi_c: np.ndarray, grad_c: np.ndarray, F: np.ndarray,
                        mesh: Mesh2D, geom: MeshGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Upwind and Van Leer face values of a scalar on internal faces."""
    ni = mesh.n_internal
    P, N = mesh.owner[:ni], mesh.neighbour
    pos = F[:ni] >= 0
    C = np.where(pos, P, N)
    D = np.where(pos, N, P)
    up = phi_c[C]
    dphi = phi_c[D] - up
    d = geom.C[D] - geom.C[C]
    gd = np.einsum("ij,ij->i", d, grad_c[C])
    small = 1e-300
    safe = np.where(np.abs(dphi) > small, dphi, np.where(dphi >= 0, small, -small))
    with np.errstate(over="ignore"):
        r = np.clip(2.0 * gd / safe - 1.0, -1e12, 1e12)
    w = geom.weights
    lin = w * phi_c[P] + (1 - w) * phi_c[N]
    return up, up + van_leer(r) * (lin - up)


def convection(flux_eff: np.ndarray, mesh: Mesh2D) -> LduMatrix:
    """Implicit upwind convection matrix for the effective (relative) face
    flux; boundary faces are left to :func:`assemble_momentum`."""
    ni = mesh.n_internal
    M = LduMatrix.zeros(mesh)
    F = flux_eff[:ni]
    Fp, Fm = np.maximum(F, 0.0), np.minimum(F, 0.0)
    nc = mesh.n_cells
    M.diag = np.bincount(mesh.owner[:ni], Fp, nc) + np.bincount(mesh.neighbour, -Fm, nc)
    M.upper = Fm.copy()
    M.lower = -Fp
    return M


def laplacian(gamma_f: np.ndarray, mesh: Mesh2D, geom: MeshGeometry) -> LduMatrix:
    """Implicit orthogonal part of ``-div(gamma grad)`` on internal faces."""
    ni = mesh.n_internal
    c = gamma_f[:ni] * geom.delta_coeffs[:ni]
    M = LduMatrix.zeros(mesh)
    nc = mesh.n_cells
    M.diag = np.bincount(mesh.owner[:ni], c, nc) + np.bincount(mesh.neighbour, c, nc)
    M.upper = -c
    M.lower = -c
    return M


def nonorth_correction(grad_c: np.ndarray, gamma_f: np.ndarray, mesh: Mesh2D,
                       geom: MeshGeometry, boundary: np.ndarray | None = None) -> np.ndarray:
    """Explicit face term ``gamma * k . (grad)_f`` on internal faces.

    ``boundary`` masks the boundary faces (fixed-value ones) that also get
    the correction, with the owner-cell gradient; the rest stay zero.
    """
    ni = mesh.n_internal
    w = geom.weights[:, None]
    gf = w * grad_c[mesh.owner[:ni]] + (1 - w) * grad_c[mesh.neighbour]
    out = np.zeros(mesh.n_faces)
    out[:ni] = gamma_f[:ni] * np.einsum("ij,ij->i", geom.corr[:ni], gf)
    if boundary is not None and np.any(boundary):
        f = ni + np.flatnonzero(boundary)
        out[f] = gamma_f[f] * np.einsum("ij,ij->i", geom.corr[f], grad_c[mesh.owner[f]])
    return out


def fixed_mask(bcs: dict[str, BC], mesh: Mesh2D) -> np.ndarray:
    """Boundary faces carrying a fixed value."""
    ni = mesh.n_internal
    mask = np.zeros(mesh.n_faces - ni, dtype=bool)
    for name, (start, size) in mesh.patches.items():
        if bcs[name].fixed:
            mask[start - ni:start - ni + size] = True
    return mask


def diffusion_system(gamma: float, phi: Field, mesh: Mesh2D, geom: MeshGeometry,
                     source: np.ndarray | None = None, nonorth: bool = True) -> LduMatrix:
    """``-div(gamma grad phi) = source`` (``source`` per unit volume) with
    fixed-value or zero-gradient scalar conditions.  The non-orthogonal
    correction uses the gradient of the current ``phi``; iterate to converge
    it."""
    nc = mesh.n_cells
    gf = np.full(mesh.n_faces, float(gamma))
    M = laplacian(gf, mesh, geom)
    M.source = np.zeros(nc) if source is None else np.asarray(source, float) * geom.V
    for name, (start, size) in mesh.patches.items():
        bc = phi.bcs[name]
        if bc.fixed:
            sl = slice(start, start + size)
            cells = mesh.owner[sl]
            c = gf[sl] * geom.delta_coeffs[sl]
            val = np.broadcast_to(np.asarray(bc.value, float), (size,))
            M.diag += np.bincount(cells, c, nc)
            M.source += np.bincount(cells, c * val, nc)
    if nonorth:
        pb = boundary_values(phi.values, phi.bcs, mesh, geom)
        g = grad_gauss(phi.values, pb, mesh, geom)
        M.source += cell_sum(mesh, nonorth_correction(g, gf, mesh, geom,
                                                      fixed_mask(phi.bcs, mesh)))
    return M


@dataclass
class MomentumSystem:
    """Per-component momentum matrices sharing their off-diagonals; the
    pressure gradient is *not* in ``source``."""

    x: LduMatrix
    y: LduMatrix

    @property
    def components(self):
        return (self.x, self.y)


def assemble_momentum(u: Field, phi: np.ndarray, mesh: Mesh2D, geom: MeshGeometry,
                      nu: float, dt: float, u_old: np.ndarray, V_old: np.ndarray,
                      mesh_flux: np.ndarray | None = None,
                      scheme: str = "vanLeer") -> MomentumSystem:
    """Euler-implicit ALE momentum matrices (without pressure gradient).

    Convection uses the relative flux ``phi - mesh_flux`` (Picard-lagged),
    implicit upwind plus a deferred Van Leer correction; diffusion is the
    over-relaxed orthogonal part implicit, the non-orthogonal part explicit.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    ni, nf, nc = mesh.n_internal, mesh.n_faces, mesh.n_cells
    F = phi - (0.0 if mesh_flux is None else mesh_flux)
    ub = boundary_values(u.values, u.bcs, mesh, geom)
    grad = grad_gauss(u.values, ub, mesh, geom)
    base = convection(F, mesh)
    gamma = np.full(nf, nu)
    lap = laplacian(gamma, mesh, geom)
    base.diag += lap.diag + geom.V / dt
    base.upper += lap.upper
    base.lower += lap.lower

    fmask = fixed_mask(u.bcs, mesh)
    out = []
    for k in range(2):
        M = base.copy()
        M.source = V_old * u_old[:, k] / dt
        phik = u.values[:, k]
        gk = grad[:, :, k]
        if scheme == "vanLeer":
            up, ho = limited_face_values(phik, gk, F, mesh, geom)
            corr_flux = F[:ni] * (ho - up)
            M.source -= cell_sum(mesh, np.r_[corr_flux, np.zeros(nf - ni)])
        M.source += cell_sum(mesh, nonorth_correction(gk, gamma, mesh, geom, fmask))
        out.append(M)

    # boundary faces
    for name, (start, size) in mesh.patches.items():
        bc = u.bcs[name]
        sl = slice(start, start + size)
        cells = mesh.owner[sl]
        Fb = F[sl]
        g = nu * geom.delta_coeffs[sl]
        vals = ub[start - ni:start - ni + size]
        for k, M in enumerate(out):
            if bc.fixed:
                M.source -= np.bincount(cells, Fb * vals[:, k], nc)
                M.diag += np.bincount(cells, g, nc)
                M.source += np.bincount(cells, g * vals[:, k], nc)
            elif bc.kind == "zeroGradient":
                M.diag += np.bincount(cells, Fb, nc)
            else:  # symmetry: no convective flux, slip diffusion
                n = geom.nf_hat[sl]
                other = u.values[cells, 1 - k]
                M.diag += np.bincount(cells, g * n[:, k] ** 2, nc)
                M.source -= np.bincount(cells, g * n[:, k] * n[:, 1 - k] * other, nc)
    return MomentumSystem(*out)


def pressure_gradient_source(p: Field, mesh: Mesh2D, geom: MeshGeometry) -> np.ndarray:
    """``V * grad(p)`` as the Gauss surface sum."""
    pb = boundary_values(p.values, p.bcs, mesh, geom)
    return grad_gauss(p.values, pb, mesh, geom) * geom.V[:, None]


# --------------------------------------------------------------------------
# pressure


def face_flux(vec: np.ndarray, bvec: np.ndarray, mesh: Mesh2D, geom: MeshGeometry) -> np.ndarray:
    vf = interpolate(vec, bvec, mesh, geom)
    return np.einsum("ij,ij->i", vf, geom.Sf)


@dataclass
class PressureSystem:
    matrix: LduMatrix
    phiHbyA: np.ndarray
    rAUf: np.ndarray
    coeffs: np.ndarray
    nonorth: np.ndarray
    fixed_faces: np.ndarray
    fixed_values: np.ndarray
    reference_cell: int | None


def flux_fixed_mask(u_bcs: dict[str, BC], mesh: Mesh2D) -> np.ndarray:
    """Boundary faces whose flux is imposed by the velocity condition."""
    ni = mesh.n_internal
    mask = np.zeros(mesh.n_faces - ni, dtype=bool)
    for name, (start, size) in mesh.patches.items():
        if u_bcs[name].kind != "zeroGradient":
            mask[start - ni:start - ni + size] = True
    return mask


def assemble_pressure(ah: AHSplit, phi_b_fixed: np.ndarray, u_bcs: dict[str, BC],
                      p: Field, mesh: Mesh2D, geom: MeshGeometry,
                      grad_p: np.ndarray | None = None) -> PressureSystem:
    """Pressure equation ``div(rAU grad p) = div(phiHbyA)`` in flux form.

    ``phi_b_fixed`` holds the imposed boundary fluxes (used where the velocity
    condition is not zero-gradient).  ``grad_p`` feeds the explicit
    non-orthogonal correction; omit it for the first corrector sweep.
    """
    ni, nf, nc = mesh.n_internal, mesh.n_faces, mesh.n_cells
    HbyA = ah.HbyA
    rAU = ah.rAU
    u_b = boundary_values(HbyA, u_bcs, mesh, geom)
    phiHbyA = face_flux(HbyA, u_b, mesh, geom)
    fmask = flux_fixed_mask(u_bcs, mesh)
    phiHbyA[ni:][fmask] = phi_b_fixed[fmask]

    rAUf = interpolate(rAU, rAU[mesh.owner[ni:]], mesh, geom)
    coeffs = rAUf * geom.delta_coeffs
    M = LduMatrix.zeros(mesh)
    c = coeffs[:ni]
    M.diag = np.bincount(mesh.owner[:ni], c, nc) + np.bincount(mesh.neighbour, c, nc)
    M.upper = -c
    M.lower = -c
    fixed_faces = []
    fixed_vals = []
    for name, (start, size) in mesh.patches.items():
        bc = p.bcs[name]
        if bc.kind == "fixedValue":
            sl = slice(start, start + size)
            cells = mesh.owner[sl]
            val = np.broadcast_to(np.asarray(bc.value, float), (size,))
            M.diag += np.bincount(cells, coeffs[sl], nc)
            M.source += np.bincount(cells, coeffs[sl] * val, nc)
            fixed_faces.append(np.arange(start, start + size))
            fixed_vals.append(val)
    M.source -= cell_sum(mesh, phiHbyA)
    nonorth = np.zeros(nf)
    if grad_p is not None:
        nonorth = nonorth_correction(grad_p, rAUf, mesh, geom, fixed_mask(p.bcs, mesh))
        M.source += cell_sum(mesh, nonorth)
    ref = None
    if not fixed_faces:
        ref = 0
        _pin(M, ref)
    ff = np.concatenate(fixed_faces) if fixed_faces else np.zeros(0, int)
    fv = np.concatenate(fixed_vals) if fixed_vals else np.zeros(0)
    return PressureSystem(M, phiHbyA, rAUf, coeffs, nonorth, ff, fv, ref)


def _pin(M: LduMatrix, cell: int) -> None:
    """Fix ``x[cell] = 0`` while keeping the matrix symmetric."""
    m = M.mesh
    ni = m.n_internal
    touch = (m.owner[:ni] == cell) | (m.neighbour == cell)
    M.upper = np.where(touch, 0.0, M.upper)
    M.lower = np.where(touch, 0.0, M.lower)
    M.diag = M.diag.copy()
    M.diag[cell] = 1.0
    M.source = M.source.copy()
    M.source[cell] = 0.0


def pressure_flux(ps: PressureSystem, p: np.ndarray, mesh: Mesh2D) -> np.ndarray:
    """Conservative face flux ``phiHbyA - rAU (grad p . S)`` from the
    pressure-equation coefficients."""
    ni = mesh.n_internal
    phi = ps.phiHbyA.copy()
    P, N = mesh.owner[:ni], mesh.neighbour
    phi[:ni] -= ps.coeffs[:ni] * (p[N] - p[P]) + ps.nonorth[:ni]
    if len(ps.fixed_faces):
        f = ps.fixed_faces
        phi[f] -= ps.coeffs[f] * (ps.fixed_values - p[mesh.owner[f]]) + ps.nonorth[f]
    return phi


def divergence(phi: np.ndarray, mesh: Mesh2D) -> np.ndarray:
    return cell_sum(mesh, phi)


def courant(phi: np.ndarray, mesh: Mesh2D, geom: MeshGeometry, dt: float) -> np.ndarray:
    """Cell Courant number ``dt * sum|phi| / (2 V)``."""
    nc = mesh.n_cells
    a = np.abs(phi)
    s = np.bincount(mesh.owner, a, nc) + np.bincount(mesh.neighbour, a[:mesh.n_internal], nc)
    return dt * s / (2.0 * geom.V)
