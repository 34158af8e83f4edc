"""
Polygonal 2D finite-volume mesh: connectivity, geometry, point motion.

Faces are straight segments ``(p0, p1)``.  The area vector of a face is the
segment rotated clockwise, ``S = (y1 - y0, -(x1 - x0))``, and points out of
the owner cell.  Internal faces come first (``owner < neighbour``), then the
boundary faces grouped contiguously by patch, in the OpenFOAM style.

Swept areas are signed so that a face moving outward from its owner sweeps a
positive area.  Summed per cell with the owner/neighbour signs they
reproduce the change in cell volume exactly (discrete GCL).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

MESH_FORMAT_TAG = "vivrom-mesh 1"


class MeshError(ValueError):
    """Invalid connectivity or degenerate geometry."""


@dataclass
class Mesh2D:
    points: np.ndarray
    faces: np.ndarray
    owner: np.ndarray
    neighbour: np.ndarray
    patches: dict[str, tuple[int, int]]
    n_cells: int

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        self.owner = np.asarray(self.owner, dtype=np.int64)
        self.neighbour = np.asarray(self.neighbour, dtype=np.int64)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_internal(self) -> int:
        return len(self.neighbour)

    @property
    def n_points(self) -> int:
        return len(self.points)

    def patch_slice(self, name: str) -> slice:
        start, size = self.patches[name]
        return slice(start, start + size)

    def patch_faces(self, name: str) -> np.ndarray:
        start, size = self.patches[name]
        return np.arange(start, start + size)

    def patch_points(self, name: str) -> np.ndarray:
        return np.unique(self.faces[self.patch_slice(name)].ravel())

    def boundary_points(self) -> np.ndarray:
        return np.unique(self.faces[self.n_internal:].ravel())

    def with_points(self, points: np.ndarray) -> "Mesh2D":
        return Mesh2D(points, self.faces, self.owner, self.neighbour,
                      self.patches, self.n_cells)

    def edges(self) -> np.ndarray:
        """Unique point pairs (i < j) connected by a face."""
        e = np.sort(self.faces, axis=1)
        return np.unique(e, axis=0)

    def validate(self) -> None:
        nf, ni = self.n_faces, self.n_internal
        if self.faces.shape != (nf, 2) or len(self.owner) != nf:
            raise MeshError("faces/owner size mismatch")
        if np.any(self.faces < 0) or np.any(self.faces >= self.n_points):
            raise MeshError("face references a missing point")
        if ni and np.any(self.owner[:ni] >= self.neighbour):
            bad = int(np.argmax(self.owner[:ni] >= self.neighbour))
            raise MeshError(f"internal face {bad}: owner must be < neighbour")
        covered = np.zeros(nf - ni, dtype=int)
        for name, (start, size) in self.patches.items():
            if start < ni or start + size > nf:
                raise MeshError(f"patch {name!r} outside boundary face range")
            covered[start - ni:start - ni + size] += 1
        if np.any(covered != 1):
            raise MeshError("every boundary face must belong to exactly one patch")
        counts = np.bincount(self.owner, minlength=self.n_cells)
        counts += np.bincount(self.neighbour, minlength=self.n_cells)
        if np.any(counts < 3):
            raise MeshError(f"cell {int(np.argmin(counts))} has fewer than 3 faces")


@dataclass
class MeshGeometry:
    """Derived FV metrics.  Boundary entries of ``delta`` run from the owner
    centre to the face centre.  ``weights`` is the owner weight of linear
    interpolation on internal faces."""

    Sf: np.ndarray
    magSf: np.ndarray
    Cf: np.ndarray
    V: np.ndarray
    C: np.ndarray
    delta: np.ndarray
    weights: np.ndarray
    delta_coeffs: np.ndarray
    ortho: np.ndarray
    corr: np.ndarray
    n_internal: int

    @property
    def nf_hat(self) -> np.ndarray:
        return self.Sf / self.magSf[:, None]


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def face_area_vectors(points: np.ndarray, faces: np.ndarray) -> np.ndarray:
    e = points[faces[:, 1]] - points[faces[:, 0]]
    return np.column_stack([e[:, 1], -e[:, 0]])


def _cell_volumes_centres(mesh: Mesh2D, points: np.ndarray):
    """Fan-triangulate each cell about the mean of its face midpoints."""
    nc, ni = mesh.n_cells, mesh.n_internal
    p0, p1 = points[mesh.faces[:, 0]], points[mesh.faces[:, 1]]
    mid = 0.5 * (p0 + p1)
    cnt = (np.bincount(mesh.owner, minlength=nc)
           + np.bincount(mesh.neighbour, minlength=nc)).astype(float)
    ref = np.empty((nc, 2))
    for k in range(2):
        ref[:, k] = (np.bincount(mesh.owner, mid[:, k], nc)
                     + np.bincount(mesh.neighbour, mid[:ni, k], nc)) / cnt

    def side(cells, q0, q1, sign):
        r = ref[cells]
        a = 0.5 * sign * _cross(q0 - r, q1 - r)
        cen = (r + q0 + q1) / 3.0
        return a, cen

    a_o, c_o = side(mesh.owner, p0, p1, 1.0)
    a_n, c_n = side(mesh.neighbour, p0[:ni], p1[:ni], -1.0)
    V = np.bincount(mesh.owner, a_o, nc) + np.bincount(mesh.neighbour, a_n, nc)
    C = np.empty((nc, 2))
    for k in range(2):
        C[:, k] = (np.bincount(mesh.owner, a_o * c_o[:, k], nc)
                   + np.bincount(mesh.neighbour, a_n * c_n[:, k], nc))
    with np.errstate(divide="ignore", invalid="ignore"):
        C /= V[:, None]
    return V, C


def compute_geometry(mesh: Mesh2D, points: np.ndarray | None = None) -> MeshGeometry:
    """Face vectors, cell volumes/centroids, deltas and the over-relaxed
    non-orthogonal split ``S = ortho + corr`` with ``ortho`` parallel to the
    centre-to-centre vector and ``corr`` orthogonal to ``S``."""
    pts = mesh.points if points is None else points
    ni = mesh.n_internal
    Sf = face_area_vectors(pts, mesh.faces)
    magSf = np.hypot(Sf[:, 0], Sf[:, 1])
    if np.any(magSf <= 0.0):
        f = int(np.argmin(magSf))
        raise MeshError(f"degenerate face {f} (cell {int(mesh.owner[f])}) has zero length")
    Cf = 0.5 * (pts[mesh.faces[:, 0]] + pts[mesh.faces[:, 1]])
    V, C = _cell_volumes_centres(mesh, pts)
    if np.any(~(V > 0.0)):
        c = int(np.argmin(np.where(np.isfinite(V), V, -np.inf)))
        raise MeshError(f"inverted or degenerate cell {c}: volume {V[c]:.3e}")

    delta = np.empty_like(Sf)
    delta[:ni] = C[mesh.neighbour] - C[mesh.owner[:ni]]
    delta[ni:] = Cf[ni:] - C[mesh.owner[ni:]]
    Sd = np.einsum("ij,ij->i", Sf, delta)
    if np.any(Sd <= 0.0):
        f = int(np.argmin(Sd))
        raise MeshError(f"face {f}: cell centres not on opposite sides (cell {int(mesh.owner[f])})")
    delta_coeffs = magSf**2 / Sd
    ortho = delta * (magSf**2 / Sd)[:, None]
    corr = Sf - ortho

    # owner weight: normal distance face->neighbour over normal distance owner->neighbour
    dN = np.einsum("ij,ij->i", Sf[:ni], C[mesh.neighbour] - Cf[:ni])
    weights = dN / Sd[:ni]
    return MeshGeometry(Sf, magSf, Cf, V, C, delta, weights, delta_coeffs,
                        ortho, corr, ni)


def swept_areas(faces: np.ndarray, old: np.ndarray, new: np.ndarray) -> np.ndarray:
    """Signed area of the quadrilateral traced by each face between two point
    configurations; positive for motion along the face area vector."""
    a, b = old[faces[:, 0]], old[faces[:, 1]]
    a2, b2 = new[faces[:, 0]], new[faces[:, 1]]
    # shoelace of (a, a2, b2, b) relative to a
    q1, q2, q3 = a2 - a, b2 - a, b - a
    return 0.5 * (_cross(q1, q2) + _cross(q2, q3))


def cell_sum(mesh: Mesh2D, face_values: np.ndarray) -> np.ndarray:
    """Owner-positive / neighbour-negative sum of a face quantity per cell."""
    nc, ni = mesh.n_cells, mesh.n_internal
    return (np.bincount(mesh.owner, face_values, nc)
            - np.bincount(mesh.neighbour, face_values[:ni], nc))


@dataclass
class MotionResult:
    geometry: MeshGeometry
    swept: np.ndarray
    mesh_flux: np.ndarray


def move_points(mesh: Mesh2D, new_points: np.ndarray, dt: float) -> MotionResult:
    """Swept areas and mesh flux for moving ``mesh.points`` to ``new_points``.

    The caller owns the point array; nothing is mutated here.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    try:
        geom = compute_geometry(mesh, new_points)
    except MeshError as exc:
        raise MeshError(f"mesh motion rejected: {exc}; reduce the time step "
                        "or the displacement") from exc
    swept = swept_areas(mesh.faces, mesh.points, new_points)
    return MotionResult(geom, swept, swept / dt)


def non_orthogonality(geom: MeshGeometry, faces=None) -> np.ndarray:
    """Angle in degrees between the centre-to-centre vector and the face
    normal, for internal faces (all of them by default)."""
    ni = geom.n_internal
    idx = np.arange(ni) if faces is None else np.atleast_1d(faces)
    if np.any(idx >= ni):
        raise ValueError("non-orthogonality is defined on internal faces only")
    d, S = geom.delta[idx], geom.Sf[idx]
    c = np.einsum("ij,ij->i", d, S) / (np.linalg.norm(d, axis=1) * geom.magSf[idx])
    return np.degrees(np.arccos(np.clip(c, -1.0, 1.0)))


# --------------------------------------------------------------------------
# generators


def _assemble(points, cell_loops, patch_of_edge):
    """Build owner/neighbour connectivity from CCW cell vertex loops.

    ``patch_of_edge(p0, p1)`` names the patch of a boundary edge.
    """
    edge_map: dict[tuple[int, int], list] = {}
    for c, loop in enumerate(cell_loops):
        n = len(loop)
        for k in range(n):
            p0, p1 = int(loop[k]), int(loop[(k + 1) % n])
            key = (min(p0, p1), max(p0, p1))
            edge_map.setdefault(key, []).append((c, p0, p1))
    internal, boundary = [], {}
    for key, uses in edge_map.items():
        if len(uses) == 2:
            (c0, a0, b0), (c1, _, _) = sorted(uses)
            internal.append((c0, c1, a0, b0))
        elif len(uses) == 1:
            c0, a0, b0 = uses[0]
            name = patch_of_edge(a0, b0)
            boundary.setdefault(name, []).append((c0, a0, b0))
        else:
            raise MeshError(f"edge {key} shared by {len(uses)} cells")
    internal.sort()
    faces = [(a, b) for _, _, a, b in internal]
    owner = [c0 for c0, _, _, _ in internal]
    neighbour = [c1 for _, c1, _, _ in internal]
    patches = {}
    for name in sorted(boundary, key=_patch_order):
        rows = sorted(boundary[name])
        patches[name] = (len(faces), len(rows))
        faces += [(a, b) for _, a, b in rows]
        owner += [c for c, _, _ in rows]
    mesh = Mesh2D(np.asarray(points, float), np.asarray(faces), np.asarray(owner),
                  np.asarray(neighbour), patches, len(cell_loops))
    mesh.validate()
    return mesh


_PATCH_ORDER = ("inlet", "outlet", "farfield", "cylinder")


def _patch_order(name):
    return (_PATCH_ORDER.index(name) if name in _PATCH_ORDER else len(_PATCH_ORDER), name)


def cartesian_mesh(nx: int, ny: int, lx: float = 1.0, ly: float = 1.0,
                   x0: float = 0.0, y0: float = 0.0, xs=None, ys=None,
                   patch_names=("left", "right", "bottom", "top")) -> Mesh2D:
    """Structured quad mesh.  ``xs``/``ys`` override the uniform node lines."""
    xs = np.linspace(x0, x0 + lx, nx + 1) if xs is None else np.asarray(xs, float)
    ys = np.linspace(y0, y0 + ly, ny + 1) if ys is None else np.asarray(ys, float)
    nx, ny = len(xs) - 1, len(ys) - 1
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    points = np.column_stack([X.ravel(), Y.ravel()])
    pid = lambda i, j: i * (ny + 1) + j
    loops = [(pid(i, j), pid(i + 1, j), pid(i + 1, j + 1), pid(i, j + 1))
             for j in range(ny) for i in range(nx)]
    left, right, bottom, top = patch_names
    xmin, xmax, ymin = xs[0], xs[-1], ys[0]

    def which(a, b):
        pa, pb = points[a], points[b]
        if pa[0] == pb[0] == xmin:
            return left
        if pa[0] == pb[0] == xmax:
            return right
        if pa[1] == pb[1] == ymin:
            return bottom
        return top

    return _assemble(points, loops, which)


@dataclass
class OGridSpec:
    """Structured O-grid around a circle centred at the origin, inside the
    box ``[x_min, x_max] x [-half_height, half_height]``."""

    diameter: float = 1.0
    x_min: float = -8.0
    x_max: float = 20.0
    half_height: float = 8.0
    n_theta: int = 80
    n_radial: int = 40
    blend_start: float = 0.65
    refinement: int = 1

    def check(self):
        if not self.diameter > 0:
            raise ValueError("cylinder diameter must be positive")
        r = 0.5 * self.diameter
        if not (self.x_min < -2 * r and self.x_max > 2 * r and self.half_height > 2 * r):
            raise ValueError("farfield box must enclose the cylinder with margin")
        if self.n_theta < 8 or self.n_radial < 2 or self.refinement < 1:
            raise ValueError("grid too coarse")


def _split_counts(weights, total, minimum=2):
    raw = np.asarray(weights, float) / np.sum(weights) * total
    counts = np.maximum(np.floor(raw).astype(int), minimum)
    while counts.sum() < total:
        counts[np.argmax(raw - counts)] += 1
    while counts.sum() > total:
        counts[np.argmax(counts - raw)] -= 1
    return counts


def ogrid_mesh(spec: OGridSpec | None = None, **kw) -> Mesh2D:
    """Log-polar rings around the cylinder, blended onto the farfield box.

    Rays keep their angle; the radius follows
    ``log r = log r0 + eta*log(L_ref/r0) + beta(eta)*log(L(theta)/L_ref)``
    with ``beta`` a smoothstep that is zero inside ``blend_start`` so the
    near-body rings stay circular and orthogonal.
    """
    spec = spec or OGridSpec(**kw)
    spec.check()
    nt = spec.n_theta * spec.refinement
    nr = spec.n_radial * spec.refinement
    r0 = 0.5 * spec.diameter
    xa, xb, h = spec.x_min, spec.x_max, spec.half_height
    corners = np.array([np.arctan2(h, xb), np.arctan2(h, xa),
                        np.arctan2(-h, xa) + 2 * np.pi, np.arctan2(-h, xb) + 2 * np.pi])
    arcs = np.diff(np.r_[corners, corners[0] + 2 * np.pi])
    counts = _split_counts(arcs, nt)
    theta = np.concatenate([c0 + a * np.arange(n) / n
                            for c0, a, n in zip(corners, arcs, counts)])

    c, s = np.cos(theta), np.sin(theta)
    with np.errstate(divide="ignore"):
        tx = np.where(c > 0, xb / np.where(c > 0, c, 1), np.where(c < 0, xa / np.where(c < 0, c, 1), np.inf))
        ty = np.where(s != 0, h / np.abs(np.where(s != 0, s, 1)), np.inf)
    L = np.minimum(tx, ty)
    L_ref = min(h, -xa, xb)
    eta = np.arange(nr + 1) / nr
    t = np.clip((eta - spec.blend_start) / (1 - spec.blend_start), 0, 1)
    beta = t * t * (3 - 2 * t)
    logr = (np.log(r0) + eta[None, :] * np.log(L_ref / r0)
            + beta[None, :] * np.log(L / L_ref)[:, None])
    R = np.exp(logr)
    R[:, 0] = r0
    X = R * c[:, None]
    Y = R * s[:, None]
    # snap outer ring exactly onto the box
    X[:, -1] = np.clip(X[:, -1], xa, xb)
    Y[:, -1] = np.clip(Y[:, -1], -h, h)
    for k, (cx, cy) in enumerate([(xb, h), (xa, h), (xa, -h), (xb, -h)]):
        i = int(np.sum(counts[:k]))
        X[i, -1], Y[i, -1] = cx, cy
    points = np.column_stack([X.ravel(), Y.ravel()])
    pid = lambda i, j: (i % nt) * (nr + 1) + j
    # counter-clockwise: outward along ray i, back along ray i+1
    loops = [(pid(i, j), pid(i, j + 1), pid(i + 1, j + 1), pid(i + 1, j))
             for j in range(nr) for i in range(nt)]

    def which(a, b):
        ja, jb = a % (nr + 1), b % (nr + 1)
        if ja == 0 and jb == 0:
            return "cylinder"
        pa, pb = points[a], points[b]
        tol = 1e-9 * max(abs(xa), abs(xb), h)
        if abs(pa[0] - xa) < tol and abs(pb[0] - xa) < tol:
            return "inlet"
        if abs(pa[0] - xb) < tol and abs(pb[0] - xb) < tol:
            return "outlet"
        return "farfield"

    return _assemble(points, loops, which)


# --------------------------------------------------------------------------
# text format


def write_mesh(mesh: Mesh2D, path) -> None:
    ni = mesh.n_internal
    face_patch = np.empty(mesh.n_faces - ni, dtype=object)
    for name, (start, size) in mesh.patches.items():
        face_patch[start - ni:start - ni + size] = name
    lines = [MESH_FORMAT_TAG, f"points {mesh.n_points}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.points]
    lines.append(f"faces {mesh.n_faces} internal {ni} cells {mesh.n_cells}")
    for f, (a, b) in enumerate(mesh.faces):
        other = mesh.neighbour[f] if f < ni else face_patch[f - ni]
        lines.append(f"{a} {b} {mesh.owner[f]} {other}")
    lines.append(f"patches {len(mesh.patches)}")
    lines += [f"{n} {s} {z}" for n, (s, z) in mesh.patches.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh2D:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != MESH_FORMAT_TAG:
        raise MeshError(f"{path}: expected first line {MESH_FORMAT_TAG!r}")
    it = iter(lines[1:])
    head = next(it).split()
    npts = int(head[1])
    points = np.array([[float(v) for v in next(it).split()] for _ in range(npts)])
    head = next(it).split()
    nf, ni, nc = int(head[1]), int(head[3]), int(head[5])
    faces, owner, neighbour = [], [], []
    for f in range(nf):
        a, b, o, other = next(it).split()
        faces.append((int(a), int(b)))
        owner.append(int(o))
        if f < ni:
            neighbour.append(int(other))
    npatch = int(next(it).split()[1])
    patches = {}
    for _ in range(npatch):
        name, s, z = next(it).split()
        patches[name] = (int(s), int(z))
    mesh = Mesh2D(points, np.array(faces), np.array(owner), np.array(neighbour, dtype=np.int64),
                  patches, nc)
    mesh.validate()
    return mesh
