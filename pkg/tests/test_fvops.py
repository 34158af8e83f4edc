import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.sparse.linalg import spsolve

from vivrom.fvops import (BC, AHSplit, Field, LduMatrix, _pin, ah_split, assemble_momentum,
                          assemble_pressure, boundary_values, convection, courant,
                          diffusion_system, face_flux, grad_gauss, interpolate, van_leer)
from vivrom.mesh import cartesian_mesh, cell_sum, compute_geometry

from oracles import all_fixed, observed_orders, sheared


def _random_ldu(mesh, rng):
    M = LduMatrix.zeros(mesh)
    M.upper = rng.uniform(-1, 0, mesh.n_internal)
    M.lower = rng.uniform(-1, 0, mesh.n_internal)
    M.diag = 4.0 + rng.uniform(0, 1, mesh.n_cells)
    M.source = rng.normal(size=mesh.n_cells)
    return M


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.2, 1.0), min_size=5, max_size=5),
       st.lists(st.floats(0.2, 1.0), min_size=4, max_size=4),
       st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_gauss_gradient_exact_on_linear_fields(dx, dy, a, b, c):
    xs = np.concatenate([[0.0], np.cumsum(dx)])
    ys = np.concatenate([[0.0], np.cumsum(dy)])
    m = cartesian_mesh(0, 0, xs=xs, ys=ys)
    g = compute_geometry(m)
    f = lambda x: a + b * x[:, 0] + c * x[:, 1]
    bcs = all_fixed(m, g, f)
    grad = grad_gauss(f(g.C), boundary_values(f(g.C), bcs, m, g), m, g)
    assert np.allclose(grad, [b, c], atol=1e-11)


def test_gauss_gradient_exact_on_sheared_mesh():
    m = sheared(6)
    g = compute_geometry(m)
    f = lambda x: 0.5 - 2.0 * x[:, 0] + 3.0 * x[:, 1]
    grad = grad_gauss(f(g.C), boundary_values(f(g.C), all_fixed(m, g, f), m, g), m, g)
    assert np.allclose(grad, [-2.0, 3.0], atol=1e-12)


def test_vector_gradient_layout():
    m = cartesian_mesh(4, 4)
    g = compute_geometry(m)
    u = np.column_stack([2.0 * g.C[:, 1], -g.C[:, 0]])
    bcs = {k: BC("fixedValue", np.column_stack([2.0 * g.Cf[m.patch_slice(k), 1],
                                                 -g.Cf[m.patch_slice(k), 0]]))
           for k in m.patches}
    grad = grad_gauss(u, boundary_values(u, bcs, m, g), m, g)
    # g[c, i, j] = d u_j / d x_i
    assert np.allclose(grad[:, 1, 0], 2.0) and np.allclose(grad[:, 0, 1], -1.0)
    assert np.allclose(grad[:, 0, 0], 0.0) and np.allclose(grad[:, 1, 1], 0.0)


def test_nonorthogonal_split_invariants():
    g = compute_geometry(sheared(5))
    assert np.allclose(g.ortho + g.corr, g.Sf, atol=1e-15)
    assert np.allclose(np.einsum("ij,ij->i", g.corr, g.Sf), 0.0, atol=1e-14)
    cross = g.ortho[:, 0] * g.delta[:, 1] - g.ortho[:, 1] * g.delta[:, 0]
    assert np.allclose(cross, 0.0, atol=1e-14)


@pytest.mark.parametrize("shear", [0.0, 0.3])
def test_diffusion_second_order(shear):
    orders = observed_orders(shear)
    assert np.all(orders >= 1.8), orders


def test_diffusion_zero_gradient_patch_keeps_linear_profile():
    m = cartesian_mesh(10, 3, patch_names=("left", "right", "bottom", "top"))
    g = compute_geometry(m)
    bcs = {"left": BC("fixedValue", 1.0), "right": BC("fixedValue", 3.0),
           "bottom": BC("zeroGradient"), "top": BC("zeroGradient")}
    M = diffusion_system(0.7, Field(np.zeros(m.n_cells), bcs), m, g)
    x = spsolve(M.to_csr(), M.source)
    assert np.allclose(x, 1.0 + 2.0 * g.C[:, 0], atol=1e-12)


def test_ldu_matches_csr(channel, rng):
    M = _random_ldu(channel, rng)
    x = rng.normal(size=channel.n_cells)
    assert np.allclose(M.amul(x), M.to_csr() @ x, atol=1e-13)
    assert np.allclose(M.residual(x), M.source - M.to_csr() @ x, atol=1e-13)


def test_relaxation_keeps_the_solution(channel, rng):
    M = _random_ldu(channel, rng)
    x = spsolve(M.to_csr(), M.source)
    R = M.copy()
    R.relax(0.6, x)
    assert np.abs(R.residual(x)).max() < 1e-12
    assert np.all(R.diag > M.diag)


def test_ah_split_identity(channel, rng):
    g = compute_geometry(channel)
    Mx, My = _random_ldu(channel, rng), _random_ldu(channel, rng)
    u = rng.normal(size=(channel.n_cells, 2))
    ah = ah_split(Mx, My, u, g.V)
    for k, M in enumerate((Mx, My)):
        lhs = ah.A * u[:, k] - ah.H[:, k]
        assert np.allclose(lhs, (M.amul(u[:, k]) - M.source) / g.V, atol=1e-12)
    assert np.allclose(ah.HbyA, ah.H * ah.rAU[:, None])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_convection_is_conservative(seed):
    m = cartesian_mesh(4, 3)
    rng = np.random.default_rng(seed)
    F = rng.normal(size=m.n_faces)
    C = convection(F, m)
    x = rng.normal(size=m.n_cells)
    # every face term leaves one cell and enters its neighbour
    assert abs(np.sum(C.amul(x))) < 1e-12
    assert np.allclose(C.amul(np.ones(m.n_cells)),
                       cell_sum(m, np.concatenate([F[:m.n_internal],
                                                   np.zeros(m.n_faces - m.n_internal)])))
    assert np.all(C.upper <= 0) and np.all(C.lower <= 0)


@given(st.floats(-50, 50))
def test_van_leer_is_tvd_and_symmetric(r):
    psi = van_leer(np.array([r]))[0]
    assert 0.0 <= psi <= 2.0
    if r > 0:
        assert psi <= 2 * r + 1e-12
    if 1e-3 < r:
        assert np.isclose(van_leer(np.array([1.0 / r]))[0], psi / r)
    if r <= 0:
        assert psi == 0.0
    assert van_leer(np.array([1.0]))[0] == 1.0


def test_courant_of_uniform_flow():
    m = cartesian_mesh(10, 10)
    g = compute_geometry(m)
    phi = g.Sf @ np.array([1.0, 0.0])
    assert np.allclose(courant(phi, m, g, 0.05), 0.05 / 0.1)


def test_constant_field_has_zero_gradient(small_ogrid):
    g = compute_geometry(small_ogrid)
    vals = np.full(small_ogrid.n_cells, 2.0)
    grad = grad_gauss(vals, np.full(small_ogrid.n_faces - small_ogrid.n_internal, 2.0),
                      small_ogrid, g)
    assert np.abs(grad).max() <= 1e-12


def test_quadratic_gradient_matches_face_sums():
    n, h = 8, 1.0 / 8
    m = cartesian_mesh(n, n)
    g = compute_geometry(m)
    x = g.C[:, 0]
    grad = grad_gauss(x**2, g.Cf[m.n_internal:, 0] ** 2, m, g)
    # interior x-faces average two cell values; boundary faces are exact
    left = np.where(np.isclose(x, h / 2), (x - h / 2) ** 2, (x**2 + (x - h) ** 2) / 2)
    right = np.where(np.isclose(x, 1 - h / 2), (x + h / 2) ** 2, (x**2 + (x + h) ** 2) / 2)
    assert np.allclose(grad[:, 0], (right - left) / h, atol=1e-12)
    assert np.abs(grad[:, 1]).max() <= 1e-12


def test_graded_interpolation_weights():
    m = cartesian_mesh(2, 1, xs=[0.0, 1.0, 3.0])
    g = compute_geometry(m)
    assert g.weights[0] == pytest.approx(2 / 3, abs=1e-15)
    fx = interpolate(g.C[:, 0], g.Cf[m.n_internal:, 0], m, g)
    assert fx[0] == pytest.approx(1.0, abs=1e-15)
    even = compute_geometry(cartesian_mesh(2, 1))
    assert even.weights[0] == pytest.approx(0.5, abs=1e-15)


def test_convection_of_uniform_flow_telescopes():
    m = cartesian_mesh(6, 6)
    g = compute_geometry(m)
    assert not np.any(convection(np.zeros(m.n_faces), m).to_csr().toarray())
    A = convection(g.Sf @ np.array([1.0, 0.0]), m).to_csr()
    interior = np.setdiff1d(np.arange(m.n_cells), m.owner[m.n_internal:])
    assert np.abs(np.asarray(A.sum(axis=1)).ravel()[interior]).max() <= 1e-14


def test_mesh_moving_with_the_flow_cancels_convection(rng):
    m = sheared(5)
    g = compute_geometry(m)
    bcs = {k: BC("zeroGradient") for k in m.patches}
    u = Field(rng.normal(size=(m.n_cells, 2)), bcs)
    flux = rng.normal(size=m.n_faces)
    moving = assemble_momentum(u, flux, m, g, 0.01, 0.1, u.values, g.V, mesh_flux=flux)
    still = assemble_momentum(u, np.zeros(m.n_faces), m, g, 0.01, 0.1, u.values, g.V)
    for a, b in zip(moving.components, still.components):
        for attr in ("diag", "upper", "lower", "source"):
            assert np.array_equal(getattr(a, attr), getattr(b, attr))


@pytest.mark.parametrize("shear", [0.0, 0.3])
def test_laplacian_of_linear_field_vanishes(shear):
    m = sheared(6, shear)
    g = compute_geometry(m)
    lin = lambda x: 1.0 + 2.0 * x[:, 0] - 0.5 * x[:, 1]
    phi = Field(lin(g.C), all_fixed(m, g, lin))
    M = diffusion_system(1.0, phi, m, g)
    assert np.abs(M.residual(phi.values)).max() <= 1e-12


def test_cartesian_correction_vector_is_zero():
    assert np.abs(compute_geometry(cartesian_mesh(5, 4, 2.0, 1.0)).corr).max() <= 1e-15


def test_laplacian_of_paraboloid():
    m = cartesian_mesh(16, 16)
    g = compute_geometry(m)
    f = lambda x: x[:, 0] ** 2 + x[:, 1] ** 2
    phi = Field(f(g.C), all_fixed(m, g, f))
    M = diffusion_system(1.0, phi, m, g)
    lap = -(M.amul(phi.values) - M.source) / g.V
    interior = np.setdiff1d(np.arange(m.n_cells), m.owner[m.n_internal:])
    assert np.allclose(lap[interior], 4.0, rtol=0.05)


def test_poiseuille_channel():
    m = cartesian_mesh(20, 10, 2.0, 1.0, patch_names=("inlet", "outlet", "bottom", "top"))
    g = compute_geometry(m)
    nu, G = 0.1, 0.8
    bcs = {"inlet": BC("zeroGradient"), "outlet": BC("zeroGradient"),
           "bottom": BC("fixedValue", (0.0, 0.0)), "top": BC("fixedValue", (0.0, 0.0))}
    u = Field(np.zeros((m.n_cells, 2)), bcs)
    for _ in range(5):
        ub = boundary_values(u.values, bcs, m, g)
        phi = face_flux(u.values, ub, m, g)
        ms = assemble_momentum(u, phi, m, g, nu, 1e8, u.values, g.V)
        ms.x.source = ms.x.source + G * g.V
        u.values = np.column_stack([spsolve(M.to_csr(), M.source) for M in ms.components])
    y = g.C[:, 1]
    exact = G / (2 * nu) * y * (1 - y)
    assert np.abs(u.values[:, 0] - exact).max() <= 0.02 * exact.max()
    assert np.abs(u.values[:, 1]).max() <= 1e-10


def test_source_sink_pair_matches_dense_solve():
    m = cartesian_mesh(16, 16)
    g = compute_geometry(m)
    src = np.zeros(m.n_cells)
    src[[40, 200]] = [1.0, -1.0]
    M = diffusion_system(1.0, Field(np.zeros(m.n_cells), {k: BC("zeroGradient")
                                                          for k in m.patches}), m, g)
    M.source = src
    rows = np.asarray(M.to_csr().sum(axis=1)).ravel()
    assert np.abs(rows).max() <= 1e-12
    _pin(M, 0)
    dense = np.linalg.solve(M.to_csr().toarray(), M.source)
    sparse = spsolve(M.to_csr().tocsc(), M.source)
    assert np.abs(sparse - dense).max() <= 1e-8 * np.abs(dense).max()


def test_divergence_free_flux_gives_constant_pressure(channel):
    g = compute_geometry(channel)
    nc = channel.n_cells
    ah = AHSplit(np.full(nc, 2.0), np.column_stack([np.full(nc, 2.0), np.zeros(nc)]), g.V)
    u_bcs = {"inlet": BC("fixedValue", (1.0, 0.0)), "outlet": BC("zeroGradient"),
             "bottom": BC("symmetry"), "top": BC("symmetry")}
    p_bcs = {k: BC("zeroGradient") for k in channel.patches}
    phi_b = (g.Sf @ np.array([1.0, 0.0]))[channel.n_internal:]
    ps = assemble_pressure(ah, phi_b, u_bcs, Field(np.zeros(nc), p_bcs), channel, g)
    assert ps.reference_cell == 0
    p = spsolve(ps.matrix.to_csr().tocsc(), ps.matrix.source)
    assert np.abs(p).max() <= 1e-12
