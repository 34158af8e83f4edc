import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vivrom.mesh import cartesian_mesh, compute_geometry
from vivrom.meshmotion import (MeshDeformer, MeshMotionConfig, RbfSingularError,
                               basis_function, rbf_evaluate, rbf_train, spring_relax)

from oracles import dense_equilibrium


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["tps", "gaussian", "imq"]),
       st.integers(5, 25))
def test_rbf_exact_at_centers(seed, basis, n):
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-1, 1, (n, 2))
    d = np.linalg.norm(centers[:, None] - centers[None], axis=-1)
    np.fill_diagonal(d, np.inf)
    if d.min() < 0.05:
        centers = centers + 0.1 * np.arange(n)[:, None]
    values = rng.normal(size=(n, 2))
    model = rbf_train(centers, values, basis)
    assert np.abs(rbf_evaluate(model, centers) - values).max() <= 1e-8


def test_tail_reproduces_linear_fields(rng):
    centers = rng.uniform(0, 1, (30, 2))
    f = lambda x: 1.0 + 2.0 * x[:, 0] - 0.5 * x[:, 1]
    model = rbf_train(centers, f(centers), "tps")
    probe = rng.uniform(0, 1, (50, 2))
    assert np.allclose(rbf_evaluate(model, probe)[:, 0], f(probe), atol=1e-9)


def test_coincident_centers_named():
    c = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(RbfSingularError, match="1 and 3"):
        rbf_train(c, np.zeros(4))


def test_unknown_basis():
    with pytest.raises(ValueError):
        basis_function("cubic", np.ones(2))


def test_tps_kernel_at_zero():
    assert basis_function("tps", np.array([0.0, 1.0])).tolist() == [0.0, 0.0]


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_spring_matchesdense_equilibrium(seed):
    rng = np.random.default_rng(seed)
    m = cartesian_mesh(5, 4, xs=np.cumsum(np.r_[0, rng.uniform(0.5, 1.5, 5)]),
                       ys=np.cumsum(np.r_[0, rng.uniform(0.5, 1.5, 4)]))
    fixed = m.boundary_points()
    disp = rng.normal(size=(len(fixed), 2))
    res = spring_relax(m.points, m.edges(), fixed, disp, tolerance=1e-14)
    ref = dense_equilibrium(m.points, m.edges(), fixed, disp)
    assert res.converged
    assert np.abs(res.displacement - ref).max() <= 1e-8


def test_spring_reports_nonconvergence():
    m = cartesian_mesh(6, 6)
    fixed = m.boundary_points()
    res = spring_relax(m.points, m.edges(), fixed, np.ones((len(fixed), 2)), 1e-14, max_iter=2)
    assert not res.converged and res.iterations == 2


@pytest.mark.parametrize("method", ["rbf", "spring"])
def test_deformer_rigid_cylinder_and_fixed_farfield(small_ogrid, method):
    dfm = MeshDeformer(small_ogrid, MeshMotionConfig(method=method))
    d = dfm.displacement(0.1)
    cyl = small_ogrid.patch_points("cylinder")
    assert np.allclose(d[cyl], [0.0, 0.1])
    assert np.all(d[dfm.static] == 0.0)
    assert np.all(d[:, 0] == 0.0)
    # linear in the prescribed offset
    assert np.allclose(dfm.displacement(-0.25), -2.5 * d)
    g = compute_geometry(small_ogrid, dfm.deform(0.1))
    assert np.all(g.V > 0)


def test_deformer_rejects_folding(small_ogrid):
    dfm = MeshDeformer(small_ogrid)
    with pytest.raises(ValueError, match="reduce the time step"):
        dfm.deform(5.0)


def test_deformer_requires_patch():
    with pytest.raises(ValueError):
        MeshDeformer(cartesian_mesh(3, 3))


def test_config_validation():
    with pytest.raises(ValueError):
        MeshMotionConfig(method="laplace")
    with pytest.raises(ValueError):
        MeshMotionConfig(coarsen=0)


def test_constant_values_go_to_the_tail(rng):
    centers = rng.uniform(-1, 1, (8, 2))
    model = rbf_train(centers, np.full(8, 2.5), "tps")
    assert np.abs(model.gamma).max() <= 1e-10
    assert np.allclose(model.beta[:, 0], [2.5, 0.0, 0.0], atol=1e-10)


def test_linear_values_go_to_the_tail(rng):
    centers = rng.uniform(-1, 1, (8, 2))
    model = rbf_train(centers, centers[:, 0], "tps")
    assert np.abs(model.gamma).max() <= 1e-10
    assert np.allclose(model.beta[:, 0], [0.0, 1.0, 0.0], atol=1e-10)


def test_gaussian_decays_to_tail_far_away(rng):
    centers = rng.uniform(-1, 1, (6, 2))
    model = rbf_train(centers, rng.normal(size=6), "gaussian", eps=0.5)
    far = np.array([[50.0, -40.0]])
    tail = model.beta[0, 0] + far @ model.beta[1:, 0]
    assert rbf_evaluate(model, far)[0, 0] == pytest.approx(tail[0], abs=1e-12)


def test_imq_midpoint_within_envelope():
    model = rbf_train([[0.0, 0.0], [1.0, 0.0]], [0.7, 0.7], "imq", tail=False)
    mid = rbf_evaluate(model, [[0.5, 0.0]])[0, 0]
    # two equal weights: 0.7 phi(0.5) / (phi(0) + phi(1)) * 2
    phi = basis_function("imq", np.array([0.0, 0.5, 1.0]), model.eps)
    assert mid == pytest.approx(0.7 * 2 * phi[1] / (phi[0] + phi[2]), rel=1e-12)
    assert 0.0 < mid <= 0.7 * 2


def test_zero_boundary_gives_zero_interior():
    m = cartesian_mesh(4, 4)
    b = m.boundary_points()
    res = spring_relax(m.points, m.edges(), b, np.zeros((len(b), 2)))
    assert np.all(res.displacement == 0.0)


def test_three_point_chain_midpoint():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    res = spring_relax(pts, np.array([[0, 1], [1, 2]]), [0, 2], [[0.0], [1.0]])
    assert res.displacement[1, 0] == pytest.approx(0.5, abs=1e-9)


def test_spring_error_decreases_each_sweep():
    m = cartesian_mesh(4, 4)
    left = np.flatnonzero(np.isclose(m.points[:, 0], 0.0))
    b = m.boundary_points()
    disp = np.where(np.isin(b, left), 0.1, 0.0)[:, None]
    exact = dense_equilibrium(m.points, m.edges(), b, disp)
    errs = [np.abs(spring_relax(m.points, m.edges(), b, disp, 0.0, k).displacement - exact).max()
            for k in range(1, 30)]
    assert np.all(np.diff(errs) <= 1e-15)


@pytest.mark.parametrize("method", ["rbf", "spring"])
def test_deformation_is_linear_in_amplitude(small_ogrid, method):
    d = MeshDeformer(small_ogrid, MeshMotionConfig(method=method))
    assert np.abs(d.displacement(0.2) - 2 * d.displacement(0.1)).max() <= 1e-10
    assert np.array_equal(d.deform(0.0), small_ogrid.points)


def test_ogrid_survives_a_fifth_diameter(small_ogrid):
    new = MeshDeformer(small_ogrid).deform(0.2)
    assert compute_geometry(small_ogrid, new).V.min() > 0
