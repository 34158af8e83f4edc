import logging

import numpy as np
import pytest
import scipy.sparse as sp

from vivrom import pod
from vivrom.linsolve import SolverControls
from vivrom.mesh import compute_geometry
from vivrom.meshmotion import MeshDeformer
from vivrom.pimple import FlowCase, PimpleControls, run
from vivrom.rom import (RomBases, lifted_reconstruct, project_system, reduced_initial_state,
                        run_rom, train_displacement_surrogate)

DIRECT = SolverControls(method="direct")


def test_project_system_with_identity_basis(rng):
    n = 8
    A = sp.random(n, n, density=0.5, random_state=1) + 5 * sp.eye(n)
    b = rng.normal(size=n)
    L = rng.normal(size=n)
    Ar, br = project_system(A, b, np.eye(n), L)
    x = np.linalg.solve(Ar, br) + L
    assert np.allclose(A @ x, b)


def test_project_system_restricts_to_subspace(rng):
    A = np.diag([1.0, 2.0, 3.0])
    Phi = np.eye(3)[:, :2]
    Ar, br = project_system(A, np.ones(3), Phi)
    assert np.array_equal(Ar, np.diag([1.0, 2.0]))
    assert np.array_equal(br, [1.0, 1.0])


@pytest.fixture(scope="module")
def deformer(small_ogrid):
    return MeshDeformer(small_ogrid)


def test_surrogate_exact_on_linear_motion(deformer):
    thetas = np.linspace(-0.2, 0.3, 21)
    sur = train_displacement_surrogate([deformer.displacement(t) for t in thetas], thetas)
    for t in (-0.2, -0.05, 0.123, 0.3):
        assert np.abs(sur.displacement(t) - deformer.displacement(t)).max() < 1e-9
    assert sur.n_modes == 1


def test_surrogate_thins_clustered_offsets(deformer):
    # offsets bunch at the turning points of a sinusoid
    thetas = 0.2 * np.sin(np.linspace(0, 6 * np.pi, 400))
    sur = train_displacement_surrogate([deformer.displacement(t) for t in thetas], thetas)
    assert len(sur.model.centers) < 400
    assert np.abs(sur.displacement(0.15) - deformer.displacement(0.15)).max() < 1e-9


def test_surrogate_clamps_with_warning(deformer, caplog):
    thetas = np.linspace(0.0, 0.1, 5)
    sur = train_displacement_surrogate([deformer.displacement(t) for t in thetas], thetas)
    with caplog.at_level(logging.WARNING):
        d = sur.displacement(0.5)
    assert "outside the training range" in caplog.text
    assert np.allclose(d, sur.displacement(0.1))
    assert sur.clamp_warnings == 1


def test_surrogate_rejects_degenerate_training(deformer):
    with pytest.raises(ValueError):
        train_displacement_surrogate([deformer.displacement(0.1)] * 3, [0.1, 0.1, 0.1])
    with pytest.raises(ValueError):
        train_displacement_surrogate([deformer.displacement(0.1)] * 2, [0.1])


def test_bases_need_modes(small_ogrid):
    n = small_ogrid.n_cells
    empty = pod.PodBasis(np.zeros((2 * n, 0)), np.zeros(1), np.ones(2 * n))
    ok = pod.PodBasis(np.ones((n, 1)) / np.sqrt(n), np.ones(1), np.ones(n))
    with pytest.raises(ValueError):
        RomBases(empty, ok)


def test_fixed_cylinder_replay(small_ogrid):
    case = FlowCase(small_ogrid, perturbation=0.5)
    ctl = PimpleControls(dt=0.05, momentum_solver=DIRECT)
    fom = run(case, ctl, n_steps=10, record_iterates=True)
    V = compute_geometry(small_ogrid).V
    s0 = fom.snapshots[0]
    L = pod.uniform_lifting(small_ogrid.n_cells, 1.0)
    U = np.column_stack([pod.stack_vector(s0.u)] + [pod.stack_vector(u) for u in fom.iterates["u"]])
    P = np.column_stack([s0.p] + fom.iterates["p"])
    bu = pod.span_basis(pod.apply_lifting(U, L), np.tile(V, 2))
    bu.lifting = L
    bases = RomBases(bu, pod.span_basis(P, V))
    state, solvers = reduced_initial_state(case, ctl, bases, s0.u, s0.p, s0.phi)
    red = run_rom(case, ctl, bases, state, solvers, n_steps=10)
    hf, hr = fom.history.arrays(), red.run.history.arrays()
    for key in ("CL", "CD"):
        assert np.abs(hr[key] - hf[key]).max() <= 1e-9 * np.abs(hf[key]).max()
    assert len(red.times) == 11
    assert red.coeffs[-1].shape == (bu.n_modes + bases.p.n_modes,)


def test_moving_case_needs_surrogate(small_ogrid):
    from vivrom.structure import Oscillator
    case = FlowCase(small_ogrid, oscillator=Oscillator(0.1, 0.135114884, 0.4))
    ctl = PimpleControls(dt=0.05)
    n = small_ogrid.n_cells
    bu = pod.PodBasis(np.eye(2 * n)[:, :1], np.ones(1), np.ones(2 * n),
                      pod.uniform_lifting(n, 1.0))
    bp = pod.PodBasis(np.eye(n)[:, :1], np.ones(1), np.ones(n))
    with pytest.raises(ValueError, match="surrogate"):
        reduced_initial_state(case, ctl, RomBases(bu, bp), np.zeros((n, 2)), np.zeros(n),
                              np.zeros(small_ogrid.n_faces))


def test_project_system_rank_one_diagonal(rng):
    d = rng.uniform(1, 2, 12)
    phi = rng.normal(size=(12, 1))
    Ar, _ = project_system(sp.diags(d), np.zeros(12), phi)
    assert Ar[0, 0] == pytest.approx(np.sum(d * phi[:, 0] ** 2), rel=1e-14)


def test_project_system_matches_dense_triple_product(rng):
    A = sp.random(50, 50, density=0.1, random_state=3, format="csr") + 4 * sp.eye(50)
    Phi = np.linalg.qr(rng.normal(size=(50, 5)))[0]
    b = rng.normal(size=50)
    Ar, br = project_system(A, b, Phi)
    dense = A.toarray()
    assert np.abs(Ar - Phi.T @ dense @ Phi).max() <= 1e-12
    assert np.abs(br - Phi.T @ b).max() <= 1e-12


def test_lifted_reconstruction(small_ogrid, rng):
    nc = small_ogrid.n_cells
    lift = pod.uniform_lifting(nc, 1.0)
    S = rng.normal(size=(2 * nc, 4)) + lift[:, None]
    basis = pod.compute_modes(pod.apply_lifting(S, lift))
    basis.lifting = lift
    u0 = lifted_reconstruct(np.zeros(basis.n_modes), basis)
    assert np.array_equal(u0, np.column_stack([np.ones(nc), np.zeros(nc)]))
    a = pod.project(S[:, 2], basis)
    assert np.abs(lifted_reconstruct(a, basis) - pod.unstack_vector(S[:, 2])).max() <= 1e-10


def test_surrogate_reproduces_training_snapshots(deformer):
    thetas = np.array([-0.1, 0.0, 0.05, 0.2])
    snaps = [deformer.displacement(t) for t in thetas]
    sur = train_displacement_surrogate(snaps, thetas)
    for t, s in zip(thetas, snaps):
        assert np.abs(sur.displacement(t) - s).max() <= 1e-8 * np.abs(s).max() + 1e-15
