import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vivrom.fvops import BC, Field
from vivrom.mesh import cartesian_mesh, compute_geometry
from vivrom.structure import (Oscillator, force_coefficients, integrate_forces,
                              natural_quantities, symplectic_step)

from oracles import K_TABLE, M_TABLE, damped_envelope_error, undamped_energy_drift


def test_table_constants():
    omega, f, ustar = natural_quantities(M_TABLE, K_TABLE)
    assert abs(f - 0.185) <= 1e-6
    assert abs(ustar - 5.405) <= 1e-3
    assert Oscillator(M_TABLE, K_TABLE, 0.4).omega_n == pytest.approx(omega)


@pytest.mark.parametrize("bad", [dict(m=0.0, k=1.0, zeta=0.0), dict(m=1.0, k=-1.0, zeta=0.0),
                                 dict(m=1.0, k=1.0, zeta=-0.1)])
def test_invalid_oscillator(bad):
    with pytest.raises(ValueError):
        Oscillator(**bad)


def test_undamped_energy_bounded():
    assert undamped_energy_drift() <= 1e-4


def test_damped_envelope():
    assert damped_envelope_error() <= 0.01


@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(1e-4, 1e-2))
def test_static_force_equilibrium_is_fixed_point(F, y0, v0, dt):
    osc = Oscillator(M_TABLE, K_TABLE, 0.3, y=F / K_TABLE, ydot=0.0)
    nxt = symplectic_step(osc, F, dt)
    assert nxt.y == pytest.approx(osc.y, abs=1e-15)
    assert nxt.ydot == pytest.approx(0.0, abs=1e-15)


def test_added_mass_correction_vanishes_at_steady_acceleration():
    osc = Oscillator(M_TABLE, K_TABLE, 0.2, y=0.1, ydot=0.2)
    F = 0.05
    a = osc.acceleration(F)
    plain = symplectic_step(osc, F, 1e-3)
    lumped = symplectic_step(osc, F, 1e-3, added_mass=0.5, accel_prev=a)
    assert lumped.y == pytest.approx(plain.y, rel=1e-12)
    assert lumped.ydot == pytest.approx(plain.ydot, rel=1e-6)


def test_nonpositive_dt():
    with pytest.raises(ValueError):
        symplectic_step(Oscillator(1.0, 1.0, 0.0), 0.0, 0.0)


def test_hydrostatic_pressure_force_on_cylinder(small_ogrid):
    g = compute_geometry(small_ogrid)
    m = small_ogrid
    p_face = -g.Cf[:, 1]
    pbcs = {k: BC("fixedValue", p_face[m.patch_slice(k)]) for k in m.patches}
    p = Field(-g.C[:, 1], pbcs)
    u = Field(np.zeros((m.n_cells, 2)), {k: BC("fixedValue", (0.0, 0.0)) for k in m.patches})
    res = integrate_forces(u, p, m, g)
    cyl = m.patch_faces("cylinder")
    polygon = -np.sum(g.Sf[cyl, 0] * g.Cf[cyl, 0])
    assert res.Fy == pytest.approx(polygon, rel=1e-12)
    assert res.Fy == pytest.approx(math.pi / 4, rel=0.02)
    assert abs(res.Fx) < 1e-12
    assert res.CL == pytest.approx(2 * res.Fy)


def test_couette_wall_shear():
    m = cartesian_mesh(6, 4, 3.0, 1.0, patch_names=("inlet", "outlet", "cylinder", "top"))
    g = compute_geometry(m)
    nu = 0.01
    u = Field(np.column_stack([g.C[:, 1], np.zeros(m.n_cells)]),
              {"inlet": BC("zeroGradient"), "outlet": BC("zeroGradient"),
               "cylinder": BC("fixedValue", (0.0, 0.0)), "top": BC("fixedValue", (1.0, 0.0))})
    p = Field(np.zeros(m.n_cells), {k: BC("zeroGradient") for k in m.patches})
    res = integrate_forces(u, p, m, g, patch="cylinder", nu=nu)
    # fluid drags the lower wall downstream with tau = rho nu du/dy
    assert res.Fx == pytest.approx(nu * 3.0, rel=1e-12)
    assert res.Fy == pytest.approx(0.0, abs=1e-14)


def test_missing_patch():
    m = cartesian_mesh(2, 2)
    g = compute_geometry(m)
    f = Field(np.zeros(m.n_cells), {k: BC("zeroGradient") for k in m.patches})
    with pytest.raises(ValueError):
        integrate_forces(f, f, m, g)


def test_force_coefficients():
    assert force_coefficients(1.0, 2.0, rho=2.0, U=1.0, D=0.5) == (4.0, 2.0)


def test_natural_quantities_by_construction():
    assert natural_quantities(2.0, 2.0)[0] == pytest.approx(1.0, abs=1e-15)
    assert natural_quantities(1.0, 4 * math.pi**2)[1] == pytest.approx(1.0, abs=1e-15)


def test_numerical_period_matches_analytic():
    osc = Oscillator(1.0, 4.0, 0.0, y=1.0)
    period = 2 * math.pi / osc.omega_n
    dt = period / 500
    ys = [osc.y]
    for _ in range(5000):
        osc = symplectic_step(osc, 0.0, dt)
        ys.append(osc.y)
    ys = np.array(ys)
    # downward zero crossings, linearly interpolated
    k = np.flatnonzero((ys[:-1] > 0) & (ys[1:] <= 0))
    tc = (k + ys[k] / (ys[k] - ys[k + 1])) * dt
    assert np.mean(np.diff(tc)) == pytest.approx(period, rel=1e-3)


def _static_fields(mesh, p):
    zero = {k: BC("fixedValue", np.zeros(2)) for k in mesh.patches}
    return (Field(np.zeros((mesh.n_cells, 2)), zero),
            Field(p, {k: BC("zeroGradient") for k in mesh.patches}))


def test_uniform_pressure_gives_no_force(small_ogrid):
    g = compute_geometry(small_ogrid)
    u, p = _static_fields(small_ogrid, np.full(small_ogrid.n_cells, 3.7))
    f = integrate_forces(u, p, small_ogrid, g)
    assert abs(f.Fx) <= 1e-12 and abs(f.Fy) <= 1e-12


def test_symmetric_pressure_gives_no_lift(small_ogrid):
    g = compute_geometry(small_ogrid)
    u, p = _static_fields(small_ogrid, np.cos(g.C[:, 0]) + g.C[:, 1] ** 2)
    assert abs(integrate_forces(u, p, small_ogrid, g).CL) <= 1e-12
