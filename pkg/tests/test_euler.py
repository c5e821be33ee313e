import math

import numpy as np
import pytest

from bllab.euler import (CFLError, EulerState, euler_pressure,
                         solve_euler_linearized, solve_euler_nonlinear)
from bllab.expansion import initial_vorticity
from bllab.grid import Grid, dx_spectral
from bllab.mms import euler_error, observed_order


@pytest.fixture(scope="module")
def eg():
    return Grid(n_x=16, n_y=128, n_z=64)


def _standard(g):
    return EulerState.from_vorticity(g, initial_vorticity("standard", g))


def test_zero_initial_data_stays_zero(eg):
    init = EulerState.from_vorticity(eg, np.zeros((eg.n_x, eg.n_y)))
    h = solve_euler_nonlinear(init, 0.05, 0.01)
    s = h.states[-1]
    assert np.max(np.abs(s.u.values)) == 0.0 and np.max(np.abs(s.omega.values)) == 0.0


def test_shear_flow_is_steady(eg):
    y = eg.y_nodes
    U = np.exp(-y ** 2) - math.exp(-eg.Y_max ** 2)
    init = EulerState.from_vorticity(eg, initial_vorticity("shear", eg), mean_u=U)
    h = solve_euler_nonlinear(init, 1.0, 0.01)
    s = h.states[-1]
    assert np.max(np.abs(s.u.values - init.u.values)) < 1e-10
    assert np.max(np.abs(s.v.values)) < 1e-10


def test_state_invariants(eg):
    s = _standard(eg)
    u, v = s.u.values, s.v.values
    assert np.max(np.abs(dx_spectral(u) + v @ eg.D1y.T)) < 1e-8
    assert np.max(np.abs(v[:, 0])) < 1e-14
    w = u @ eg.D1y.T - dx_spectral(v)
    assert np.max(np.abs(w - s.omega.values)) < 1e-6


def test_energy_conservation_and_maximum_principle():
    g = Grid(n_x=32, n_y=192, n_z=64)
    init = _standard(g)
    h = solve_euler_nonlinear(init, 0.25, 2e-3, output_times=[0.0, 0.125, 0.25])
    E = np.array([e for _, e in h.energy])
    assert np.max(np.abs(E - E[0])) / E[0] < 1e-6
    w0 = np.max(np.abs(init.omega.values))
    for s in h.states:
        assert np.max(np.abs(s.omega.values)) <= w0 * (1 + 1e-4)


def test_cfl_violation_is_rejected(eg):
    init = EulerState.from_vorticity(eg, 50 * initial_vorticity("standard", eg))
    with pytest.raises(CFLError, match="CFL"):
        solve_euler_nonlinear(init, 1.0, 0.5)


def _wall_data(g, k, c):
    x = g.x_nodes
    return lambda t: c * math.cos(3 * t) * np.sin(k * x)


def test_linearized_zero_data_gives_zero(eg):
    h = solve_euler_linearized(3, _standard(eg), 0.05, 0.01)
    s = h.linear[3][-1]
    assert np.max(np.abs(s.u.values)) == 0.0 and np.max(np.abs(s.v.values)) == 0.0


def test_linearized_solver_is_linear(eg):
    bg = _standard(eg)
    f1, f2 = _wall_data(eg, 1, 1.0), _wall_data(eg, 2, 0.3)
    a, b = 0.7, -1.3
    run = lambda vb: solve_euler_linearized(3, bg, 0.1, 0.01, v_bottom=vb).linear[3][-1]
    s1, s2 = run(f1), run(f2)
    s12 = run(lambda t: a * f1(t) + b * f2(t))
    for name in ("u", "v", "omega"):
        comb = a * getattr(s1, name).values + b * getattr(s2, name).values
        assert np.max(np.abs(getattr(s12, name).values - comb)) < 1e-10


def test_linearized_wall_data_and_divergence(eg):
    f = _wall_data(eg, 1, 1.0)
    h = solve_euler_linearized(3, _standard(eg), 0.1, 0.01, v_bottom=f)
    s = h.linear[3][-1]
    assert np.max(np.abs(s.v.values[:, 0] - f(0.1))) < 1e-12
    assert np.max(np.abs(dx_spectral(s.u.values) + s.v.values @ eg.D1y.T)) < 1e-8


def test_background_rerun_is_bit_identical(eg):
    bg = _standard(eg)
    a = solve_euler_nonlinear(bg, 0.05, 0.01).states[-1]
    b = solve_euler_linearized(3, bg, 0.05, 0.01).states[-1]
    assert np.array_equal(a.omega.values, b.omega.values)


def test_manufactured_temporal_order():
    # a fast modulation and a fine vertical grid keep the time error above the spatial floor
    g = Grid(n_x=16, n_y=256, n_z=64)
    assert observed_order(euler_error(g, 0.02), euler_error(g, 0.01)) >= 3.5


def test_pressure_of_zero_velocity(eg):
    s = EulerState.from_vorticity(eg, np.zeros((eg.n_x, eg.n_y)))
    assert np.max(np.abs(euler_pressure(s).values)) == 0.0


def _grad(g, p):
    return dx_spectral(p), p @ g.D1y.T


def test_pressure_of_shear_flow_is_constant(eg):
    U = np.exp(-eg.y_nodes ** 2) - math.exp(-eg.Y_max ** 2)
    s = EulerState.from_vorticity(eg, initial_vorticity("shear", eg), mean_u=U)
    px, py = _grad(eg, euler_pressure(s).values)
    assert max(np.max(np.abs(px)), np.max(np.abs(py))) < 1e-8


def test_pressure_of_steady_cellular_flow():
    # psi = sin x sin(k y) has omega = d_y u - d_x v = -lam psi, so p = -(lam psi^2 + |U|^2) / 2
    g = Grid(n_x=16, n_y=256, n_z=64)
    X, Y = g.mesh()
    k = math.pi / g.Y_max
    lam = 1 + k * k
    psi = np.sin(X) * np.sin(k * Y)
    u, v = k * np.sin(X) * np.cos(k * Y), -np.cos(X) * np.sin(k * Y)
    s = EulerState.from_vorticity(g, -lam * psi, mean_u=np.zeros(g.n_y))
    assert np.max(np.abs(s.u.values - u)) < 1e-8
    exact = -0.5 * (lam * psi ** 2 + u ** 2 + v ** 2)
    px, py = _grad(g, euler_pressure(s).values)
    ex, ey = _grad(g, exact)
    assert max(np.max(np.abs(px - ex)), np.max(np.abs(py - ey))) < 1e-6
