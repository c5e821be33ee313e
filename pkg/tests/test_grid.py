import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bllab.grid import (DomainError, Field, Grid, conormal_Z, ddx, ddy, dx_spectral, psi,
                        tilde_Z)


def test_psi_near_wall_branch():
    assert psi(0.5, 0.1) == pytest.approx(0.05, abs=1e-15)


def test_psi_far_branch():
    assert psi(4.0, 0.1) == pytest.approx(0.08, abs=1e-15)


def test_psi_vanishes_at_wall():
    assert psi(0.0, 0.3) == 0.0


@pytest.mark.parametrize("y, delta", [(-0.1, 0.1), (1.0, 0.0), (1.0, -1.0)])
def test_psi_domain_errors(y, delta):
    with pytest.raises(DomainError):
        psi(y, delta)


@given(st.floats(0.0, 20.0))
def test_psi_positive_and_bounded_by_linear(y):
    p = psi(y, 0.1)
    assert p >= 0.0
    assert p <= 0.1 * y + 1e-15
    if y > 0:
        assert p > 0


def test_psi_blend_is_smooth():
    # second differences stay small across the blend interval: no kinks
    y = np.linspace(0.5, 2.5, 4001)
    d2 = np.diff(psi(y, 0.1), 2) / (y[1] - y[0]) ** 2
    assert np.max(np.abs(d2)) < 1.0
    assert np.max(np.abs(np.diff(d2))) < 1e-2


def test_grid_invariants(grid):
    for nodes, top in ((grid.y_nodes, grid.Y_max), (grid.z_nodes, grid.Z_max)):
        assert nodes[0] == 0.0 and nodes[-1] == top
        assert np.all(np.diff(nodes) > 0)


@pytest.mark.parametrize("kw", [{"n_x": 7}, {"n_x": 6}, {"n_x": 9}, {"Y_max": 0.0}, {"delta": 0.0}])
def test_grid_rejects_bad_parameters(kw):
    with pytest.raises(DomainError):
        Grid(**kw)


def test_field_rejects_non_finite(grid):
    v = np.zeros((grid.n_x, grid.n_y))
    v[2, 3] = np.nan
    with pytest.raises(DomainError):
        Field(grid, v)


def test_field_is_immutable(grid):
    f = Field(grid, np.zeros((grid.n_x, grid.n_y)))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_layer_decay_flag(grid):
    assert Field.from_function(grid, lambda x, z: np.exp(-z ** 2), "layer").decays()
    assert not Field.from_function(grid, lambda x, z: np.exp(-z / 8), "layer").decays()


def test_ddx_sin(grid):
    f = Field.from_function(grid, lambda x, y: np.sin(x) + 0 * y)
    X, _ = grid.mesh()
    assert np.max(np.abs(ddx(f).values - np.cos(X))) < 1e-13


def test_ddx_constant(grid):
    f = Field(grid, np.full((grid.n_x, grid.n_y), 3.0))
    assert np.max(np.abs(ddx(f).values)) < 1e-14


def test_ddx_sin3x_decay(grid):
    f = Field.from_function(grid, lambda x, y: np.sin(3 * x) * np.exp(-y))
    X, Y = grid.mesh()
    assert np.max(np.abs(ddx(f).values - 3 * np.cos(3 * X) * np.exp(-Y))) < 1e-12


def test_ddx_twice_is_second_derivative(grid, rng):
    v = rng.normal(size=(grid.n_x, grid.n_y))
    # drop the Nyquist mode, which a first derivative cannot represent
    vh = np.fft.rfft(v, axis=0)
    vh[-1] = 0
    v = np.fft.irfft(vh, n=grid.n_x, axis=0)
    f = Field(grid, v)
    assert np.allclose(ddx(ddx(f)).values, dx_spectral(v, 2), atol=1e-11)


def _ddy_error(n):
    g = Grid(n_x=8, n_y=n, n_z=16)
    f = Field.from_function(g, lambda x, y: np.exp(-y) + 0 * x)
    X, Y = g.mesh()
    return np.max(np.abs(ddy(f, 1).values + np.exp(-Y)))


def test_ddy_exponential_refinement_order():
    e1, e2 = _ddy_error(64), _ddy_error(128)
    assert e2 < e1
    assert math.log2(e1 / e2) >= 3.5


def test_ddy_second_derivative_of_linear(grid):
    f = Field.from_function(grid, lambda x, y: 2.0 * y + 1.0 + 0 * x)
    assert np.max(np.abs(ddy(f, 2).values)) < 1e-9


def test_ddy_square_at_one():
    # a node exactly at y = 1 (uniform spacing 0.25)
    g = Grid(n_x=8, n_y=41, Y_max=10.0, y_stretch=0.0)
    f = Field.from_function(g, lambda x, y: y ** 2 + 0 * x)
    i = int(np.argmin(np.abs(g.y_nodes - 1.0)))
    assert g.y_nodes[i] == pytest.approx(1.0)
    assert ddy(f, 1).values[0, i] == pytest.approx(2.0, abs=1e-10)


def test_ddy_order_domain(grid):
    with pytest.raises(DomainError):
        ddy(Field(grid, np.zeros((grid.n_x, grid.n_y))), 3)


def test_conormal_identity(grid, rng):
    f = Field(grid, rng.normal(size=(grid.n_x, grid.n_y)))
    assert conormal_Z(f, 0) is f


def test_conormal_of_y(fine_grid):
    g = fine_grid.with_(delta=0.1, n_y=41, y_stretch=0.0)
    f = Field.from_function(g, lambda x, y: y + 0 * x)
    i = int(np.argmin(np.abs(g.y_nodes - 0.5)))
    assert g.y_nodes[i] == pytest.approx(0.5)
    assert conormal_Z(f, 1).values[0, i] == pytest.approx(0.05, abs=1e-12)


def test_conormal_second_order_exponential():
    g = Grid(n_x=8, n_y=401, y_stretch=0.0, delta=0.1)
    f = Field.from_function(g, lambda x, y: np.exp(-y) + 0 * x)
    i = int(np.argmin(np.abs(g.y_nodes - 0.5)))
    assert conormal_Z(f, 2).values[0, i] == pytest.approx(0.05 ** 2 * math.exp(-0.5), rel=1e-8)


def test_conormal_matches_pointwise_oracle_away_from_wall(grid):
    # vanishes near y = 0; compare with psi^k times repeated stencil derivatives
    f = Field.from_function(grid, lambda x, y: np.sin(x) * np.exp(-(y - 4) ** 2) * (y > 0.5))
    D = grid.D1y
    for k in (1, 2, 3):
        ref = f.values
        for _ in range(k):
            ref = ref @ D.T
        ref = psi(grid.y_nodes, grid.delta)[None, :] ** k * ref
        out = conormal_Z(f, k).values
        assert np.max(np.abs(out - ref)) <= 1e-10 * np.max(np.abs(ref))


def test_conormal_rejects_layer(grid):
    with pytest.raises(DomainError):
        conormal_Z(Field(grid, np.zeros((grid.n_x, grid.n_z)), "layer"), 1)


def test_tilde_Z_identity_and_linear():
    g = Grid(n_x=8, n_z=49, Z_max=12.0, z_stretch=0.0, delta=0.1)
    f = Field.from_function(g, lambda x, z: z + 0 * x, "layer")
    assert tilde_Z(f, 0) is f
    i = int(np.argmin(np.abs(g.z_nodes - 2.0)))
    assert tilde_Z(f, 1).values[0, i] == pytest.approx(0.2, abs=1e-12)


def test_tilde_Z_gaussian():
    g = Grid(n_x=8, n_z=481, Z_max=12.0, z_stretch=0.0, delta=0.1)
    f = Field.from_function(g, lambda x, z: np.exp(-z ** 2) + 0 * x, "layer")
    i = int(np.argmin(np.abs(g.z_nodes - 1.0)))
    assert tilde_Z(f, 1).values[0, i] == pytest.approx(0.1 * -2 * math.exp(-1), rel=1e-8)


def test_tilde_Z_rejects_interior(grid):
    with pytest.raises(DomainError):
        tilde_Z(Field(grid, np.zeros((grid.n_x, grid.n_y))), 1)
