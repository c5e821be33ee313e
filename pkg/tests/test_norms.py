import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bllab import norm_oracle as oracle
from bllab.grid import DomainError, Field, Grid
from bllab.norms import (GevreyParams, LayerNormParams, conormal_sobolev, gevrey_X, gevrey_Xe,
                         gevrey_Xx, gevrey_Y, layer_weighted_norm, multiindex_identities,
                         seminorms)


def _l2(f):
    g = f.grid
    return math.sqrt(np.sum(f.values ** 2 * g.qy) * g.dx)


@pytest.fixture(scope="module")
def smooth(grid):
    return Field.from_function(grid, lambda x, y: np.sin(x) * np.exp(-y ** 2)
                               + 0.3 * np.cos(2 * x) * y * np.exp(-y))


def _zero(grid):
    return Field(grid, np.zeros((grid.n_x, grid.n_y)))


# conormal Sobolev

def test_conormal_sobolev_zero(grid):
    assert conormal_sobolev(_zero(grid), 3) == 0.0


def test_conormal_sobolev_order_zero_is_l2(smooth):
    assert conormal_sobolev(smooth, 0) == pytest.approx(_l2(smooth), rel=1e-13)


def test_conormal_sobolev_oracle(grid):
    f = Field.from_function(grid, lambda x, y: np.sin(x) * np.exp(-y))
    assert conormal_sobolev(f, 2) == pytest.approx(oracle.oracle_conormal_sobolev(f, 2), rel=1e-12)


def test_conormal_sobolev_rejects_layer(grid):
    with pytest.raises(DomainError):
        conormal_sobolev(Field(grid, np.zeros((grid.n_x, grid.n_z)), "layer"), 1)


# Gevrey norms

@pytest.mark.parametrize("norm", [gevrey_X, gevrey_Y, gevrey_Xe])
def test_gevrey_zero(grid, norm):
    assert norm(_zero(grid), GevreyParams()).value == 0.0


@pytest.mark.parametrize("norm", [gevrey_X, gevrey_Xe])
def test_gevrey_constant_is_plain_norm(grid, norm):
    c = Field(grid, np.full((grid.n_x, grid.n_y), 2.5))
    assert norm(c, GevreyParams(k=3)).value == pytest.approx(_l2(c), rel=1e-12)


def test_gevrey_X_oracle(grid):
    f = Field.from_function(grid, lambda x, y: np.sin(x) * np.exp(-y ** 2))
    p = GevreyParams(gamma=0.5, k=3, M=9)
    assert gevrey_X(f, p).value == pytest.approx(oracle.oracle_gevrey_X(f, p), rel=1e-12)


def test_gevrey_Y_oracle(smooth):
    p = GevreyParams(gamma=0.5, k=3, M=9)
    assert gevrey_Y(smooth, p).value == pytest.approx(oracle.oracle_gevrey_Y(smooth, p), rel=1e-12)


def test_gevrey_Xe_oracle(grid):
    f = Field.from_function(grid, lambda x, y: np.sin(x) * np.exp(-y))
    p = GevreyParams(gamma=1.0, k=3, M=8)
    assert gevrey_Xe(f, p).value == pytest.approx(oracle.oracle_gevrey_Xe(f, p), rel=1e-12)


def test_X_and_Y_differ_only_by_order_factor(smooth):
    # Y^2 - |f|^2 = sum (m-k) S_m over m > k, X^2 - |f|^2 = sum S_m over m >= k; so if
    # only S_{k+1} were nonzero the two norms would coincide
    p = GevreyParams(k=2, M=8)
    S = seminorms(smooth, p)
    base = _l2(smooth) ** 2
    X = gevrey_X(smooth, p).value ** 2
    Y = gevrey_Y(smooth, p).value ** 2
    assert X == pytest.approx(base + sum(S.values()), rel=1e-12)
    assert Y == pytest.approx(base + sum((m - p.k) * s for m, s in S.items()), rel=1e-12)
    only = base + S[p.k + 1]
    assert only == pytest.approx(base + sum((m - p.k) * s for m, s in S.items() if m == p.k + 1))


def test_gevrey_rho_out_of_range(smooth):
    with pytest.raises(DomainError):
        gevrey_X(smooth, GevreyParams(rho0=2.0, lam=1.0, t=1.5))


def test_gevrey_params_validation():
    with pytest.raises(DomainError):
        GevreyParams(gamma=0.0)
    with pytest.raises(DomainError):
        GevreyParams(k=3, M=4)


def test_gevrey_non_increasing_in_time(smooth):
    vals = [gevrey_X(smooth, GevreyParams(t=t)).value for t in np.linspace(0, 1, 6)]
    assert all(b <= a * (1 + 1e-14) for a, b in zip(vals, vals[1:]))


def test_doubling_rho_scales_order_terms(smooth):
    p1 = GevreyParams(gamma=1.0, k=3, rho0=1.0)
    S1 = seminorms(smooth, p1)
    S2 = seminorms(smooth, p1.replace(rho0=2.0))
    for m in S1:
        if S1[m] > 0:
            assert S2[m] / S1[m] == pytest.approx(4.0 ** (m - 3), rel=1e-12)


def test_embedding_constant_finite_and_monotone(smooth):
    ratios = []
    for rho in (1.0, 1.5, 2.0):
        p = GevreyParams(rho0=rho)
        ratios.append(gevrey_X(smooth, p.replace(k=2)).value / gevrey_X(smooth, p.replace(k=3)).value)
    assert all(math.isfinite(r) for r in ratios)
    assert ratios[0] > ratios[1] > ratios[2]


@given(c=st.floats(-1e3, 1e3).filter(lambda c: abs(c) > 1e-3), seed=st.integers(0, 2 ** 16))
def test_conormal_norms_absolutely_homogeneous(grid, c, seed):
    f = oracle.random_smooth_field(grid, np.random.default_rng(seed))
    cf = Field(grid, c * f.values)
    p = GevreyParams()
    for norm in (gevrey_X, gevrey_Y):
        assert norm(cf, p).value == pytest.approx(abs(c) * norm(f, p).value, rel=1e-12)
    assert conormal_sobolev(cf, 2) == pytest.approx(abs(c) * conormal_sobolev(f, 2), rel=1e-12)


@given(e=st.integers(-20, 20), sign=st.sampled_from([-1, 1]), seed=st.integers(0, 2 ** 16))
def test_all_norms_exactly_homogeneous_under_binary_scaling(grid, e, sign, seed):
    # scaling by a power of two is exact in floating point, so any deviation is algorithmic
    f = oracle.random_smooth_field(grid, np.random.default_rng(seed))
    c = sign * 2.0 ** e
    cf = Field(grid, c * f.values)
    p = GevreyParams()
    for norm in (gevrey_X, gevrey_Y, gevrey_Xe):
        assert norm(cf, p).value == pytest.approx(abs(c) * norm(f, p).value, rel=1e-12)


@given(c=st.floats(-1e3, 1e3).filter(lambda c: abs(c) > 1e-3), seed=st.integers(0, 2 ** 16))
def test_full_derivative_norm_homogeneous_to_its_conditioning(grid, c, seed):
    # unweighted wall-normal derivatives up to order y_cap carry ~1e-10 relative rounding
    f = oracle.random_smooth_field(grid, np.random.default_rng(seed))
    p = GevreyParams()
    assert gevrey_Xe(Field(grid, c * f.values), p).value == pytest.approx(
        abs(c) * gevrey_Xe(f, p).value, rel=1e-9)


# tangential norm

def test_gevrey_Xx_zero(grid):
    assert gevrey_Xx(np.zeros(grid.n_x), GevreyParams()).value == 0.0


def test_gevrey_Xx_sine_closed_form(grid):
    p = GevreyParams(gamma=1.0, k=3, rho0=1.0, M=20)
    s2 = math.pi    # ||sin x||^2 on the torus
    expected = s2 * sum(1 / math.factorial(j) ** 2 for j in range(p.order - p.k + 1)) + s2
    assert gevrey_Xx(np.sin(grid.x_nodes), p).value ** 2 == pytest.approx(expected, rel=1e-13)


def test_gevrey_Xx_truncation_converged(grid):
    prof = np.sin(grid.x_nodes)
    a = gevrey_Xx(prof, GevreyParams(M=11)).value
    b = gevrey_Xx(prof, GevreyParams(M=13)).value
    assert abs(a - b) < 1e-10


def test_gevrey_Xx_rejects_2d(grid):
    with pytest.raises(DomainError):
        gevrey_Xx(np.zeros((grid.n_x, 2)), GevreyParams())


# layer norm

def test_layer_norm_zero(grid):
    assert layer_weighted_norm(Field(grid, np.zeros((grid.n_x, grid.n_z)), "layer"),
                               LayerNormParams()) == 0.0


def test_layer_norm_gaussian_quadrature():
    g = Grid(n_x=8, n_y=16, n_z=256)
    f = Field.from_function(g, lambda x, z: np.exp(-z ** 2) + 0 * x, "layer")
    # integrand exp(z^2/2 - 2 z^2) over [0, Z_max] times 2 pi
    exact = 2 * math.pi * 0.5 * math.sqrt(math.pi / 1.5) * math.erf(math.sqrt(1.5) * g.Z_max)
    assert layer_weighted_norm(f, LayerNormParams(a0=0.25)) ** 2 == pytest.approx(exact, rel=1e-10)


def test_layer_norm_oracle(grid, rng):
    f = oracle.random_smooth_field(grid, rng, kind="layer")
    p = LayerNormParams(a0=0.25)
    assert layer_weighted_norm(f, p, 2) == pytest.approx(oracle.oracle_layer_weighted(f, p, 2),
                                                         rel=1e-10)


def test_layer_norm_decay_violation(grid):
    f = Field.from_function(grid, lambda x, z: np.exp(-z ** 2 / 8) + 0 * x, "layer")
    with pytest.raises(DomainError):
        layer_weighted_norm(f, LayerNormParams(a0=0.25))


def test_layer_params_validation():
    with pytest.raises(DomainError):
        LayerNormParams(a0=0.0)


# oracle suite

def test_oracle_suite_small(grid):
    rows = oracle.run_oracle_suite(grid, n_fields=5, seed=1)
    assert rows and all(r["pass"] for r in rows)


# multi-index identities

def test_binomial_identity_example():
    chk = multiindex_identities(3, 1)
    row = dict((a, (l, r)) for a, l, r in chk.binomial)[(2, 1)]
    assert row == (3, 3)


def test_identities_j_zero():
    for m in range(6):
        chk = multiindex_identities(m, 0)
        assert all(l == r == 1 for _, l, r in chk.binomial)


def test_identities_exhaustive_m8():
    for j in range(9):
        assert multiindex_identities(8, j).holds


def test_identities_range():
    with pytest.raises(DomainError):
        multiindex_identities(13, 2)
    with pytest.raises(DomainError):
        multiindex_identities(3, 4)


@given(m=st.integers(0, 12), data=st.data())
def test_identities_hold_with_random_sequences(m, data):
    j = data.draw(st.integers(0, m))
    a, b, c = (data.draw(st.integers(-50, 50)) for _ in range(3))
    chk = multiindex_identities(m, j, x=lambda be: a * be[0] + b * be[1] ** 2 + c,
                                y=lambda be: (be[0] + 1) * (be[1] - a))
    assert chk.holds
    assert all(isinstance(v, int) for v in chk.product)
