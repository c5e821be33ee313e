"""Brute-force reference evaluations of the norms.

Each derivative is formed in physical space by repeated one-step operators
and squared-integrated node by node, with an explicit loop over every
multi-index. Nothing here shares code with the table-based evaluators
beyond the grid's stencil matrices and quadrature weights.
"""
from __future__ import annotations

import math

import numpy as np

from .grid import dx_spectral, psi
from .norms import GevreyParams, LayerNormParams


def _l2sq(a, wv):
    n = a.shape[0]
    total = 0.0
    for i in range(n):
        total += float(np.dot(a[i] ** 2, wv))
    return total * 2 * np.pi / n


def _drop_noisy_modes(values, out, D, a2):
    # same rule as the fast path, written as an explicit loop over x-modes
    F0 = np.fft.rfft(values, axis=0)
    top = max(abs(c) for c in F0.ravel()) if F0.size else 0.0
    row = max(sum(abs(d) for d in r) for r in D)
    floor = 100.0 * np.finfo(float).eps * top * row ** a2
    F = np.fft.rfft(out, axis=0)
    for i in range(F.shape[0]):
        if max(abs(c) for c in F[i]) < floor:
            F[i, :] = 0.0
    return np.fft.irfft(F, n=values.shape[0], axis=0)


def _deriv(values, D, a1, a2, weight):
    out = values
    for _ in range(a2):
        out = out @ D.T
    out = _drop_noisy_modes(values, out, D, a2)
    if weight is not None and a2:
        out = weight ** a2 * out
    for _ in range(a1):
        out = dx_spectral(out)
    return out


def _sum(values, D, wv, p: GevreyParams, weight, y_type):
    cap = min(p.y_cap, p.order)
    total = _l2sq(values, wv)
    start = p.k + (1 if y_type else 0)
    for m in range(start, p.order + 1):
        j = m - p.k
        w = (p.rho0 - p.lam * p.t) ** (2 * j) / math.factorial(j) ** (2.0 / p.gamma)
        if y_type:
            w *= j
        s = 0.0
        for a2 in range(0, min(m, cap) + 1):
            s += _l2sq(_deriv(values, D, m - a2, a2, weight), wv)
        total += w * s
    return math.sqrt(total)


def _psi_row(f, p):
    return psi(f.grid.y_nodes, f.grid.delta if p.delta is None else p.delta)[None, :]


def oracle_gevrey_X(f, p: GevreyParams):
    return _sum(f.values, f.grid.D1y, f.grid.qy, p, _psi_row(f, p), False)


def oracle_gevrey_Y(f, p: GevreyParams):
    return _sum(f.values, f.grid.D1y, f.grid.qy, p, _psi_row(f, p), True)


def oracle_gevrey_Xe(f, p: GevreyParams):
    return _sum(f.values, f.grid.D1y, f.grid.qy, p, None, False)


def oracle_gevrey_Xx(profile, p: GevreyParams):
    v = np.asarray(profile, dtype=float)[:, None]
    one = np.ones(1)
    total = _l2sq(v, one)
    for m in range(p.k, p.order + 1):
        j = m - p.k
        w = (p.rho0 - p.lam * p.t) ** (2 * j) / math.factorial(j) ** (2.0 / p.gamma)
        d = v
        for _ in range(m):
            d = dx_spectral(d)
        total += w * _l2sq(d, one)
    return math.sqrt(total)


def oracle_conormal_sobolev(f, s, delta=None):
    g = f.grid
    w = psi(g.y_nodes, g.delta if delta is None else delta)[None, :]
    total = 0.0
    for k in range(s + 1):
        for l in range(s + 1 - k):
            total += math.sqrt(_l2sq(_deriv(f.values, g.D1y, l, k, w), g.qy))
    return total


def oracle_layer_weighted(f, p: LayerNormParams, s=0, z_order=0):
    g = f.grid
    wt = np.exp(p.a0 * g.z_nodes ** 2)
    vals = f.values
    for _ in range(z_order):
        vals = vals @ g.D1z.T
    zw = (g.delta * g.z_nodes)[None, :]
    total = 0.0
    for a1 in range(s + 1):
        for a2 in range(s + 1 - a1):
            total += _l2sq(_deriv(vals, g.D1z, a1, a2, zw) * wt[None, :], g.qz)
    return math.sqrt(total)


def random_smooth_field(grid, rng, n_modes=3, kind="interior"):
    """Random trigonometric-in-x, Gaussian-in-vertical test field."""
    from .grid import Field
    X, V = grid.mesh(kind)
    out = np.zeros_like(X)
    for _ in range(n_modes):
        k = rng.integers(0, 4)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.normal()
        c = rng.uniform(0.5, 2.0)
        shift = rng.uniform(0.0, 1.0)
        out += amp * np.cos(k * X + phase) * np.exp(-c * (V - shift) ** 2)
    return Field(grid, out, kind)


def run_oracle_suite(grid, n_fields=20, seed=0, rtol=1e-10):
    """Compare every evaluator with its oracle on random fields; returns result rows."""
    from . import norms
    rng = np.random.default_rng(seed)
    rows = []
    gp = GevreyParams(gamma=0.5, k=3, M=9)
    lp = LayerNormParams(a0=0.25)

    def record(name, i, fast, slow):
        rel = abs(fast - slow) / max(abs(slow), 1e-300)
        rows.append({"norm": name, "field": i, "value": fast, "oracle": slow,
                     "rel": rel, "pass": bool(rel <= rtol)})

    for i in range(n_fields):
        f = random_smooth_field(grid, rng)
        record("gevrey_X", i, norms.gevrey_X(f, gp).value, oracle_gevrey_X(f, gp))
        record("gevrey_Y", i, norms.gevrey_Y(f, gp).value, oracle_gevrey_Y(f, gp))
        record("gevrey_Xe", i, norms.gevrey_Xe(f, gp.replace(gamma=1.0)).value,
               oracle_gevrey_Xe(f, gp.replace(gamma=1.0)))
        record("conormal_sobolev", i, norms.conormal_sobolev(f, 3), oracle_conormal_sobolev(f, 3))
        prof = f.values[:, 0]
        record("gevrey_Xx", i, norms.gevrey_Xx(prof, gp).value, oracle_gevrey_Xx(prof, gp))
        fl = random_smooth_field(grid, rng, kind="layer")
        record("layer_weighted", i, norms.layer_weighted_norm(fl, lp, 2),
               oracle_layer_weighted(fl, lp, 2))
    return rows
