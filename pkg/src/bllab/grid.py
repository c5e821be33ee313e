"""Discrete strip: periodic x, stretched wall-normal nodes, and a layer axis.

Everything downstream works on plain ``(n_x, n_vertical)`` arrays; the
:class:`Field` wrapper is the public container that tags which vertical
axis (interior ``y`` or layer ``z``) a sample set lives on.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import make_interp_spline

INTERIOR = "interior"
LAYER = "layer"


class DomainError(ValueError):
    """Raised when an operator is applied outside its domain."""


def fornberg_weights(x0, nodes, m):
    """Finite-difference weights for derivatives 0..m at ``x0``.

    Returns an array ``c`` of shape ``(m + 1, len(nodes))`` where ``c[k]``
    approximates the k-th derivative. Fornberg's recursion, stable for the
    modest stencil widths used here.
    """
    nodes = np.asarray(nodes, dtype=float)
    n = len(nodes)
    c = np.zeros((m + 1, n))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = nodes[0] - x0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = nodes[i] - x0
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k, i] = c1 * (k * c[k - 1, i - 1] - c5 * c[k, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for k in range(mn, 0, -1):
                c[k, j] = (c4 * c[k, j] - k * c[k - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c


def diff_matrix(nodes, deriv, width):
    """Dense FD matrix for ``d^deriv/dy^deriv`` on arbitrary nodes.

    Each row uses ``width`` consecutive nodes, centred where possible and
    shifted to one-sided windows at the ends.
    """
    nodes = np.asarray(nodes, dtype=float)
    n = len(nodes)
    if width > n:
        raise DomainError(f"stencil width {width} exceeds node count {n}")
    D = np.zeros((n, n))
    for i in range(n):
        lo = min(max(i - width // 2, 0), n - width)
        w = fornberg_weights(nodes[i], nodes[lo:lo + width], deriv)
        D[i, lo:lo + width] = w[deriv]
    return D


def cumulative_matrix(nodes, width=8):
    """Matrix ``C`` with ``(C @ f)[i]`` approximating the integral of f from nodes[0] to nodes[i].

    Each cell integral integrates the local interpolating polynomial over a
    ``width``-node window with Gauss-Legendre points.
    """
    nodes = np.asarray(nodes, dtype=float)
    n = len(nodes)
    gx, gw = np.polynomial.legendre.leggauss(width)
    cell = np.zeros((n - 1, n))
    for i in range(n - 1):
        a, b = nodes[i], nodes[i + 1]
        lo = min(max(i + 1 - width // 2, 0), n - width)
        pts = 0.5 * (b - a) * gx + 0.5 * (a + b)
        for xq, wq in zip(pts, gw):
            cell[i, lo:lo + width] += 0.5 * (b - a) * wq * fornberg_weights(xq, nodes[lo:lo + width], 0)[0]
    C = np.zeros((n, n))
    C[1:] = np.cumsum(cell, axis=0)
    return C


def stretched_nodes(n, length, stretch):
    """Nodes on [0, length] clustered at 0 by a sinh map of strength ``stretch``."""
    s = np.linspace(0.0, 1.0, n)
    if stretch <= 0:
        y = length * s
    else:
        y = length * np.sinh(stretch * s) / np.sinh(stretch)
    y[0] = 0.0
    y[-1] = length
    return y


def trapezoid_weights(nodes):
    nodes = np.asarray(nodes, dtype=float)
    w = np.zeros_like(nodes)
    h = np.diff(nodes)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def wavenumbers(n_x):
    """Integer wavenumbers for ``rfft`` of length ``n_x``."""
    return np.arange(n_x // 2 + 1, dtype=float)


def dx_spectral(values, order=1):
    """Spectral x-derivative along axis 0 (the Nyquist mode is dropped for odd orders)."""
    values = np.asarray(values, dtype=float)
    n_x = values.shape[0]
    k = wavenumbers(n_x)
    mult = (1j * k) ** order
    if order % 2 == 1:
        mult[-1] = 0.0
    shape = (-1,) + (1,) * (values.ndim - 1)
    return np.fft.irfft(np.fft.rfft(values, axis=0) * mult.reshape(shape), n=n_x, axis=0)


def _blend(t):
    """C-infinity step from 0 (t <= 0) to 1 (t >= 1)."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def psi(y, delta):
    """Conormal weight: ``delta*y`` near the wall, ``delta*y/(1+y)`` beyond y = 2.

    On (1, 2) the two branches are joined by a smooth exp(-1/t) partition.
    """
    if np.any(np.asarray(delta) <= 0):
        raise DomainError("delta must be positive")
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr < 0):
        raise DomainError("psi is defined for y >= 0")
    s = _blend(y_arr - 1.0)
    out = delta * y_arr * ((1.0 - s) + s / (1.0 + y_arr))
    return float(out) if np.ndim(y) == 0 else out


@dataclass(frozen=True, eq=False)
class Grid:
    n_x: int = 64
    n_y: int = 256
    Y_max: float = 10.0
    n_z: int = 256
    Z_max: float = 12.0
    delta: float = 0.1
    y_stretch: float = 5.0
    z_stretch: float = 3.0
    fd_order: int = 6
    decay_tol: float = 1e-8
    y_nodes: np.ndarray = field(init=False, repr=False)
    z_nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_x < 8 or self.n_x % 2:
            raise DomainError("n_x must be even and at least 8")
        if self.n_y < self.fd_order + 2 or self.n_z < self.fd_order + 2:
            raise DomainError("too few vertical nodes for the stencil order")
        if self.Y_max <= 0 or self.Z_max <= 0 or self.delta <= 0:
            raise DomainError("Y_max, Z_max and delta must be positive")
        object.__setattr__(self, "y_nodes", stretched_nodes(self.n_y, self.Y_max, self.y_stretch))
        object.__setattr__(self, "z_nodes", stretched_nodes(self.n_z, self.Z_max, self.z_stretch))

    @property
    def x_nodes(self):
        return 2 * np.pi * np.arange(self.n_x) / self.n_x

    @property
    def dx(self):
        return 2 * np.pi / self.n_x

    def mesh(self, kind=INTERIOR):
        """``(X, V)`` coordinate arrays of shape ``(n_x, n_vertical)``."""
        return np.meshgrid(self.x_nodes, self.vertical(kind), indexing="ij")

    def vertical(self, kind):
        if kind == INTERIOR:
            return self.y_nodes
        if kind == LAYER:
            return self.z_nodes
        raise DomainError(f"unknown field kind {kind!r}")

    # vertical operators, built lazily and shared
    @cached_property
    def D1y(self):
        return diff_matrix(self.y_nodes, 1, self.fd_order + 1)

    @cached_property
    def D2y(self):
        return diff_matrix(self.y_nodes, 2, self.fd_order + 2)

    @cached_property
    def D1z(self):
        return diff_matrix(self.z_nodes, 1, self.fd_order + 1)

    @cached_property
    def D2z(self):
        return diff_matrix(self.z_nodes, 2, self.fd_order + 2)

    @cached_property
    def wy(self):
        return trapezoid_weights(self.y_nodes)

    @cached_property
    def wz(self):
        return trapezoid_weights(self.z_nodes)

    @cached_property
    def Cy(self):
        return cumulative_matrix(self.y_nodes)

    @cached_property
    def Cz(self):
        return cumulative_matrix(self.z_nodes)

    @cached_property
    def qy(self):
        """High-order positive quadrature weights on the y nodes (used by the norms)."""
        return self.Cy[-1].copy()

    @cached_property
    def qz(self):
        return self.Cz[-1].copy()

    @cached_property
    def psi_y(self):
        return psi(self.y_nodes, self.delta)

    def D1(self, kind):
        return self.D1y if kind == INTERIOR else self.D1z

    def D2(self, kind):
        return self.D2y if kind == INTERIOR else self.D2z

    def weights(self, kind):
        return self.wy if kind == INTERIOR else self.wz

    def with_(self, **changes):
        """Copy with some parameters replaced."""
        params = {k: getattr(self, k) for k in
                  ("n_x", "n_y", "Y_max", "n_z", "Z_max", "delta", "y_stretch",
                   "z_stretch", "fd_order", "decay_tol")}
        params.update(changes)
        return Grid(**params)

    def layer_sampler(self, epsilon, degree=7):
        """Matrix mapping layer columns onto interior nodes at z = y/epsilon.

        Rows for y/epsilon beyond Z_max are zero (the layer has decayed there).
        """
        return _layer_sampler(self, float(epsilon), degree)

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("n_x", "n_y", "Y_max", "n_z", "Z_max", "delta", "y_stretch",
                 "z_stretch", "fd_order", "decay_tol")}


_SAMPLER_CACHE: dict = {}


def _layer_sampler(grid, epsilon, degree):
    key = (id(grid), epsilon, degree)
    hit = _SAMPLER_CACHE.get(key)
    if hit is not None and hit[0] is grid:
        return hit[1]
    z_target = grid.y_nodes / epsilon
    inside = z_target <= grid.Z_max
    S = np.zeros((grid.n_y, grid.n_z))
    spline = make_interp_spline(grid.z_nodes, np.eye(grid.n_z), k=degree)
    S[inside] = spline(z_target[inside])
    S[0] = 0.0
    S[0, 0] = 1.0
    if len(_SAMPLER_CACHE) > 32:
        _SAMPLER_CACHE.clear()
    _SAMPLER_CACHE[key] = (grid, S)
    return S


@dataclass(frozen=True, eq=False)
class Field:
    """Samples of a scalar on the interior (x, y) or layer (x, z) nodes."""

    grid: Grid
    values: np.ndarray
    kind: str = INTERIOR

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        expected = (self.grid.n_x, len(self.grid.vertical(self.kind)))
        if v.shape != expected:
            raise DomainError(f"values shape {v.shape} does not match grid {expected}")
        if not np.all(np.isfinite(v)):
            raise DomainError("field values must be finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid, fn, kind=INTERIOR):
        X, V = grid.mesh(kind)
        return cls(grid, np.broadcast_to(fn(X, V), X.shape), kind)

    def wall(self):
        """Trace at the wall as an x-profile."""
        return self.values[:, 0].copy()

    def decays(self):
        return bool(np.max(np.abs(self.values[:, -1])) <= self.grid.decay_tol)

    def _new(self, values):
        return Field(self.grid, values, self.kind)

    def __add__(self, other):
        return self._new(self.values + _vals(other))

    def __sub__(self, other):
        return self._new(self.values - _vals(other))

    def __mul__(self, other):
        return self._new(self.values * _vals(other))

    __radd__ = __add__
    __rmul__ = __mul__

    def __neg__(self):
        return self._new(-self.values)


def _vals(obj):
    return obj.values if isinstance(obj, Field) else obj


def ddx(f: Field) -> Field:
    """Spectral x-derivative."""
    return f._new(dx_spectral(f.values))


def ddy(f: Field, order: int = 1) -> Field:
    """Vertical derivative (d/dy for interior fields, d/dz for layer fields)."""
    if order not in (1, 2):
        raise DomainError("ddy supports order 1 or 2")
    D = f.grid.D1(f.kind) if order == 1 else f.grid.D2(f.kind)
    return f._new(f.values @ D.T)


def dy_power(values, D, k):
    """Apply the first-derivative matrix ``k`` times along the last axis."""
    out = values
    for _ in range(k):
        out = out @ D.T
    return out


def conormal_Z(f: Field, k: int) -> Field:
    """``psi(y)^k d^k/dy^k`` on an interior field."""
    if f.kind != INTERIOR:
        raise DomainError("conormal_Z acts on interior fields; use tilde_Z for layers")
    if k < 0:
        raise DomainError("k must be non-negative")
    if k == 0:
        return f
    return f._new(f.grid.psi_y ** k * dy_power(f.values, f.grid.D1y, k))


def tilde_Z(f: Field, k: int) -> Field:
    """``(delta z)^k d^k/dz^k`` on a layer field."""
    if f.kind != LAYER:
        raise DomainError("tilde_Z acts on layer fields")
    if k < 0:
        raise DomainError("k must be non-negative")
    if k == 0:
        return f
    w = (f.grid.delta * f.grid.z_nodes) ** k
    return f._new(w * dy_power(f.values, f.grid.D1z, k))
