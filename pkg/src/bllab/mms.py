"""Manufactured solutions for the solver order studies.

Vertical profiles are polynomials times ``exp(-a*y^2)``, so every derivative
is exact. Each problem exposes ``exact(t)`` and the forcing that makes it
solve the discretized equations' continuous counterpart.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial


@dataclass(frozen=True)
class GaussPoly:
    """``P(y) * exp(-a * y**2)``."""
    P: Polynomial
    a: float = 1.0

    def __call__(self, y):
        return self.P(y) * np.exp(-self.a * np.asarray(y) ** 2)

    def deriv(self, k=1):
        out = self
        for _ in range(k):
            out = GaussPoly(out.P.deriv() - 2 * out.a * Polynomial([0, 1]) * out.P, out.a)
        return out


def _poly(*c):
    return Polynomial(list(c))


@dataclass
class _Trig:
    """Sum of ``c * sin(k x)`` and ``d * cos(k x)`` terms, with x-derivatives."""
    terms: tuple        # (k, c_sin, c_cos)

    def __call__(self, x, order=0):
        out = np.zeros_like(x)
        for k, cs, cc in self.terms:
            s, c = np.sin(k * x), np.cos(k * x)
            # d^n/dx^n of sin and cos cycle with period 4
            ds = [s, c, -s, -c][order % 4]
            dc = [c, -s, -c, s][order % 4]
            out = out + k ** order * (cs * ds + cc * dc)
        return out


class NSManufactured:
    """Exact flow honouring the friction wall, impermeability and a free-slip lid.

    Streamfunction ``T(t) * s(x) * b(y)`` with ``b = y (1 + a y) e^{-y^2}``
    and mean flow ``T(t) * (1 + c y) e^{-y^2}``; ``a`` and ``c`` are chosen so
    that ``beta*u = eps^gamma * d_y u`` holds on the wall.
    """

    def __init__(self, grid, epsilon, gamma, beta, rate=2.0):
        self.grid, self.eps, self.gamma, self.beta = grid, epsilon, gamma, beta
        self.rate = rate
        lam = beta / epsilon ** gamma
        self.b = GaussPoly(_poly(0.0, 1.0, lam / 2))
        self.m = GaussPoly(_poly(1.0, lam))
        self.s = _Trig(((1, 1.0, 0.0), (2, 0.0, 0.5)))
        self.nu = epsilon ** 2

    # time modulation; ``rate`` is its angular frequency
    def amp(self, t):
        return 1.0 + 0.5 * math.sin(self.rate * t)

    def amp_t(self, t):
        return 0.5 * self.rate * math.cos(self.rate * t)

    def _parts(self, t):
        X, Y = self.grid.mesh()
        A = self.amp(t)
        b = [self.b.deriv(k)(Y) for k in range(5)]
        m = [self.m.deriv(k)(Y[0]) for k in range(4)]
        s = [self.s(X, k) for k in range(4)]
        return X, Y, A, b, m, s

    def exact(self, t):
        """``(u, v, omega, psi, mean_u)`` arrays at time t."""
        X, Y, A, b, m, s = self._parts(t)
        psi = A * s[0] * b[0]
        mean = A * m[0]
        u = A * s[0] * b[1] + mean[None, :]
        v = -A * s[1] * b[0]
        omega = A * (s[2] * b[0] + s[0] * b[2]) + A * m[1][None, :]
        return u, v, omega, psi, mean

    def forcing(self, t):
        """``(F_omega, F_mean)``: vorticity forcing (x-mean removed) and mean-momentum forcing."""
        X, Y, A, b, m, s = self._parts(t)
        At = self.amp_t(t)
        nu = self.nu
        u = A * (s[0] * b[1] + m[0][None, :])
        v = -A * s[1] * b[0]
        w_t = At * (s[2] * b[0] + s[0] * b[2] + m[1][None, :])
        w_x = A * (s[3] * b[0] + s[1] * b[2])
        w_y = A * (s[2] * b[1] + s[0] * b[3] + m[2][None, :])
        s4 = self.s(X, 4)
        w_xx = A * (s4 * b[0] + s[2] * b[2])
        w_yy = A * (s[2] * b[2] + s[0] * b[4] + m[3][None, :])
        Fw = w_t + u * w_x + v * w_y - nu * (w_xx + w_yy)
        Fw = Fw - Fw.mean(axis=0, keepdims=True)
        # mean balance: d_t ubar + d_y <u v> - nu ubar_yy
        uv_y = A * A * (-(s[0] * s[1]).mean(axis=0) * (b[1] * b[1] + b[0] * b[2]).mean(axis=0))
        Fm = At * m[0] + uv_y - nu * A * m[2]
        return Fw, Fm


class EulerManufactured:
    """Exact inviscid flow ``psi = T(t) s(x) y e^{-y^2}`` with forcing, impermeable wall."""

    def __init__(self, grid, rate=2.0):
        self.grid, self.rate = grid, rate
        self.b = GaussPoly(_poly(0.0, 1.0))
        self.m = GaussPoly(_poly(1.0))
        self.s = _Trig(((1, 1.0, 0.0), (2, 0.0, 0.5)))

    amp = NSManufactured.amp
    amp_t = NSManufactured.amp_t

    def exact(self, t):
        X, Y = self.grid.mesh()
        A = self.amp(t)
        b0, b1, b2 = (self.b.deriv(k)(Y) for k in range(3))
        m0, m1 = self.m(Y[0]), self.m.deriv()(Y[0])
        u = A * (self.s(X) * b1 + m0[None, :])
        v = -A * self.s(X, 1) * b0
        omega = A * (self.s(X, 2) * b0 + self.s(X) * b2 + m1[None, :])
        return u, v, omega, A * m0

    def forcing(self, t):
        X, Y = self.grid.mesh()
        A, At = self.amp(t), self.amp_t(t)
        b = [self.b.deriv(k)(Y) for k in range(4)]
        m = [self.m.deriv(k)(Y[0]) for k in range(3)]
        s = [self.s(X, k) for k in range(4)]
        u = A * (s[0] * b[1] + m[0][None, :])
        v = -A * s[1] * b[0]
        w_t = At * (s[2] * b[0] + s[0] * b[2] + m[1][None, :])
        w_x = A * (s[3] * b[0] + s[1] * b[2])
        w_y = A * (s[2] * b[1] + s[0] * b[3] + m[2][None, :])
        Fw = w_t + u * w_x + v * w_y
        Fw = Fw - Fw.mean(axis=0, keepdims=True)
        uv_y = A * A * (-(s[0] * s[1]).mean(axis=0) * (b[1] * b[1] + b[0] * b[2]).mean(axis=0))
        Fm = At * m[0] + uv_y
        return Fw, Fm


class LayerManufactured:
    """Exact layer profile ``T(t) s(x) q(z)`` for ``d_t u - d_zz u = F`` with the Robin wall row.

    ``q = (1 + c z) e^{-z^2}`` where ``c`` matches ``d_z u(0) - robin*u(0) = data(t, x)``
    with ``data`` returned alongside; a transport term ``-U(x) d_x u`` is handled explicitly.
    """

    def __init__(self, grid, robin=1.0, c=0.3, rate=2.0):
        self.grid, self.robin, self.rate = grid, robin, rate
        self.q = GaussPoly(_poly(1.0, c))
        self.s = _Trig(((1, 1.0, 0.0), (3, 0.2, 0.0)))

    amp = NSManufactured.amp
    amp_t = NSManufactured.amp_t

    def exact(self, t):
        from .grid import LAYER
        X, Z = self.grid.mesh(LAYER)
        return self.amp(t) * self.s(X) * self.q(Z)

    def transport(self, x):
        return 0.5 * np.cos(x)

    def forcing(self, t):
        """Forcing so that ``d_t u = d_zz u - transport * d_x u + F``."""
        from .grid import LAYER
        X, Z = self.grid.mesh(LAYER)
        A, At = self.amp(t), self.amp_t(t)
        q0, q2 = self.q(Z), self.q.deriv(2)(Z)
        return (At * self.s(X) * q0 - A * self.s(X) * q2
                + self.transport(X) * A * self.s(X, 1) * q0)

    def wall_data(self, t):
        x = self.grid.x_nodes
        q0, q1 = self.q(0.0), self.q.deriv()(0.0)
        return self.amp(t) * self.s(x) * (q1 - self.robin * q0)


# ---------------------------------------------------------------------------
# refinement studies

def observed_order(coarse, fine, refinement=2.0):
    return math.log(coarse / fine) / math.log(refinement)


def euler_error(grid, dt, T=0.5, rate=8.0, cfl_max=2.5):
    """Max velocity error of the forced Euler run at ``T``."""
    from .euler import EulerIntegrator, EulerState
    mm = EulerManufactured(grid, rate=rate)
    _, _, w, m = mm.exact(0.0)
    init = EulerState.from_vorticity(grid, w, 0.0, mean_u=m)
    s = EulerIntegrator(grid, cfl_max=cfl_max, forcing=mm.forcing).run(init, T, dt).states[-1]
    ue, ve, _, _ = mm.exact(T)
    return max(np.max(np.abs(s.u.values - ue)), np.max(np.abs(s.v.values - ve)))


def ns_error(grid, dt, epsilon=0.3, gamma=0.5, beta=1.0, T=0.5):
    """Max velocity error of the forced Navier-Stokes run, and the final state."""
    from .ns import NSState, solve_ns
    mm = NSManufactured(grid, epsilon, gamma, beta)
    _, _, _, psi, mean = mm.exact(0.0)
    s0 = NSState.from_streamfunction(grid, psi, mean, epsilon, gamma, beta)
    s = solve_ns(s0, T, dt, forcing=mm.forcing, pressure=False).states[-1]
    ue, ve, *_ = mm.exact(T)
    return max(np.max(np.abs(s.u.values - ue)), np.max(np.abs(s.v.values - ve))), s


def layer_error(grid, dt, robin=1.0, T=0.5):
    """Max error of the IMEX layer stepper with transport, and its worst wall-row residual."""
    from .grid import LAYER, dx_spectral
    from .prandtl import LayerIMEX
    lm = LayerManufactured(grid, robin=robin)
    X, _ = grid.mesh(LAYER)
    U = lm.transport(X)
    stepper = LayerIMEX(grid, dt, robin=robin)
    u, _, res = stepper.run(T, lambda n, a: -U * dx_spectral(a) + lm.forcing(n * dt),
                            lambda n: lm.wall_data(n * dt), init=lm.exact(0.0))
    return np.max(np.abs(u[-1] - lm.exact(T))), float(np.max(res))
