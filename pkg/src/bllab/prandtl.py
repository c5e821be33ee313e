"""Boundary-layer profiles in the stretched variable z = y/epsilon.

Each stage is written as ``d_t u = d_zz u + N(u; ctx)`` where ``ctx`` holds
wall traces of the outer flow and earlier layer stages at one time level.
The same right-hand sides serve the time stepper, plug-back residuals, and
time derivatives needed by the remainder computations.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .grid import LAYER, Field, dx_spectral

log = logging.getLogger(__name__)


class DecayError(RuntimeError):
    pass


class BlowUpError(RuntimeError):
    pass


@dataclass
class LayerProfile:
    u_p: Field
    v_p: Field
    t: float
    order: int
    boundary: dict = field(default_factory=dict)


def recover_vp(u_p, grid=None):
    """Wall-normal partner ``v(z) = int_z^Zmax d_x u dz'`` (vanishes at Z_max).

    Accepts a layer :class:`Field` (returns a Field) or a raw array with ``grid``.
    """
    if isinstance(u_p, Field):
        g = u_p.grid
        return Field(g, _vp(g, u_p.values), LAYER)
    return _vp(grid, u_p)


def _vp(g, u):
    C = g.Cz
    return dx_spectral(u) @ (C[-1][None, :] - C).T


def wall_integral(g, q):
    """``int_0^Zmax q dz`` for each x, on the same quadrature as :func:`recover_vp`."""
    return q @ g.Cz[-1]


# ---------------------------------------------------------------------------
# stage right-hand sides; every function returns N with d_t u = d_zz u + N

class _Ops:
    def __init__(self, g):
        self.g = g
        self.Z = g.z_nodes[None, :]

    def dz(self, a):
        return a @ self.g.D1z.T

    def dzz(self, a):
        return a @ self.g.D2z.T

    @staticmethod
    def dx(a):
        return dx_spectral(a)


def _col(a):
    return np.asarray(a)[:, None]


def rhs_layer1(g, u, c, transport="level0"):
    """Linear layer at the leading slip order (friction exponent 1/2)."""
    o = _Ops(g)
    ou0 = c["ou0"]
    vy = c["ov0_y"] if transport == "level0" else c.get("ov1_y", np.zeros_like(ou0))
    return -(_col(ou0) * o.dx(u) + u * _col(o.dx(ou0)) + o.Z * _col(vy) * o.dz(u))


def rhs_layer2(g, u, c):
    o = _Ops(g)
    ou0, lu1, lv3 = c["ou0"], c["lu1"], c["lv3"]
    return -(_col(ou0) * o.dx(u) + u * _col(o.dx(ou0)) + lu1 * o.dx(lu1)
             + (_col(c["ov3"]) + lv3) * o.dz(lu1) + o.Z * _col(c["ov0_y"]) * o.dz(u))


def rhs_layer3(g, u, c):
    o = _Ops(g)
    ou0, lu1, lu2, lv3, lv4 = c["ou0"], c["lu1"], c["lu2"], c["lv3"], c["lv4"]
    ou0y, ov0y, ov0yy = c["ou0_y"], c["ov0_y"], c["ov0_yy"]
    Z = o.Z
    return -(_col(ou0) * o.dx(u) + u * _col(o.dx(ou0)) + lu1 * o.dx(lu2) + lu2 * o.dx(lu1)
             + lv3 * _col(ou0y) + (_col(c["ov3"]) + lv3) * o.dz(lu2)
             + (_col(c["ov4"]) + lv4) * o.dz(lu1)
             + Z * _col(o.dx(ou0y)) * lu1 + Z * _col(ou0y) * o.dx(lu1)
             + Z * _col(ov0y) * o.dz(u) + 0.5 * Z ** 2 * _col(ov0yy) * o.dz(lu1))


def rhs_layer0_nonlinear(g, u, c):
    """Nonlinear layer for friction exponent 1, written for the corrector itself."""
    o = _Ops(g)
    ou0 = c["ou0"]
    lv1 = _vp(g, u)
    ov1 = -lv1[:, 0]
    return -(u * _col(o.dx(ou0)) + (_col(ou0) + u) * o.dx(u)
             + (lv1 + _col(ov1) + o.Z * _col(c["ov0_y"])) * o.dz(u))


def rhs_layer1_one(g, u, c):
    """First corrector of the friction-exponent-1 ladder."""
    o = _Ops(g)
    ou0, ou1, lu0, lv1 = c["ou0"], c["ou1"], c["lu0"], c["lv1"]
    ou0y, ov0y, ov0yy, ov1y = c["ou0_y"], c["ov0_y"], c["ov0_yy"], c["ov1_y"]
    ov1 = -lv1[:, :1]
    lv2 = _vp(g, u)
    Z = o.Z
    return -(_col(ou0) * o.dx(u) + u * _col(o.dx(ou0))
             + Z * _col(ou0y) * o.dx(lu0) + Z * _col(o.dx(ou0y)) * lu0
             + _col(ou1) * o.dx(lu0) + lu0 * _col(o.dx(ou1))
             + lu0 * o.dx(u) + u * o.dx(lu0)
             + (Z * _col(ov0y) + ov1 + lv1) * o.dz(u)
             + (0.5 * Z ** 2 * _col(ov0yy) + Z * _col(ov1y) + lv2 - lv2[:, :1]) * o.dz(lu0)
             + lv1 * _col(ou0y))


def dt_layer(g, rhs, u, c, **kw):
    """Time derivative of a layer profile from its own equation."""
    return u @ g.D2z.T + rhs(g, u, c, **kw)


def dt_partner(g, dtu):
    """Time derivative of the wall-normal partner from that of ``u``."""
    return _vp(g, dtu)


def pressure_corrector(g, c, dt_lv3):
    """Pressure corrector from the wall-normal balance of the leading layer velocity.

    Integrated down from Z_max so it vanishes there.
    """
    o = _Ops(g)
    lv3, lu1 = c["lv3"], c["lu1"]
    ou0, ov0y = c["ou0"], c["ov0_y"]
    rhs = (o.dzz(lv3) - (dt_lv3 + _col(ou0) * o.dx(lv3) + lv3 * _col(ov0y)
                         + o.Z * _col(o.dx(ov0y)) * lu1 + o.Z * _col(ov0y) * o.dz(lv3)))
    C = g.Cz
    return -(rhs @ (C[-1][None, :] - C).T), rhs


def pressure_corrector_one(g, c, dt_lv1):
    """Friction-exponent-1 analogue built from the first wall-normal layer velocity."""
    o = _Ops(g)
    lv1, lu0 = c["lv1"], c["lu0"]
    ou0, ov0y = c["ou0"], c["ov0_y"]
    ov1 = -lv1[:, :1]
    rhs = (o.dzz(lv1) - (dt_lv1 + (_col(ou0) + lu0) * o.dx(lv1)
                         + lu0 * (o.dx(ov1) + o.Z * _col(o.dx(ov0y)))
                         + (lv1 + ov1 + o.Z * _col(ov0y)) * o.dz(lv1) + lv1 * _col(ov0y)))
    C = g.Cz
    return -(rhs @ (C[-1][None, :] - C).T), rhs


# ---------------------------------------------------------------------------
# time stepping

@dataclass
class LayerHistory:
    grid: object
    dt: float
    u: np.ndarray                  # (n_steps + 1, n_x, n_z)
    order: int
    robin: float = 0.0
    wall_data: np.ndarray | None = None   # imposed right-hand side of the wall row per step
    boundary_residual: np.ndarray | None = None

    @property
    def times(self):
        return self.dt * np.arange(self.u.shape[0])

    def index(self, t):
        n = int(round(t / self.dt))
        if abs(n * self.dt - t) > 1e-9:
            raise KeyError(f"t={t} is not a stored step")
        return n

    def v(self, n):
        return _vp(self.grid, self.u[n])

    def v_wall(self):
        """Wall trace of the wall-normal partner at every step, shape (n_steps + 1, n_x)."""
        return np.stack([wall_integral(self.grid, dx_spectral(u)) for u in self.u])

    def profile(self, t):
        n = self.index(t)
        g = self.grid
        return LayerProfile(Field(g, self.u[n], LAYER), Field(g, self.v(n), LAYER), t, self.order,
                            {"robin": self.robin, "residual": float(self.boundary_residual[n])})


class LayerIMEX:
    """Crank-Nicolson diffusion with Adams-Bashforth-2 explicit terms.

    The wall row imposes ``d_z u(0) - robin * u(0) = data``; the far row sets
    ``u(Z_max) = 0``. The first step is two backward-Euler half steps, which
    damps the start-up incompatibility between zero data and the wall row.
    """

    def __init__(self, grid, dt, robin=0.0, startup=True):
        g = grid
        self.g, self.dt, self.robin, self.startup = g, dt, robin, startup
        n = g.n_z
        self.A_cn = self._matrix(dt / 2)
        self.B_cn = np.eye(n) + dt / 2 * g.D2z
        self.B_cn[0] = 0.0
        self.B_cn[-1] = 0.0

    def _matrix(self, theta_dt):
        g = self.g
        A = np.eye(g.n_z) - theta_dt * g.D2z
        A[0] = g.D1z[0]
        A[0, 0] -= self.robin
        A[-1] = 0.0
        A[-1, -1] = 1.0
        return lu_factor(A)

    def residual(self, u, data):
        g = self.g
        return np.max(np.abs(u @ g.D1z[0] - self.robin * u[:, 0] - data))

    def run(self, T, explicit, wall_data, init=None, monitor=None):
        g, dt = self.g, self.dt
        nsteps = int(round(T / dt))
        if abs(nsteps * dt - T) > 1e-9 * max(1.0, T):
            raise ValueError("T must be an integer multiple of dt")
        U = np.zeros((nsteps + 1, g.n_x, g.n_z))
        if init is not None:
            U[0] = init
        data = np.zeros((nsteps + 1, g.n_x))
        res = np.zeros(nsteps + 1)
        data[0] = wall_data(0)
        res[0] = self.residual(U[0], data[0]) if init is not None else 0.0
        N_prev = None
        for n in range(nsteps):
            N = explicit(n, U[n])
            data[n + 1] = wall_data(n + 1)
            if n == 0 and self.startup:
                A_half = self._matrix(dt / 2)
                u = U[0]
                for _ in range(2):
                    b = u + dt / 2 * N
                    u = self._solve(A_half, b, data[1])
                U[1] = u
            else:
                ab = N if N_prev is None else 1.5 * N - 0.5 * N_prev
                b = U[n] @ self.B_cn.T + dt * ab
                U[n + 1] = self._solve(self.A_cn, b, data[n + 1])
            N_prev = N
            res[n + 1] = self.residual(U[n + 1], data[n + 1])
            if not np.all(np.isfinite(U[n + 1])):
                raise BlowUpError(f"non-finite layer profile at step {n + 1}")
            if monitor is not None:
                monitor(n + 1, U[n + 1])
        return U, data, res

    def _solve(self, lu, b, wall):
        b = np.array(b, copy=True)
        b[:, 0] = wall
        b[:, -1] = 0.0
        return lu_solve(lu, b.T).T


def check_decay(g, U, what, tol=None):
    """Profiles must have decayed near Z_max (checked over the outer unit of the layer grid)."""
    tol = g.decay_tol if tol is None else tol
    far = g.z_nodes >= g.Z_max - 1.0
    worst = float(np.max(np.abs(U[..., far])))
    if worst > tol:
        raise DecayError(f"{what}: |u| = {worst:.2e} near Z_max exceeds {tol:.1e}; enlarge Z_max")
    return worst


# ---------------------------------------------------------------------------
# stage drivers. ``ctx(n)`` returns the dict of traces and earlier stages at step n.

def _run_stage(g, T, dt, rhs, ctx, wall, robin=0.0, order=0, init=None, monitor=None, **kw):
    stepper = LayerIMEX(g, dt, robin=robin)
    U, data, res = stepper.run(T, lambda n, u: rhs(g, u, ctx(n), **kw), wall, init, monitor)
    check_decay(g, U, f"layer order {order}")
    return LayerHistory(g, dt, U, order, robin, data, res)


def solve_up1(g, ctx, T, dt, beta, transport="level0"):
    """Leading slip-layer corrector: Neumann data ``beta * ou0``."""
    return _run_stage(g, T, dt, rhs_layer1, ctx, lambda n: beta * ctx(n)["ou0"], order=1,
                      transport=transport)


def solve_up2(g, ctx, T, dt, beta):
    def wall(n):
        c = ctx(n)
        return beta * (c.get("ou1", 0.0) + c["lu1"][:, 0]) - c["ou0_y"]
    return _run_stage(g, T, dt, rhs_layer2, ctx, wall, order=2)


def solve_up3(g, ctx, T, dt, beta):
    def wall(n):
        c = ctx(n)
        return beta * (c.get("ou2", 0.0) + c["lu2"][:, 0]) - c.get("ou1_y", 0.0)
    return _run_stage(g, T, dt, rhs_layer3, ctx, wall, order=3)


def solve_nonlinear_prandtl_robin(g, ctx, T, dt, beta, growth_limit=1e3):
    """Nonlinear layer with the Robin wall row ``d_z u - beta u = beta ou0``.

    Solved for the corrector ``u`` (the full tangential layer velocity is
    ``u + ou0``). Aborts when ``max |d_z u|`` grows past ``growth_limit`` times
    its first nonzero value.
    """
    ref = {}

    def monitor(n, u):
        s = float(np.max(np.abs(u @ g.D1z.T)))
        if "s" not in ref and s > 0:
            ref["s"] = s
        elif "s" in ref and s > growth_limit * ref["s"]:
            raise BlowUpError(f"layer gradient grew by more than {growth_limit:g}x at step {n}; "
                              "outside the validated short-time regime")

    return _run_stage(g, T, dt, rhs_layer0_nonlinear, ctx, lambda n: beta * ctx(n)["ou0"],
                      robin=beta, order=0, monitor=monitor)


def solve_up1_one(g, ctx, T, dt, beta):
    """First corrector for friction exponent 1: Robin row ``d_z u - beta u = beta ou1 - d_y ou0``."""
    def wall(n):
        c = ctx(n)
        return beta * c["ou1"] - c["ou0_y"]
    return _run_stage(g, T, dt, rhs_layer1_one, ctx, wall, robin=beta, order=1)


def solve_pp5(g, c, dt_lv3):
    """Pressure corrector as a layer Field; ``dt_lv3`` from :func:`dt_vp`."""
    p, _ = pressure_corrector(g, c, dt_lv3)
    return Field(g, p, LAYER)


def plugback_residual(hist, rhs, ctx, n, **kw):
    """Discrete-in-time residual at the half step n + 1/2 using centred stencils.

    Uses fourth-order centred z-stencils independent of the solver's operators.
    """
    from .grid import diff_matrix
    g = hist.grid
    D2 = diff_matrix(g.z_nodes, 2, 5)
    u0, u1 = hist.u[n], hist.u[n + 1]
    dudt = (u1 - u0) / hist.dt
    f0 = u0 @ D2.T + rhs(g, u0, ctx(n), **kw)
    f1 = u1 @ D2.T + rhs(g, u1, ctx(n + 1), **kw)
    r = dudt - 0.5 * (f0 + f1)
    return r[:, 1:-1]
