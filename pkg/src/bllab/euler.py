"""Inviscid flow on the strip in vorticity form, nonlinear and linearized.

Non-mean Fourier modes carry vorticity; the x-mean of the tangential velocity
is evolved directly from the mean momentum balance. Linearized levels are
integrated jointly with the nonlinear background so that RK4 stages see a
consistent background at intermediate times.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .grid import Field, dx_spectral
from .poisson import StreamSolver, modal_poisson

log = logging.getLogger(__name__)


class CFLError(RuntimeError):
    pass


class SolverError(RuntimeError):
    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


@dataclass
class EulerState:
    grid: object
    u: Field
    v: Field
    omega: Field
    t: float = 0.0
    p: Field | None = None
    mean_u: np.ndarray | None = None

    @classmethod
    def from_vorticity(cls, grid, omega, t=0.0, v_boundary=None, mean_u=None):
        """Build a consistent state; ``mean_u`` defaults to rest at the lid."""
        omega = np.asarray(omega, dtype=float)
        om_nm = omega - omega.mean(axis=0, keepdims=True)
        if mean_u is None:
            from .poisson import mean_flow_from_vorticity
            mean_u = mean_flow_from_vorticity(grid, omega.mean(axis=0))
        return _state_from(grid, om_nm, np.asarray(mean_u, float), t, v_boundary)

    def energy(self):
        w = self.grid.wy
        return 0.5 * float(np.sum((self.u.values ** 2 + self.v.values ** 2) * w[None, :]) * self.grid.dx)

    def traces(self):
        return wall_traces(self.grid, self.u.values, self.v.values)


def _state_from(grid, om_nm, mean_u, t, v_boundary):
    u, v, _ = StreamSolver(grid).velocity(om_nm, v_boundary, mean_u)
    omega = om_nm + (grid.D1y @ mean_u)[None, :]
    return EulerState(grid, Field(grid, u), Field(grid, v), Field(grid, omega), t, None, mean_u.copy())


def wall_traces(grid, u, v):
    """Wall values and one-sided wall-normal derivatives of a velocity pair."""
    D1, D2 = grid.D1y[0], grid.D2y[0]
    return {
        "u": u[:, 0].copy(), "u_y": u @ D1, "u_yy": u @ D2,
        "v": v[:, 0].copy(), "v_y": v @ D1, "v_yy": v @ D2,
    }


@dataclass
class LinearLevel:
    """A linearized level about the nonlinear background.

    ``v_bottom(t)`` gives the wall-normal velocity on the wall (zero x-mean);
    ``forcing(t)`` optionally returns ``(F_omega, F_mean)`` arrays.
    """
    j: int
    v_bottom: object = None
    forcing: object = None
    init: EulerState | None = None


@dataclass
class EulerHistory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)      # level-0 states at output times
    linear: dict = field(default_factory=dict)      # j -> list of states at output times
    energy: list = field(default_factory=list)      # (t, E) for level 0 at every step

    def at(self, t, j=0, tol=1e-12):
        seq = self.states if j == 0 else self.linear[j]
        for tt, s in zip(self.times, seq):
            if abs(tt - t) < tol:
                return s
        raise KeyError(f"no stored state at t={t}")


def _velocity(stream, om_nm, mean_u, vb):
    u, v, _ = stream.velocity(om_nm, vb, mean_u)
    return u, v


class EulerIntegrator:
    """RK4 for the nonlinear level plus any number of linearized levels."""

    def __init__(self, grid, cfl_max=1.0, forcing=None):
        self.grid = grid
        self.stream = StreamSolver(grid)
        self.cfl_max = cfl_max
        self.forcing = forcing

    def _vb(self, level, t):
        return None if level.v_bottom is None else np.asarray(level.v_bottom(t), dtype=float)

    def tendencies(self, t, y0, ylin, levels):
        """Time derivatives of (omega_nm, mean_u) for every level."""
        g = self.grid
        om0, m0 = y0
        u0, v0 = _velocity(self.stream, om0, m0, None)
        w0 = om0 + (g.D1y @ m0)[None, :]
        w0x, w0y = dx_spectral(w0), w0 @ g.D1y.T
        dom0 = -(u0 * w0x + v0 * w0y)
        dm0 = -g.D1y @ np.mean(u0 * v0, axis=0)
        if self.forcing is not None:
            fo, fm = self.forcing(t)
            dom0 = dom0 + fo
            dm0 = dm0 + fm
        out0 = (_nonmean(dom0), dm0)
        outs = []
        for (om, m), lev in zip(ylin, levels):
            vb = self._vb(lev, t)
            u, v = _velocity(self.stream, om, m, vb)
            w = om + (g.D1y @ m)[None, :]
            dom = -(u0 * dx_spectral(w) + v0 * (w @ g.D1y.T) + u * w0x + v * w0y)
            dm = -g.D1y @ np.mean(u0 * v + u * v0, axis=0)
            if lev.forcing is not None:
                fo, fm = lev.forcing(t)
                dom = dom + fo
                dm = dm + fm
            outs.append((_nonmean(dom), dm))
        return out0, outs, (u0, v0)

    def check_cfl(self, dt, u, v):
        g = self.grid
        hy = np.diff(g.y_nodes)
        hy = np.concatenate([hy[:1], np.minimum(hy[1:], hy[:-1]), hy[-1:]])
        c = dt * np.max(np.abs(u) * (g.n_x / 2) + np.abs(v) / hy[None, :])
        if c > self.cfl_max:
            raise CFLError(f"advective CFL number {c:.3f} exceeds {self.cfl_max}")
        return c

    def run(self, init, T, dt, output_times=None, levels=(), on_step=None):
        g = self.grid
        nsteps = int(round(T / dt))
        if abs(nsteps * dt - T) > 1e-9 * max(1.0, T):
            raise ValueError("T must be an integer multiple of dt")
        if output_times is None:
            output_times = [init.t, init.t + T]
        out_steps = {int(round((tt - init.t) / dt)): tt for tt in output_times}
        y0 = (_nonmean(init.omega.values), init.mean_u.copy() if init.mean_u is not None
              else init.u.values.mean(axis=0))
        ylin = []
        for lev in levels:
            if lev.init is None:
                ylin.append((np.zeros((g.n_x, g.n_y)), np.zeros(g.n_y)))
            else:
                ylin.append((_nonmean(lev.init.omega.values), lev.init.mean_u.copy()))
        hist = EulerHistory()
        t = init.t
        for n in range(nsteps + 1):
            if n in out_steps or on_step is not None:
                states = self._states(t, y0, ylin, levels)
                if n in out_steps:
                    hist.times.append(out_steps[n])
                    hist.states.append(states[0])
                    for lev, s in zip(levels, states[1:]):
                        hist.linear.setdefault(lev.j, []).append(s)
                if on_step is not None:
                    on_step(n, t, states)
                hist.energy.append((t, states[0].energy()))
            if n == nsteps:
                break
            y0, ylin = self._rk4(t, dt, y0, ylin, levels)
            t = init.t + (n + 1) * dt
            if not (np.all(np.isfinite(y0[0])) and all(np.all(np.isfinite(a[0])) for a in ylin)):
                raise SolverError(f"non-finite vorticity at t={t}", state=(y0, ylin))
        return hist

    def _states(self, t, y0, ylin, levels):
        g = self.grid
        out = [_state_from(g, y0[0], y0[1], t, None)]
        for (om, m), lev in zip(ylin, levels):
            out.append(_state_from(g, om, m, t, self._vb(lev, t)))
        return out

    def _rk4(self, t, dt, y0, ylin, levels):
        def add(y, k, h):
            return (y[0] + h * k[0], y[1] + h * k[1])

        k1 = self.tendencies(t, y0, ylin, levels)
        self.check_cfl(dt, *k1[2])
        y0b = add(y0, k1[0], dt / 2)
        ylb = [add(a, b, dt / 2) for a, b in zip(ylin, k1[1])]
        k2 = self.tendencies(t + dt / 2, y0b, ylb, levels)
        y0c = add(y0, k2[0], dt / 2)
        ylc = [add(a, b, dt / 2) for a, b in zip(ylin, k2[1])]
        k3 = self.tendencies(t + dt / 2, y0c, ylc, levels)
        y0d = add(y0, k3[0], dt)
        yld = [add(a, b, dt) for a, b in zip(ylin, k3[1])]
        k4 = self.tendencies(t + dt, y0d, yld, levels)

        def comb(y, a, b, c, d):
            return tuple(y[i] + dt / 6 * (a[i] + 2 * b[i] + 2 * c[i] + d[i]) for i in range(2))

        y0n = comb(y0, k1[0], k2[0], k3[0], k4[0])
        yln = [comb(y, a, b, c, d) for y, a, b, c, d in zip(ylin, k1[1], k2[1], k3[1], k4[1])]
        y0n = (_top_zero(y0n[0]), y0n[1])
        yln = [(_top_zero(a), b) for a, b in yln]
        return y0n, yln


def _nonmean(a):
    return a - a.mean(axis=0, keepdims=True)


def _top_zero(om):
    om = om.copy()
    om[:, -1] = 0.0
    return om


def solve_euler_nonlinear(init: EulerState, T, dt, output_times=None, forcing=None,
                          on_step=None, cfl_max=1.0) -> EulerHistory:
    """Advance the nonlinear vorticity equation with impermeable wall and lid."""
    return EulerIntegrator(init.grid, cfl_max, forcing).run(init, T, dt, output_times, (), on_step)


def solve_euler_linearized(j, background: EulerState, T, dt, v_bottom=None, forcing=None,
                           output_times=None, on_step=None, cfl_max=1.0,
                           background_forcing=None) -> EulerHistory:
    """Linearized level ``j`` about the nonlinear flow started from ``background``.

    The background is re-integrated alongside with the same step, which
    reproduces a standalone run bit for bit. Zero initial data.
    """
    if background is None:
        raise ValueError(f"level {j} needs the nonlinear background state")
    lev = LinearLevel(j, v_bottom, forcing)
    return EulerIntegrator(background.grid, cfl_max, background_forcing).run(
        background, T, dt, output_times, (lev,), on_step)


def euler_pressure(state: EulerState, background: EulerState | None = None, v_bottom_dt=None,
                   viscosity=0.0) -> Field:
    """Pressure from the divergence of the momentum equations.

    With ``background`` the pressure of the linearized level is returned.
    Neumann data on wall and lid come from the wall-normal momentum balance;
    ``v_bottom_dt`` is the time derivative of prescribed wall-normal data.
    A nonzero ``viscosity`` adds the viscous wall-normal stress to the
    Neumann data (the viscous term itself is divergence-free).
    The x-mean is integrated directly from the mean wall-normal balance and
    pinned to zero weighted mean.
    """
    g = state.grid
    D1 = g.D1y
    u, v = state.u.values, state.v.values
    ux, uy, vx, vy = dx_spectral(u), u @ D1.T, dx_spectral(v), v @ D1.T
    if background is None:
        src = -(ux * ux + 2 * uy * vx + vy * vy)
        nv = u * vx + v * vy
    else:
        U, V = background.u.values, background.v.values
        Ux, Uy, Vx, Vy = dx_spectral(U), U @ D1.T, dx_spectral(V), V @ D1.T
        src = -2 * (Ux * ux + Uy * vx + uy * Vx + Vy * vy)
        nv = U * vx + u * Vx + V * vy + v * Vy
    vt = np.zeros(g.n_x) if v_bottom_dt is None else np.asarray(v_bottom_dt, float)
    bottom = -(nv[:, 0] + vt)
    top = -nv[:, -1]
    if viscosity:
        lap_v = dx_spectral(v, 2) + v @ g.D2y.T
        bottom = bottom + viscosity * lap_v[:, 0]
        top = top + viscosity * lap_v[:, -1]
    solver = modal_poisson(g, "neumann", "neumann")
    sh = np.fft.rfft(src, axis=0)
    bh, th = np.fft.rfft(bottom), np.fft.rfft(top)
    ph = np.zeros_like(sh)
    from scipy.linalg import lu_solve
    for i in range(1, len(ph)):
        b = sh[i].copy()
        b[0], b[-1] = bh[i], th[i]
        sol = lu_solve(solver.factors[i], np.stack([b.real, b.imag], axis=1))
        ph[i] = sol[:, 0] + 1j * sol[:, 1]
    p = np.fft.irfft(ph, n=g.n_x, axis=0)
    mean_p = -g.Cy @ nv.mean(axis=0)
    mean_p -= np.dot(g.wy, mean_p) / g.wy.sum()
    return Field(g, p + mean_p[None, :])
