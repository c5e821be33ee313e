"""Viscous flow on the strip with the Navier friction wall, and the error fields it defines.

The solver works in vorticity-streamfunction form. Each non-mean Fourier
mode solves one coupled (vorticity, streamfunction) system per step, with the
wall conditions imposed on the streamfunction: impermeability as a Dirichlet
row and the friction law ``beta*u = eps^gamma * d_y u`` as a derivative row.
The wall vorticity is a free unknown of that system. The x-mean of ``u`` obeys
the mean momentum balance with the same friction law. Velocities come from
the streamfunction, so the discrete divergence vanishes to roundoff.

Time stepping is Crank-Nicolson for viscosity and Adams-Bashforth-2 for
advection and forcing; the first step is two backward-Euler half steps.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .euler import CFLError, SolverError, euler_pressure
from .grid import Field, dx_spectral, wavenumbers
from .poisson import Neumann, solve_poisson

log = logging.getLogger(__name__)

__all__ = [
    "NSState", "NSHistory", "NSIntegrator", "ErrorState", "Energies", "step_ns", "solve_ns",
    "ns_from_approx", "error_fields", "error_series", "compute_eta", "eta_residual",
    "error_pressure_solve", "pressure_agreement", "energy_functionals", "SolverError", "CFLError",
]


@dataclass
class NSState:
    u: Field
    v: Field
    p: Field | None
    omega: Field
    t: float
    epsilon: float
    gamma: float
    beta: float
    psi: np.ndarray = field(repr=False, default=None)        # non-mean streamfunction
    vort: np.ndarray = field(repr=False, default=None)       # solver vorticity (non-mean, free wall value)
    mean_u: np.ndarray = field(repr=False, default=None)
    adv_prev: tuple | None = field(repr=False, default=None)  # explicit tendencies of the last step

    @property
    def grid(self):
        return self.u.grid

    @classmethod
    def from_streamfunction(cls, grid, psi, mean_u, epsilon, gamma, beta, t=0.0):
        psi = _drop_nyquist(_nonmean(np.asarray(psi, dtype=float)))
        vort = dx_spectral(psi, 2) + psi @ grid.D2y.T
        return _assemble(grid, psi, vort, np.asarray(mean_u, dtype=float), t,
                         epsilon, gamma, beta, None)

    @classmethod
    def from_velocity(cls, u, v, epsilon, gamma, beta, t=0.0):
        """State whose streamfunction reproduces ``v``; ``u`` contributes its x-mean only.

        The non-mean part of ``u`` is rebuilt from the streamfunction, which
        agrees with the given ``u`` whenever the pair is divergence-free.
        """
        g = u.grid
        vh = np.fft.rfft(v.values, axis=0)
        k = wavenumbers(g.n_x)
        ph = np.zeros_like(vh)
        ph[1:] = 1j * vh[1:] / k[1:, None]
        psi = np.fft.irfft(ph, n=g.n_x, axis=0)
        return cls.from_streamfunction(g, psi, u.values.mean(axis=0), epsilon, gamma, beta, t)

    def energy(self):
        return kinetic_energy(self.grid, self.u.values, self.v.values)

    def divergence(self):
        g = self.grid
        return float(np.max(np.abs(dx_spectral(self.u.values) + self.v.values @ g.D1y.T)))

    def robin_residual(self):
        g = self.grid
        u = self.u.values
        return float(np.max(np.abs(self.beta * u[:, 0] - self.epsilon ** self.gamma * (u @ g.D1y[0]))))


def _nonmean(a):
    return a - a.mean(axis=0, keepdims=True)


def _drop_nyquist(a):
    F = np.fft.rfft(a, axis=0)
    F[-1] = 0.0
    return np.fft.irfft(F, n=a.shape[0], axis=0)


def _assemble(g, psi, vort, mean_u, t, eps, gamma, beta, adv_prev):
    u = psi @ g.D1y.T + mean_u[None, :]
    v = -dx_spectral(psi)
    omega = u @ g.D1y.T - dx_spectral(v)
    return NSState(Field(g, u), Field(g, v), None, Field(g, omega), t, eps, gamma, beta,
                   psi, vort, mean_u, adv_prev)


def kinetic_energy(g, u, v):
    return 0.5 * g.dx * float(np.sum((u ** 2 + v ** 2) * g.qy[None, :]))


def energy_rates(g, u, v, eps, gamma, beta):
    """Viscous dissipation and wall friction loss; ``dE/dt = -(dissipation + wall)``."""
    D1 = g.D1y
    grad2 = sum(a ** 2 for a in (dx_spectral(u), u @ D1.T, dx_spectral(v), v @ D1.T))
    dissipation = eps ** 2 * g.dx * float(np.sum(grad2 * g.qy[None, :]))
    wall = beta * eps ** (2 - gamma) * g.dx * float(np.sum(u[:, 0] ** 2))
    return dissipation, wall


class NSIntegrator:
    """Cached factorizations for one (grid, eps, gamma, beta, dt)."""

    def __init__(self, grid, epsilon, gamma, beta, dt, forcing=None, cfl_max=1.0, free_slip=False):
        self.grid, self.dt, self.forcing, self.cfl_max = grid, dt, forcing, cfl_max
        self.free_slip = free_slip
        self.eps, self.gamma, self.beta = float(epsilon), float(gamma), float(beta)
        self.nu = self.eps ** 2
        self.k = wavenumbers(grid.n_x)
        theta = dt / 2
        self.theta = theta
        self.mode_lu = [lu_factor(self._mode_matrix(k, theta)) for k in self.k[1:-1]]
        self.mean_lu = lu_factor(self._mean_matrix(theta))

    def _mode_matrix(self, k, theta):
        g = self.grid
        n = g.n_y
        D1, D2 = g.D1y, g.D2y
        eye = np.eye(n)
        L = D2 - k * k * eye
        A = np.zeros((2 * n, 2 * n))
        # vorticity block: friction law on the wall row, evolution inside, zero at the lid
        if self.free_slip:
            A[0, 0] = 1.0
        else:
            A[0, n:] = self.beta * D1[0] - self.eps ** self.gamma * (D1[0] @ D1)
        A[1:n - 1, :n] = (eye - theta * self.nu * L)[1:n - 1]
        A[n - 1, n - 1] = 1.0
        # streamfunction block: impermeable wall and lid, Poisson link inside
        A[n, n] = 1.0
        A[n + 1:2 * n - 1, :n] = eye[1:n - 1]
        A[n + 1:2 * n - 1, n:] = -L[1:n - 1]
        A[2 * n - 1, 2 * n - 1] = 1.0
        return A

    def _mean_matrix(self, theta):
        g = self.grid
        n = g.n_y
        A = np.eye(n) - theta * self.nu * g.D2y
        A[0] = -self.eps ** self.gamma * g.D1y[0]
        if self.free_slip:
            A[0] = g.D1y[0]
        else:
            A[0, 0] += self.beta
        A[-1] = g.D1y[-1]
        return A

    # explicit part -------------------------------------------------------
    def explicit(self, state: NSState):
        g = self.grid
        u, v = state.u.values, state.v.values
        w = state.vort + (g.D1y @ state.mean_u)[None, :]
        adv = -(u * dx_spectral(w) + v * (w @ g.D1y.T))
        mean = -g.D1y @ np.mean(u * v, axis=0)
        if self.forcing is not None:
            fo, fm = self.forcing(state.t)
            adv = adv + fo
            mean = mean + fm
        return _nonmean(adv), mean

    def check_cfl(self, state):
        g = self.grid
        hy = np.diff(g.y_nodes)
        hy = np.concatenate([hy[:1], np.minimum(hy[1:], hy[:-1]), hy[-1:]])
        c = self.dt * float(np.max(np.abs(state.u.values) * (g.n_x / 2)
                                   + np.abs(state.v.values) / hy[None, :]))
        if c > self.cfl_max:
            raise CFLError(f"advective CFL number {c:.3f} exceeds {self.cfl_max} at t={state.t:.6g}")
        return c

    # implicit solves -----------------------------------------------------
    def _solve(self, vort_rhs, mean_rhs):
        g = self.grid
        n = g.n_y
        Wh = np.fft.rfft(vort_rhs, axis=0)
        out_w = np.zeros_like(Wh)
        out_p = np.zeros_like(Wh)
        for i, lu in enumerate(self.mode_lu, start=1):
            b = np.zeros(2 * n, dtype=complex)
            b[1:n - 1] = Wh[i, 1:n - 1]
            sol = lu_solve(lu, np.stack([b.real, b.imag], axis=1))
            x = sol[:, 0] + 1j * sol[:, 1]
            out_w[i], out_p[i] = x[:n], x[n:]
        vort = np.fft.irfft(out_w, n=g.n_x, axis=0)
        psi = np.fft.irfft(out_p, n=g.n_x, axis=0)
        b = mean_rhs.copy()
        b[0] = b[-1] = 0.0
        return vort, psi, lu_solve(self.mean_lu, b)

    def _explicit_diffusion(self, vort, mean_u, theta):
        g = self.grid
        lap = dx_spectral(vort, 2) + vort @ g.D2y.T
        return vort + theta * self.nu * lap, mean_u + theta * self.nu * (g.D2y @ mean_u)

    def step(self, state: NSState) -> NSState:
        dt = self.dt
        self.check_cfl(state)
        N = self.explicit(state)
        g = self.grid
        if state.adv_prev is None:
            cur = state
            for _ in range(2):
                vort, psi, mean = self._solve(cur.vort + dt / 2 * N[0], cur.mean_u + dt / 2 * N[1])
                cur = _assemble(g, psi, vort, mean, state.t, self.eps, self.gamma, self.beta, None)
        else:
            P = state.adv_prev
            ab_w = 1.5 * N[0] - 0.5 * P[0]
            ab_m = 1.5 * N[1] - 0.5 * P[1]
            ew, em = self._explicit_diffusion(state.vort, state.mean_u, self.theta)
            vort, psi, mean = self._solve(ew + dt * ab_w, em + dt * ab_m)
        new = _assemble(g, psi, vort, mean, state.t + dt, self.eps, self.gamma, self.beta, N)
        if not (np.all(np.isfinite(new.vort)) and np.all(np.isfinite(new.mean_u))):
            raise SolverError(f"non-finite vorticity at t={new.t:.6g}", state=state)
        return new


_INTEGRATORS: dict = {}


def _integrator(grid, eps, gamma, beta, dt, forcing=None, cfl_max=1.0, free_slip=False):
    if forcing is not None or free_slip:
        return NSIntegrator(grid, eps, gamma, beta, dt, forcing, cfl_max, free_slip)
    key = (id(grid), eps, gamma, beta, dt, cfl_max)
    hit = _INTEGRATORS.get(key)
    if hit is None or hit.grid is not grid:
        if len(_INTEGRATORS) > 8:
            _INTEGRATORS.clear()
        hit = NSIntegrator(grid, eps, gamma, beta, dt, None, cfl_max)
        _INTEGRATORS[key] = hit
    return hit


def step_ns(state: NSState, dt, forcing=None, cfl_max=1.0) -> NSState:
    """One time step. Pass the returned state back in to continue with AB2."""
    it = _integrator(state.grid, state.epsilon, state.gamma, state.beta, dt, forcing, cfl_max)
    return it.step(state)


def ns_pressure(state: NSState) -> Field:
    return euler_pressure(state, viscosity=state.epsilon ** 2)


@dataclass
class NSHistory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    log: list = field(default_factory=list)      # one dict per step

    def at(self, t, tol=1e-12):
        for tt, s in zip(self.times, self.states):
            if abs(tt - t) < tol:
                return s
        raise KeyError(f"no stored state at t={t}")

    def write_log(self, path):
        if not self.log:
            return
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(self.log[0]))
            w.writeheader()
            for row in self.log:
                w.writerow({k: f"{v:.10e}" if isinstance(v, float) else v for k, v in row.items()})


LOG_COLUMNS = ("step", "t", "energy", "dissipation", "wall_loss", "balance_residual",
               "divergence_max", "robin_residual", "cfl")


def solve_ns(init: NSState, T, dt, output_times=None, forcing=None, cfl_max=1.0,
             energy_growth=1e3, pressure=True, log_path=None, dump_dir=None,
             on_step=None, free_slip=False) -> NSHistory:
    """Integrate to ``init.t + T``; states are kept at ``output_times``.

    Each step appends the energy budget and invariant checks to the log.
    Energy above ``energy_growth`` times its initial value, a CFL violation
    or a non-finite field aborts the run (dumping the last good state into
    ``dump_dir`` when given). ``free_slip`` replaces the friction law by a
    vanishing wall vorticity (reference runs only).
    """
    nsteps = int(round(T / dt))
    if abs(nsteps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be an integer multiple of dt")
    if output_times is None:
        output_times = [init.t, init.t + T]
    out_steps = {int(round((t - init.t) / dt)): t for t in output_times}
    it = _integrator(init.grid, init.epsilon, init.gamma, init.beta, dt, forcing, cfl_max, free_slip)
    g = init.grid
    hist = NSHistory()
    state = init
    E0 = state.energy()
    prev_E, prev_rate = E0, None
    try:
        for n in range(nsteps + 1):
            E = state.energy()
            diss, wall = energy_rates(g, state.u.values, state.v.values, state.epsilon,
                                      state.gamma, state.beta)
            rate = diss + wall
            bal = 0.0 if prev_rate is None else (E - prev_E) / dt + 0.5 * (rate + prev_rate)
            hist.log.append({"step": n, "t": state.t, "energy": E, "dissipation": diss,
                             "wall_loss": wall, "balance_residual": bal,
                             "divergence_max": state.divergence(),
                             "robin_residual": state.robin_residual(), "cfl": 0.0})
            prev_E, prev_rate = E, rate
            if E0 > 0 and E > energy_growth * E0:
                raise SolverError(f"energy grew by more than {energy_growth:g} at t={state.t:.6g}",
                                  state=state)
            if n in out_steps:
                if pressure:
                    state.p = ns_pressure(state)
                hist.times.append(out_steps[n])
                hist.states.append(state)
            if on_step is not None:
                on_step(n, state)
            if n == nsteps:
                break
            hist.log[-1]["cfl"] = it.check_cfl(state)
            state = it.step(state)
    except (SolverError, CFLError) as exc:
        if dump_dir is not None:
            from .io import dump_state
            bad = getattr(exc, "state", None) or state
            path = dump_state(bad, dump_dir, "abort")
            log.error("NS run aborted; last state written to %s", path)
        raise
    finally:
        if log_path is not None:
            hist.write_log(log_path)
    return hist


def ns_from_approx(approx, t=0.0) -> NSState:
    """Start from the approximate solution (the error vanishes initially)."""
    return NSState.from_velocity(approx.u(t), approx.v(t), approx.epsilon, approx.gamma,
                                 approx.beta, t)


# ---------------------------------------------------------------------------
# error fields

@dataclass
class ErrorState:
    u: Field
    v: Field
    p: Field | None
    omega_err: Field
    eta: Field
    tilde_v: Field
    t: float
    epsilon: float
    gamma: float
    beta: float
    g: np.ndarray                          # g0 + eps d_x f used for eta
    boundary: dict = field(default_factory=dict)
    dt_eta: Field | None = None

    @property
    def grid(self):
        return self.u.grid


def error_fields(ns: NSState, approx, check_tol=None) -> ErrorState:
    """Solution minus approximation, with eta and the wall relations of the error."""
    if ns.grid is not approx.grid:
        raise ValueError("NS state and approximation live on different grids")
    t = ns.t
    if not any(abs(t - s) < 1e-9 for s in approx.profiles.stored_times or approx.times):
        raise ValueError(f"approximation has no stored state at t={t}")
    t = min(approx.profiles.stored_times or approx.times, key=lambda s: abs(s - t))
    if abs(ns.epsilon - approx.epsilon) > 1e-14 or ns.gamma != approx.gamma:
        raise ValueError("parameters of the NS run and the approximation differ")
    g = ns.grid
    eps, gam, beta = ns.epsilon, ns.gamma, ns.beta
    c = approx.composite(t)
    bd = approx.boundary_data(t)
    u = ns.u.values - c["u"]["val"]
    v = ns.v.values - c["v"]["val"]
    p = None if ns.p is None else Field(g, ns.p.values - c["p"]["val"])
    om = ns.omega.values - (c["u"]["y"] - c["v"]["x"])
    decay = np.exp(-g.y_nodes)[None, :]
    tv = v + eps ** 2 * bd["f"][:, None] * decay
    uy_wall = ns.u.values @ g.D1y[0] - c["u"]["y"][:, 0]
    boundary = {
        "wall_flux": float(np.max(np.abs(v[:, 0] + eps ** 2 * bd["f"]))),
        "wall_slip": float(np.max(np.abs(uy_wall - beta * eps ** (-gam) * u[:, 0] - eps * bd["g0"]))),
        "tilde_v_wall": float(np.max(np.abs(tv[:, 0]))),
    }
    err = ErrorState(Field(g, u), Field(g, v), p, Field(g, om), None, Field(g, tv), t,
                     eps, gam, beta, bd["g"].copy(), boundary)
    err.eta = compute_eta(err, err.g)
    err.boundary["eta_wall"] = float(np.max(np.abs(err.eta.values[:, 0])))
    if check_tol is not None:
        bad = {k: v for k, v in err.boundary.items() if v > check_tol}
        if bad:
            raise ValueError(f"error boundary relations violated: {bad}")
    return err


def compute_eta(err: ErrorState, g) -> Field:
    """Modified vorticity: vorticity error minus its wall-lift."""
    grid = err.grid
    g = np.asarray(g, dtype=float)
    lift = err.beta * err.epsilon ** (-err.gamma) * err.u.values \
        + err.epsilon * g[:, None] * np.exp(-grid.y_nodes)[None, :]
    return Field(grid, err.omega_err.values - lift)


def _time_derivative(times, values, t):
    """Derivative at ``t`` from stored samples: centred (fourth or second order) where possible."""
    times = np.asarray(times)
    i = int(np.argmin(np.abs(times - t)))
    if 1 < i < len(times) - 2 and np.ptp(np.diff(times[i - 2:i + 3])) < 1e-12:
        h = times[i + 1] - times[i]
        return (values[i - 2] - 8 * values[i - 1] + 8 * values[i + 1] - values[i + 2]) / (12 * h)
    if 0 < i < len(times) - 1:
        h0, h1 = times[i] - times[i - 1], times[i + 1] - times[i]
        if abs(h0 - h1) < 1e-12:
            return (values[i + 1] - values[i - 1]) / (2 * h0)
    if i + 2 < len(times):
        h = times[i + 1] - times[i]
        return (-3 * values[i] + 4 * values[i + 1] - values[i + 2]) / (2 * h)
    h = times[i] - times[i - 1]
    return (3 * values[i] - 4 * values[i - 1] + values[i - 2]) / (2 * h)


def error_series(hist: NSHistory, approx, times=None):
    """Error states at ``times`` (default: the approximation's output times) with ``dt_eta`` set.

    Needs the NS run and the approximation stored at neighbouring steps
    (pipeline ``stencil=True`` and NS output at the same times).
    """
    times = approx.times if times is None else times
    errs = {t: error_fields(s, approx) for t, s in zip(hist.times, hist.states)}
    st = sorted(errs)
    out = []
    for t in times:
        e = errs[min(st, key=lambda s: abs(s - t))]
        idx = [s for s in st if abs(s - t) <= 2.5 * approx.profiles.dt]
        if len(idx) >= 3:
            e.dt_eta = Field(e.grid, _time_derivative(idx, [errs[s].eta.values for s in idx], t))
        out.append(e)
    return out


def eta_residual(err: ErrorState, approx, R1, R2, h) -> Field:
    """Pointwise defect of the modified vorticity equation."""
    if err.dt_eta is None:
        raise ValueError("eta_residual needs dt_eta (see error_series)")
    g = err.grid
    eps, gam, beta = err.epsilon, err.gamma, err.beta
    D1, D2 = g.D1y, g.D2y
    t = err.t
    c = approx.composite(t)
    bd = approx.boundary_data(t)
    decay = np.exp(-g.y_nodes)[None, :]
    f = bd["f"][:, None]
    fx = dx_spectral(bd["f"])[:, None]
    ua, va = c["u"], c["v"]
    tva = va["val"] - eps ** 2 * f * decay
    # eta of the approximation and its gradient
    s = beta * eps ** (-gam)
    eta_a_x = dx_spectral(ua["y"]) - va["xx"] - s * ua["x"]
    eta_a_y = ua["yy"] - dx_spectral(va["y"]) - s * ua["y"]
    eta = err.eta.values
    ex, ey = dx_spectral(eta), eta @ D1.T
    lap = dx_spectral(eta, 2) + eta @ D2.T
    u, tv = err.u.values, err.tilde_v.values
    px = dx_spectral(err.p.values)
    r1, r2 = _vals(R1), _vals(R2)
    lhs = (err.dt_eta.values - eps ** 2 * lap + ua["val"] * ex + tva * ey
           + u * eta_a_x + tv * eta_a_y + u * ex + tv * ey - beta * px / eps ** gam)
    rhs = (r1 @ D1.T - dx_spectral(r2) + eps ** 2 * f * decay * ua["y"]
           + eps ** 2 * fx * decay * va["y"] - beta * r1 / eps ** gam + _vals(h))
    return Field(g, lhs - rhs)


def _vals(a):
    return np.asarray(getattr(a, "values", a), dtype=float)


def error_pressure_solve(err: ErrorState, approx, R2, f=None, g0=None, R1=None) -> Field:
    """Error pressure from its own Poisson problem with the wall data implied by the error system.

    ``R1`` defaults to the direct residual of the approximation at ``err.t``.
    """
    g = err.grid
    eps, gam, beta = err.epsilon, err.gamma, err.beta
    t = err.t
    c = approx.composite(t)
    bd = approx.boundary_data(t)
    f = bd["f"] if f is None else np.asarray(f, dtype=float)
    g0 = bd["g0"] if g0 is None else np.asarray(g0, dtype=float)
    if R1 is None:
        from .expansion import remainders_residual
        R1 = remainders_residual(approx, t).R1
    r1, r2 = _vals(R1), _vals(R2)
    D1 = g.D1y
    u, v, tv = err.u.values, err.v.values, err.tilde_v.values
    ua, va = c["u"], c["v"]
    tva = va["val"] - eps ** 2 * f[:, None] * np.exp(-g.y_nodes)[None, :]
    ux, uy, vx, vy = dx_spectral(u), u @ D1.T, dx_spectral(v), v @ D1.T
    F = ua["val"] * ux + tva * uy + u * ua["x"] + tv * ua["y"] + u * ux + tv * uy
    G = ua["val"] * vx + tva * vy + u * va["x"] + tv * va["y"] + u * vx + tv * vy
    src = -(dx_spectral(F) + G @ D1.T) + dx_spectral(r1) + r2 @ D1.T
    bottom = (-beta * eps ** (2 - gam) * ux[:, 0] - eps ** 3 * dx_spectral(g0) + r2[:, 0]
              + eps ** 2 * bd["dt_f"] - eps ** 4 * dx_spectral(f, 2) - ua["val"][:, 0] * vx[:, 0])
    lap_v = dx_spectral(v, 2) + v @ g.D2y.T
    top = r2[:, -1] + eps ** 2 * lap_v[:, -1] - G[:, -1]
    return solve_poisson(Field(g, src), Neumann(bottom), Neumann(top))


def pressure_agreement(p_a: Field, p_b: Field) -> float:
    """Relative L2 distance of the two pressure gradients."""
    g = p_a.grid

    def grad(p):
        return dx_spectral(p.values), p.values @ g.D1y.T

    ga, gb = grad(p_a), grad(p_b)
    w = g.qy[None, :]
    num = sum(float(np.sum((a - b) ** 2 * w)) for a, b in zip(ga, gb))
    den = sum(float(np.sum(b ** 2 * w)) for b in gb)
    return math.sqrt(num / den) if den > 0 else math.sqrt(num)


class Energies(NamedTuple):
    E: float
    F: float
    G: float


def energy_functionals(err: ErrorState, eta: Field | None = None, params=None) -> Energies:
    """The three energy quantities controlling the error, from truncated norms."""
    from . import norms
    eta = err.eta if eta is None else eta
    p = params or norms.GevreyParams(gamma=err.gamma)
    p = p.replace(t=err.t)
    g = err.grid
    eps = err.epsilon
    p3, p2 = p.replace(k=3), p.replace(k=2)

    def grads(f):
        return [Field(g, dx_spectral(f.values)), Field(g, f.values @ g.D1y.T)]

    U = (err.u, err.v)
    X3 = norms.pair_norm(U, norms.gevrey_X, p3).squared
    Y3 = norms.pair_norm(U, norms.gevrey_Y, p3).squared
    eX2 = norms.gevrey_X(eta, p2).squared
    eY2 = norms.gevrey_Y(eta, p2).squared
    gU = norms.pair_norm(grads(err.u) + grads(err.v), norms.gevrey_X, p3).squared
    ge = norms.pair_norm(grads(eta), norms.gevrey_X, p2).squared
    E = eps ** -2 * (X3 + eps ** 4) + eX2
    F = eps ** -2 * Y3 + eY2
    G = gU + eps ** 2 * ge
    return Energies(E, F, G)
