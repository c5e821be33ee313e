"""Outer/layer expansion: solve the hierarchy, assemble, and evaluate remainders.

Naming: ``ou0``/``ov3``/``op0`` are outer (inviscid) levels, ``lu1``/``lv3``/``lp5``
are layer profiles on the z-grid. Layer profiles do not depend on the viscosity,
so one :class:`ExpansionProfiles` serves every epsilon of a sweep; only the
assembly in :class:`ApproxSolution` does.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from . import prandtl as pl
from .euler import EulerState, euler_pressure, solve_euler_linearized, solve_euler_nonlinear
from .grid import Field, Grid, dx_spectral

log = logging.getLogger(__name__)

HALF, ONE = 0.5, 1.0


class PipelineError(RuntimeError):
    def __init__(self, stage, diagnostics=None, cause=None):
        msg = f"stage {stage!r} failed"
        if cause is not None:
            msg += f": {cause}"
        super().__init__(msg)
        self.stage = stage
        self.diagnostics = diagnostics or {}


class AssemblyError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# initial data

def initial_vorticity(name, grid):
    """Vorticity samples of a named initial datum; all vanish fast in y."""
    X, Y = grid.mesh()
    if name == "standard":
        return np.sin(X) * Y ** 2 * np.exp(-Y ** 2)
    if name == "zero":
        return np.zeros_like(X)
    if name == "shear":
        # u0 = exp(-y^2) - exp(-Y_max^2): a parallel flow, steady for the Euler equations
        return -2 * Y * np.exp(-Y ** 2)
    if name == "two-mode":
        return (np.sin(X) + 0.5 * np.cos(2 * X)) * Y ** 2 * np.exp(-Y ** 2)
    raise ValueError(f"unknown initial datum {name!r}")


@dataclass
class PipelineConfig:
    gamma: float = HALF
    beta: float = 1.0
    T: float = 0.25
    dt: float = 1e-3
    n_out: int = 5
    datum: str = "standard"
    transport: str = "level0"
    grid: Grid = field(default_factory=Grid)
    plugback_check: bool = True
    stencil: bool = False           # also keep the outer flow two steps either side of each output

    def __post_init__(self):
        if self.gamma not in (HALF, ONE):
            raise ValueError("gamma must be 1/2 or 1")
        if self.T <= 0 or self.dt <= 0:
            raise ValueError("T and dt must be positive")
        n = round(self.T / self.dt)
        if abs(n * self.dt - self.T) > 1e-9 * self.T:
            raise ValueError("T must be an integer multiple of dt")
        if self.transport not in ("level0", "level1"):
            raise ValueError("transport must be 'level0' or 'level1'")

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))

    def output_times(self):
        steps = np.unique(np.round(np.linspace(0, self.n_steps, self.n_out)).astype(int))
        return [float(k * self.dt) for k in steps]

    def stored_times(self):
        """Output times, plus their neighbours within two steps when ``stencil`` is set."""
        steps = {int(round(t / self.dt)) for t in self.output_times()}
        if self.stencil:
            steps |= {n + d for n in steps for d in (-2, -1, 1, 2) if 0 <= n + d <= self.n_steps}
        return [float(k * self.dt) for k in sorted(steps)]


# ---------------------------------------------------------------------------
# solved hierarchy

# layer profile order -> wall-normal partner order
PARTNER = {HALF: {1: 3, 2: 4, 3: 5}, ONE: {0: 1, 1: 2}}
OUTER_LEVEL = {HALF: 3, ONE: 1}


@dataclass
class ExpansionProfiles:
    """Time-indexed outer levels and layer profiles for one (gamma, beta, datum)."""

    grid: Grid
    gamma: float
    beta: float
    dt: float
    times: list
    transport: str
    traces: dict                      # level -> {name: (n_steps + 1, n_x)}
    outer: dict                       # level -> {t: EulerState with pressure}
    layers: dict                      # order -> LayerHistory
    diagnostics: dict = field(default_factory=dict)
    stored_times: list = field(default_factory=list)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def outer_level(self):
        return OUTER_LEVEL[self.gamma]

    def step(self, t):
        n = int(round(t / self.dt))
        if abs(n * self.dt - t) > 1e-9:
            raise KeyError(f"t={t} is not a stored step")
        return n

    def ctx(self, n, upto=None):
        return _context(self, n, upto)

    def pieces(self, t):
        """All viscosity-independent arrays needed to assemble at time ``t``."""
        if t not in self._cache:
            self._cache[t] = _pieces(self, t)
        return self._cache[t]

    def layer_profile(self, order, t):
        return self.layers[order].profile(t)


def _context(prof, n, upto=None):
    """Trace/stage dictionary at step ``n`` using layer orders below ``upto``."""
    g = prof.grid
    c = {}
    for j, tr in prof.traces.items():
        c[f"ou{j}"] = tr["u"][n]
        c[f"ou{j}_y"] = tr["u_y"][n]
        c[f"ou{j}_yy"] = tr["u_yy"][n]
        c[f"ov{j}_y"] = tr["v_y"][n]
        c[f"ov{j}_yy"] = tr["v_yy"][n]
    for k, hist in sorted(prof.layers.items()):
        if upto is not None and k >= upto:
            continue
        m = PARTNER[prof.gamma][k]
        c[f"lu{k}"] = hist.u[n]
        c[f"lv{m}"] = pl.recover_vp(hist.u[n], g)
        c[f"ov{m}"] = -c[f"lv{m}"][:, 0]
    return c


def _cached_ctx(fn, size=4):
    store = {}

    def wrapped(n):
        if n not in store:
            if len(store) >= size:
                store.pop(next(iter(store)))
            store[n] = fn(n)
        return store[n]
    return wrapped


def run_pipeline(config: PipelineConfig, epsilon=None):
    """Solve the hierarchy in dependency order and return the assembled solution.

    With ``epsilon=None`` the profiles alone are returned; otherwise an
    :class:`ApproxSolution` at that epsilon (further epsilons via ``with_epsilon``).
    """
    cfg = config
    g = cfg.grid
    omega0 = initial_vorticity(cfg.datum, g)
    init = EulerState.from_vorticity(g, omega0, 0.0)
    times = cfg.stored_times()
    prof = ExpansionProfiles(g, cfg.gamma, cfg.beta, cfg.dt, cfg.output_times(), cfg.transport,
                             {}, {}, {}, stored_times=times)
    n_steps = cfg.n_steps
    step_times = cfg.dt * np.arange(n_steps + 1)

    def recorder(level, store):
        def on_step(n, t, states):
            for key, val in states[level].traces().items():
                store.setdefault(key, np.zeros((n_steps + 1, g.n_x)))[n] = val
        return on_step

    tr0 = {}
    with _stage("outer level 0"):
        h0 = solve_euler_nonlinear(init, cfg.T, cfg.dt, times, on_step=recorder(0, tr0))
    prof.traces[0] = tr0
    prof.diagnostics["energy_drift"] = _energy_drift(h0)
    j = prof.outer_level

    def ctx_upto(k):
        return _cached_ctx(lambda n: _context(prof, n, upto=k))

    if cfg.gamma == HALF:
        with _stage("layer order 1"):
            prof.layers[1] = pl.solve_up1(g, ctx_upto(1), cfg.T, cfg.dt, cfg.beta, cfg.transport)
        lin_traces = {}
        with _stage("outer level 3"):
            h3 = _outer_linear(prof, init, 3, 1, step_times, times, None)
        with _stage("layer order 2"):
            prof.layers[2] = pl.solve_up2(g, ctx_upto(2), cfg.T, cfg.dt, cfg.beta)
        with _stage("layer order 3"):
            prof.layers[3] = pl.solve_up3(g, ctx_upto(3), cfg.T, cfg.dt, cfg.beta)
    else:
        with _stage("layer order 0 (nonlinear)"):
            prof.layers[0] = pl.solve_nonlinear_prandtl_robin(g, ctx_upto(0), cfg.T, cfg.dt, cfg.beta)
        lin_traces = {}
        with _stage("outer level 1"):
            h3 = _outer_linear(prof, init, 1, 0, step_times, times, recorder(1, lin_traces))
        prof.traces[1] = lin_traces
        with _stage("layer order 1"):
            prof.layers[1] = pl.solve_up1_one(g, ctx_upto(1), cfg.T, cfg.dt, cfg.beta)

    # the joint run re-integrates level 0; it must reproduce the standalone run
    same = all(np.array_equal(a.omega.values, b.omega.values) for a, b in zip(h0.states, h3.states))
    prof.diagnostics["outer_rerun_identical"] = bool(same)
    if not same:
        log.warning("joint outer run differs from the standalone level-0 run")

    with _stage("pressures"):
        _attach_pressures(prof, h0, h3, j)
    prof.diagnostics["boundary_residual"] = {
        k: float(np.max(h.boundary_residual)) for k, h in prof.layers.items()}
    if cfg.plugback_check:
        prof.diagnostics["plugback_residual"] = plugback_summary(prof)
    if epsilon is None:
        return prof
    return ApproxSolution(prof, epsilon)


class _stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("pipeline stage: %s", self.name)

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, PipelineError):
            diag = {}
            if isinstance(exc, pl.DecayError):
                diag["decay"] = str(exc)
            raise PipelineError(self.name, diag, exc) from exc
        return False


def _energy_drift(hist):
    e = np.array([E for _, E in hist.energy])
    return float(np.max(np.abs(e - e[0])) / e[0]) if e[0] > 0 else 0.0


def _outer_linear(prof, init, level, order, step_times, times, on_step):
    """Linearized outer level driven by the wall trace of the layer partner of ``order``."""
    vb = -prof.layers[order].v_wall()
    spline = CubicSpline(step_times, vb, axis=0)
    prof.diagnostics[f"wall_spline_{level}"] = "cubic in time through step values"
    return solve_euler_linearized(level, init, step_times[-1], prof.dt, v_bottom=spline,
                                  output_times=times, on_step=on_step)


def _attach_pressures(prof, h0, hj, j):
    g = prof.grid
    first = min(prof.layers)
    rhs = _layer_rhs(prof.gamma, first)
    prof.outer[0], prof.outer[j] = {}, {}
    for t, s0, sj in zip(h0.times, h0.states, hj.linear[j]):
        n = prof.step(t)
        c = _context(prof, n, upto=first)
        u = prof.layers[first].u[n]
        dtu = pl.dt_layer(g, rhs, u, c, **_kw(prof, first))
        dt_wall = -pl.wall_integral(g, dx_spectral(dtu))
        s0.p = euler_pressure(s0)
        sj.p = euler_pressure(sj, background=s0, v_bottom_dt=dt_wall)
        prof.outer[0][t], prof.outer[j][t] = s0, sj


def _layer_rhs(gamma, order):
    if gamma == HALF:
        return {1: pl.rhs_layer1, 2: pl.rhs_layer2, 3: pl.rhs_layer3}[order]
    return {0: pl.rhs_layer0_nonlinear, 1: pl.rhs_layer1_one}[order]


def _kw(prof, order):
    return {"transport": prof.transport} if (prof.gamma == HALF and order == 1) else {}


def plugback_summary(prof, steps=None):
    """Max discrete plug-back residual of every layer stage over sampled steps."""
    out = {}
    n_max = prof.layers[min(prof.layers)].u.shape[0] - 1
    if steps is None:
        # the start-up step sees incompatible data (zero profile, nonzero wall data); skip it
        steps = sorted({prof.step(t) - 1 for t in prof.times if prof.step(t) >= 2} | {n_max // 2})
    for k, hist in prof.layers.items():
        ctx = _cached_ctx(lambda n, k=k: _context(prof, n, upto=k))
        rhs = _layer_rhs(prof.gamma, k)
        worst = 0.0
        for n in steps:
            if n + 1 > n_max:
                continue
            r = pl.plugback_residual(hist, rhs, ctx, n, **_kw(prof, k))
            worst = max(worst, float(np.max(np.abs(r))))
        out[k] = worst
    return out


# ---------------------------------------------------------------------------
# viscosity-independent derivative bundles at one output time

@dataclass
class Pieces:
    t: float
    outer: dict       # level -> {"u"|"v"|"p": {key: array}}
    layer: dict       # "u1", "v3", "p5", ... -> {key: array on the z-grid}
    wall: dict        # trace name -> x-profile


def _outer_bundle(g, s, background=None):
    D1, D2 = g.D1y, g.D2y
    out = {}
    for name, a in (("u", s.u.values), ("v", s.v.values)):
        out[name] = {"val": a, "x": dx_spectral(a), "xx": dx_spectral(a, 2),
                     "y": a @ D1.T, "yy": a @ D2.T}
    p = s.p.values
    out["p"] = {"val": p, "x": dx_spectral(p), "y": p @ D1.T}
    u, v = out["u"], out["v"]
    if background is None:
        adv_u = u["val"] * u["x"] + v["val"] * u["y"]
        adv_v = u["val"] * v["x"] + v["val"] * v["y"]
    else:
        U, V = background["u"], background["v"]
        adv_u = U["val"] * u["x"] + V["val"] * u["y"] + u["val"] * U["x"] + v["val"] * U["y"]
        adv_v = U["val"] * v["x"] + V["val"] * v["y"] + u["val"] * V["x"] + v["val"] * V["y"]
    u["t"] = -adv_u - out["p"]["x"]
    v["t"] = -adv_v - out["p"]["y"]
    return out


def _layer_bundle(g, a, dta):
    return {"val": a, "x": dx_spectral(a), "xx": dx_spectral(a, 2),
            "z": a @ g.D1z.T, "zz": a @ g.D2z.T, "t": dta}


def _pieces(prof, t):
    g = prof.grid
    n = prof.step(t)
    j = prof.outer_level
    o0 = _outer_bundle(g, prof.outer[0][t])
    oj = _outer_bundle(g, prof.outer[j][t], background=o0)
    c = _context(prof, n)
    layer = {}
    for k in sorted(prof.layers):
        m = PARTNER[prof.gamma][k]
        u = c[f"lu{k}"]
        dtu = pl.dt_layer(g, _layer_rhs(prof.gamma, k), u, c, **_kw(prof, k))
        layer[f"u{k}"] = _layer_bundle(g, u, dtu)
        layer[f"v{m}"] = _layer_bundle(g, c[f"lv{m}"], pl.dt_partner(g, dtu))
    if prof.gamma == HALF:
        p, pz = pl.pressure_corrector(g, c, layer["v3"]["t"])
        pname = "p5"
    else:
        p, pz = pl.pressure_corrector_one(g, c, layer["v1"]["t"])
        pname = "p2"
    layer[pname] = {"val": p, "x": dx_spectral(p), "z": pz}
    wall = {}
    for lev, b in ((0, o0), (j, oj)):
        for comp in ("u", "v"):
            for key in ("val", "y", "yy"):
                wall[f"o{comp}{lev}_{key}"] = b[comp][key][:, 0]
        # reuse the traces the stages saw: wall stencils amplify reordering roundoff
        tr = prof.traces.get(lev)
        if tr is not None:
            for comp in ("u", "v"):
                for key, name in (("val", comp), ("y", f"{comp}_y"), ("yy", f"{comp}_yy")):
                    wall[f"o{comp}{lev}_{key}"] = tr[name][n]
        wall[f"ou{lev}_yt"] = b["u"]["t"] @ g.D1y[0]
        wall[f"ou{lev}_t"] = b["u"]["t"][:, 0]
    return Pieces(t, {0: o0, j: oj}, layer, wall)


# ---------------------------------------------------------------------------
# assembly

def ladder(gamma, eps):
    """(u, v, p) lists of (part name, coefficient); outer parts are ``"o<j>"``."""
    if gamma == HALF:
        s = math.sqrt(eps)
        return ([("o0", 1.0), ("o3", s ** 3), ("u1", s), ("u2", eps), ("u3", s ** 3)],
                [("o0", 1.0), ("o3", s ** 3), ("v3", s ** 3), ("v4", eps ** 2), ("v5", s ** 5)],
                [("o0", 1.0), ("o3", s ** 3), ("p5", s ** 5)])
    return ([("o0", 1.0), ("o1", eps), ("u0", 1.0), ("u1", eps)],
            [("o0", 1.0), ("o1", eps), ("v1", eps), ("v2", eps ** 2)],
            [("o0", 1.0), ("o1", eps), ("p2", eps ** 2)])


class ApproxSolution:
    """Composite approximation at one viscosity root ``epsilon``."""

    def __init__(self, profiles: ExpansionProfiles, epsilon):
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        self.profiles = profiles
        self.epsilon = float(epsilon)
        self.gamma = profiles.gamma
        self.beta = profiles.beta
        self.grid = profiles.grid
        self.times = list(profiles.times)
        self._cache = {}

    def with_epsilon(self, epsilon):
        return ApproxSolution(self.profiles, epsilon)

    @property
    def sampler(self):
        return self.grid.layer_sampler(self.epsilon)

    def sample(self, a):
        """Layer array on the z-grid -> interior grid at z = y/epsilon."""
        return a @ self.sampler.T

    def euler_parts(self, t):
        return self.profiles.pieces(t).outer

    def layer_parts(self, t):
        return self.profiles.pieces(t).layer

    def sampled(self, t):
        """Layer bundles sampled at z = y/epsilon (same keys as :meth:`layer_parts`)."""
        key = ("sampled", t)
        if key not in self._cache:
            self._cache[key] = {name: {k: self.sample(a) for k, a in b.items()}
                                for name, b in self.layer_parts(t).items()}
        return self._cache[key]

    def composite(self, t):
        """Assembled u, v, p with x, y, xx, yy and t derivatives (chain rule in the layer)."""
        key = ("composite", t)
        if key in self._cache:
            return self._cache[key]
        eps = self.epsilon
        P = self.profiles.pieces(t)
        L = self.sampled(t)
        out = {}
        for comp, terms in zip("uvp", ladder(self.gamma, eps)):
            acc = {}
            for name, coef in terms:
                if name.startswith("o"):
                    b = P.outer[int(name[1:])][comp]
                    parts = b
                else:
                    b = L[name]
                    parts = {k: v for k, v in b.items() if k not in ("z", "zz")}
                    if "z" in b:
                        parts["y"] = b["z"] / eps
                    if "zz" in b:
                        parts["yy"] = b["zz"] / eps ** 2
                for k, a in parts.items():
                    acc[k] = acc.get(k, 0.0) + coef * a
            out[comp] = acc
        self._cache[key] = out
        return out

    def u(self, t):
        return Field(self.grid, self.composite(t)["u"]["val"])

    def v(self, t):
        return Field(self.grid, self.composite(t)["v"]["val"])

    def p(self, t):
        return Field(self.grid, self.composite(t)["p"]["val"])

    def omega(self, t):
        c = self.composite(t)
        return Field(self.grid, c["u"]["y"] - c["v"]["x"])

    def boundary_data(self, t):
        """``f, f_bar, g0, g`` and time derivatives ``dt_f, dt_g`` at ``t``."""
        key = ("bdata", t)
        if key not in self._cache:
            self._cache[key] = _boundary_data(self.profiles, self.epsilon, t)
        return self._cache[key]

    def f(self, t):
        return self.boundary_data(t)["f"]

    def f_bar(self, t):
        return self.boundary_data(t)["f_bar"]

    def g0(self, t):
        return self.boundary_data(t)["g0"]

    def g(self, t):
        return self.boundary_data(t)["g"]

    def boundary_identities(self, t):
        """Max defects of divergence, wall flux and the wall slip relation."""
        eps, c = self.epsilon, self.composite(t)
        bd = self.boundary_data(t)
        div = c["u"]["x"] + c["v"]["y"]
        slip = (c["u"]["y"][:, 0] - self.beta * eps ** (-self.gamma) * c["u"]["val"][:, 0]
                + eps * bd["g0"])
        return {
            "divergence": float(np.max(np.abs(div))),
            "wall_flux": float(np.max(np.abs(c["v"]["val"][:, 0] - eps ** 2 * bd["f"]))),
            "wall_slip": float(np.max(np.abs(slip))),
            "g_split": float(np.max(np.abs(bd["g"] - bd["g0"] - eps * dx_spectral(bd["f"])))),
        }


def _boundary_data(prof, eps, t):
    g = prof.grid
    P = prof.pieces(t)
    L, W = P.layer, P.wall
    integ = lambda a: pl.wall_integral(g, a)  # noqa: E731
    if prof.gamma == HALF:
        s = math.sqrt(eps)
        f = L["v4"]["val"][:, 0] + s * L["v5"]["val"][:, 0]
        dt_f = L["v4"]["t"][:, 0] + s * L["v5"]["t"][:, 0]
        f_bar = integ(L["u2"]["val"] + s * L["u3"]["val"])
        dt_f_bar = integ(L["u2"]["t"] + s * L["u3"]["t"])
        g0 = (prof.beta * (W["ou3_val"] + L["u3"]["val"][:, 0]) - s * W["ou3_y"])
        dt_g0 = (prof.beta * (W["ou3_t"] + L["u3"]["t"][:, 0]) - s * W["ou3_yt"])
    else:
        f = L["v2"]["val"][:, 0]
        dt_f = L["v2"]["t"][:, 0]
        f_bar = integ(L["u1"]["val"])
        dt_f_bar = integ(L["u1"]["t"])
        g0 = -W["ou1_y"]
        dt_g0 = -W["ou1_yt"]
    return {"f": f, "dt_f": dt_f, "f_bar": f_bar, "dt_f_bar": dt_f_bar, "g0": g0,
            "dt_g0": dt_g0, "g": g0 + eps * dx_spectral(f),
            "dt_g": dt_g0 + eps * dx_spectral(dt_f)}


def compute_f_g0(profiles, epsilon, gamma=None, t=None, tol=1e-8):
    """Wall profiles ``(f, f_bar, g0)``; checks that f is the x-derivative of f_bar."""
    if gamma is not None and gamma != profiles.gamma:
        raise ValueError("gamma does not match the solved profiles")
    t = profiles.times[-1] if t is None else t
    bd = _boundary_data(profiles, epsilon, t)
    mismatch = float(np.max(np.abs(bd["f"] - dx_spectral(bd["f_bar"]))))
    if mismatch > tol:
        raise AssemblyError(f"f differs from d_x f_bar by {mismatch:.2e}")
    return bd["f"], bd["f_bar"], bd["g0"]


# ---------------------------------------------------------------------------
# remainders

@dataclass
class Remainders:
    R1: Field
    R2: Field
    groups: dict = field(default_factory=dict)   # name -> (R1 part, R2 part)

    def __iter__(self):
        return iter((self.R1, self.R2))


def remainders_residual(approx: ApproxSolution, t=None) -> Remainders:
    """Momentum residual of the composite, with the wall-flux damping term."""
    t = approx.times[-1] if t is None else t
    eps = approx.epsilon
    c = approx.composite(t)
    u, v, p = c["u"], c["v"], c["p"]
    damp = eps ** 2 * approx.f(t)[:, None] * np.exp(-approx.grid.y_nodes)[None, :]
    adv = v["val"] - damp
    R1 = -(u["t"] + u["val"] * u["x"] + adv * u["y"] + p["x"] - eps ** 2 * (u["xx"] + u["yy"]))
    R2 = -(v["t"] + u["val"] * v["x"] + adv * v["y"] + p["y"] - eps ** 2 * (v["xx"] + v["yy"]))
    g = approx.grid
    return Remainders(Field(g, R1), Field(g, R2))


def remainders_formula(profiles, epsilon, gamma=None, t=None) -> Remainders:
    """Remainders from their term-by-term representation.

    Each additive group is returned in ``groups`` as ``(R1 part, R2 part)``.
    """
    if gamma is not None and gamma != profiles.gamma:
        raise ValueError("gamma does not match the solved profiles")
    approx = ApproxSolution(profiles, epsilon)
    t = profiles.times[-1] if t is None else t
    build = _groups_half if profiles.gamma == HALF else _groups_one
    groups = build(approx, t)
    R1 = -sum(a for a, _ in groups.values())
    R2 = -sum(b for _, b in groups.values())
    g = profiles.grid
    return Remainders(Field(g, R1), Field(g, R2),
                      {k: (-a, -b) for k, (a, b) in groups.items()})


class _Terms:
    """Short accessors for the formula transcriptions."""

    def __init__(self, approx, t):
        self.P = approx.profiles.pieces(t)
        self.L = approx.sampled(t)
        self.y = approx.grid.y_nodes[None, :]
        self.ey = np.exp(-self.y)

    def o(self, comp, lev, key="val"):
        return self.P.outer[lev][comp][key]

    def l(self, name, key="val"):  # noqa: E743
        return self.L[name][key]

    def w(self, name):
        return self.P.wall[name][:, None]


def _groups_half(approx, t):
    eps = approx.epsilon
    s = math.sqrt(eps)
    T = _Terms(approx, t)
    o, l, w, y, ey = T.o, T.l, T.w, T.y, T.ey
    dx = lambda a: dx_spectral(a)  # noqa: E731
    ue0, ue0x, ue0y = o("u", 0), o("u", 0, "x"), o("u", 0, "y")
    ve0, ve0x, ve0y = o("v", 0), o("v", 0, "x"), o("v", 0, "y")
    ue3, ue3x, ue3y = o("u", 3), o("u", 3, "x"), o("u", 3, "y")
    ve3, ve3x, ve3y = o("v", 3), o("v", 3, "x"), o("v", 3, "y")
    ue_xx = o("u", 0, "xx") + s ** 3 * o("u", 3, "xx")
    ue_yy = o("u", 0, "yy") + s ** 3 * o("u", 3, "yy")
    ve_xx = o("v", 0, "xx") + s ** 3 * o("v", 3, "xx")
    ve_yy = o("v", 0, "yy") + s ** 3 * o("v", 3, "yy")
    ue_y = ue0y + s ** 3 * ue3y
    ve_y = ve0y + s ** 3 * ve3y
    u1, u2, u3 = l("u1"), l("u2"), l("u3")
    u1x, u2x, u3x = l("u1", "x"), l("u2", "x"), l("u3", "x")
    u1z, u2z, u3z = l("u1", "z"), l("u2", "z"), l("u3", "z")
    v3, v4, v5 = l("v3"), l("v4"), l("v5")
    up = u1 + s * u2 + eps * u3
    upx = u1x + s * u2x + eps * u3x
    upz = u1z + s * u2z + eps * u3z
    upxx = l("u1", "xx") + s * l("u2", "xx") + eps * l("u3", "xx")
    vp = v3 + s * v4 + eps * v5
    vpx = l("v3", "x") + s * l("v4", "x") + eps * l("v5", "x")
    vpz = l("v3", "z") + s * l("v4", "z") + eps * l("v5", "z")
    vpxx = l("v3", "xx") + s * l("v4", "xx") + eps * l("v5", "xx")
    U0b, DyU0b = w("ou0_val"), w("ou0_y")
    DyV0b, DyyV0b = w("ov0_y"), w("ov0_yy")
    DxU0b, DxyU0b, DxyV0b = dx(U0b), dx(DyU0b), dx(DyV0b)
    vp3b, vp4b, vp5b = v3[:, :1], v4[:, :1], v5[:, :1]
    V3b = -vp3b
    f = vp4b + s * vp5b
    # the leading layer transports with the wall-normal shear of level 0 unless switched off
    shear = 1.0 if approx.profiles.transport == "level0" else 0.0
    z = np.zeros_like(ue0)

    G = {}
    G["outer_advection"] = (eps ** 3 * (ue3 * ue3x + ve3 * ue3y), eps ** 3 * (ue3 * ve3x + ve3 * ve3y))
    G["outer_viscous"] = (-eps ** 2 * (ue_xx + ue_yy), -eps ** 2 * (ve_xx + ve_yy))
    G["layer_tangential_viscous"] = (-s ** 5 * upxx, -s ** 7 * vpxx)
    G["layer_pressure"] = (s ** 5 * l("p5", "x"), z)
    G["layer_time"] = (z, eps ** 2 * (l("v4", "t") - l("v4", "zz"))
                       + s ** 5 * (l("v5", "t") - l("v5", "zz")))
    G["wall_flux_damping"] = (
        -eps ** 2 * f * ey * ue_y - eps ** 2 * ey * (vp5b * upz + vp4b * (u2z + s * u3z)),
        -eps ** 2 * f * ey * ve_y - s ** 5 * f * ey * vpz)
    G["quadratic"] = (
        eps ** 2 * (ue3 * upx + ue3x * up + u1 * u3x + u2 * u2x + u3 * u1x
                    + s * (u2 * u3x + u3 * u2x) + eps * u3 * u3x + ve3 * u3z + v4 * ue_y)
        + eps ** 2 * (s * v5 * ue_y + eps * v3 * ue3y + v3 * u3z + v4 * u2z + s * v4 * u3z + v5 * upz),
        eps ** 2 * (up * vpx + ve3 * vpz + vp * vpz))
    G["cross"] = (z, s ** 6 * ue3 * vpx + eps ** 2 * ue0 * l("v4", "x") + s ** 5 * ue0 * l("v5", "x")
                  + eps ** 2 * ve3x * up + s ** 6 * ve3y * vp + (eps ** 2 * v4 + s ** 5 * v5) * ve0y)
    G["order_s3"] = (
        s ** 3 * ((ue0 - U0b) * u3x + u3 * (ue0x - DxU0b) + (ve3 - V3b) * u2z
                  + v3 * (ue0y - DyU0b) + vp4b * (1 - ey) * u1z),
        s ** 3 * ((ue0 - U0b) * l("v3", "x") + ve0x * u3 + ve0 * l("v5", "z") + v3 * (ve0y - DyV0b)))
    G["order_eps"] = (
        eps * ((ue0 - U0b) * u2x + u2 * (ue0x - DxU0b) + (ve3 - V3b) * u1z),
        eps * (ve0x * u2 + ve0 * l("v4", "z")))
    G["taylor_s"] = (
        s * ((ue0x - DxU0b - y * DxyU0b) * u1 + (ue0 - U0b - y * DyU0b) * u1x + (ve0 - y * DyV0b) * u3z),
        s * ((ve0x - y * DxyV0b) * u1 + (ve0 - y * DyV0b) * l("v3", "z")))
    G["taylor_1"] = ((ve0 - y * DyV0b) * u2z, z)
    G["taylor_inv_s"] = ((ve0 - shear * y * DyV0b - 0.5 * y ** 2 * DyyV0b) * u1z / s, z)
    return G


def _groups_one(approx, t):
    e = approx.epsilon
    T = _Terms(approx, t)
    o, l, w, y, ey = T.o, T.l, T.w, T.y, T.ey
    dx = lambda a: dx_spectral(a)  # noqa: E731
    ue0, ue0x, ue0y = o("u", 0), o("u", 0, "x"), o("u", 0, "y")
    ve0, ve0x, ve0y = o("v", 0), o("v", 0, "x"), o("v", 0, "y")
    ue1, ue1x, ue1y = o("u", 1), o("u", 1, "x"), o("u", 1, "y")
    ve1, ve1x, ve1y = o("v", 1), o("v", 1, "x"), o("v", 1, "y")
    ue, ve = ue0 + e * ue1, ve0 + e * ve1
    ue_y, ve_y = ue0y + e * ue1y, ve0y + e * ve1y
    lap_ue = o("u", 0, "xx") + o("u", 0, "yy") + e * (o("u", 1, "xx") + o("u", 1, "yy"))
    lap_ve = o("v", 0, "xx") + o("v", 0, "yy") + e * (o("v", 1, "xx") + o("v", 1, "yy"))
    u0, u1 = l("u0"), l("u1")
    u0x, u1x, u0z, u1z = l("u0", "x"), l("u1", "x"), l("u0", "z"), l("u1", "z")
    v1, v2 = l("v1"), l("v2")
    v1x, v2x, v1z, v2z = l("v1", "x"), l("v2", "x"), l("v1", "z"), l("v2", "z")
    up, vp = u0 + e * u1, v1 + e * v2
    upxx = l("u0", "xx") + e * l("u1", "xx")
    vpxx = l("v1", "xx") + e * l("v2", "xx")
    vpx, vpz = v1x + e * v2x, v1z + e * v2z
    U0b, DyU0b, U1b = w("ou0_val"), w("ou0_y"), w("ou1_val")
    DyV0b, DyyV0b, DyV1b = w("ov0_y"), w("ov0_yy"), w("ov1_y")
    DxU0b, DxU1b, DxDyU0b, DxDyV0b = dx(U0b), dx(U1b), dx(DyU0b), dx(DyV0b)
    V1b = -v1[:, :1]
    f = v2[:, :1]
    z = np.zeros_like(ue0)

    G = {}
    G["outer_advection"] = (e ** 2 * (ue1 * ue1x + ve1 * ue1y), e ** 2 * (ue1 * ve1x + ve1 * ve1y))
    G["outer_viscous"] = (-e ** 2 * lap_ue, -e ** 2 * lap_ve)
    G["layer_tangential_viscous"] = (-e ** 2 * upxx, -e ** 3 * vpxx)
    G["layer_pressure"] = (e ** 2 * l("p2", "x"), z)
    G["layer_time"] = (z, e ** 2 * (l("v2", "t") - l("v2", "zz")))
    G["wall_flux_damping"] = (
        -e ** 2 * f * ey * ue_y + e * f * (1 - ey) * u0z - e ** 2 * f * ey * u1z,
        -e ** 2 * f * ey * (ve_y + vpz))
    G["tangential_transport"] = (
        (ue0 - U0b - y * DyU0b) * u0x + e * (ue0 - U0b) * u1x + e * (ue1 - U1b) * u0x
        + e ** 2 * ue1 * u1x
        + (ue0x - DxU0b - y * DxDyU0b) * u0 + e * (ue0x - DxU0b) * u1
        + e * (ue1x - DxU1b) * u0 + e ** 2 * ue1x * u1 + e ** 2 * u1 * u1x,
        e * (ue0 - U0b) * v1x + e ** 2 * ue1 * v1x + e ** 2 * ue * v2x
        + (ve0x - y * DxDyV0b) * u0 + e * (ve1x - dx(V1b)) * u0 + e * u1 * ve0x + e ** 2 * u1 * ve1x
        + e * (up * vpx - u0 * v1x))
    G["normal_transport"] = (
        (ve0 - y * DyV0b - 0.5 * y ** 2 * DyyV0b) * u0z / e + (ve1 - V1b - y * DyV1b) * u0z
        + (ve0 - y * DyV0b) * u1z + e * (ve1 - V1b) * u1z + e ** 2 * v2 * u1z,
        (ve0 - y * DyV0b) * v1z + e * (ve1 - V1b) * v1z + e * ve * v2z
        + e * (vp * vpz - v1 * v1z))
    G["layer_on_outer_shear"] = (
        e * v1 * (ue0y - DyU0b) + e ** 2 * v1 * ue1y + e ** 2 * v2 * ue_y,
        e * v1 * (ve0y - DyV0b) + e ** 2 * v1 * ve1y + e ** 2 * v2 * ve_y)
    return G


def compute_h(approx: ApproxSolution, err, g=None, t=None):
    """Wall-lift forcing of the modified vorticity equation.

    ``err`` supplies the error velocity ``u`` and ``tilde_v`` (wall-flux corrected),
    either as an error state or as a ``(u, tilde_v)`` pair of Fields/arrays.
    ``g`` defaults to the approximation's ``g0 + eps d_x f`` at ``t``.
    """
    if isinstance(err, tuple):
        u, tv = (np.asarray(getattr(a, "values", a), dtype=float) for a in err)
    else:
        u, tv = err.u.values, err.tilde_v.values
        t = err.t if t is None else t
    t = approx.times[-1] if t is None else t
    eps = approx.epsilon
    bd = approx.boundary_data(t)
    if g is None:
        g, dt_g = bd["g"], bd["dt_g"]
    else:
        g = np.asarray(g, dtype=float)
        dt_g = np.zeros_like(g)
    c = approx.composite(t)
    y = approx.grid.y_nodes[None, :]
    ua = c["u"]["val"]
    tva = c["v"]["val"] - eps ** 2 * bd["f"][:, None] * np.exp(-y)
    G, Gx, Gxx = g[:, None], dx_spectral(g)[:, None], dx_spectral(g, 2)[:, None]
    bracket = (dt_g[:, None] + ua * Gx - tva * G + u * Gx - tv * G - eps ** 2 * G - eps ** 2 * Gxx)
    return Field(approx.grid, -eps * np.exp(-y) * bracket)


def layer_fields(approx: ApproxSolution, t):
    """Layer parts of the composite rescaled to unit size, as layer Fields.

    ``u^a = u^e + eps^(1-gamma) u^p`` and ``v^a = v^e + eps^(2-gamma) v^p``.
    """
    eps, gam = approx.epsilon, approx.gamma
    U, V, _ = ladder(gam, eps)
    L = approx.layer_parts(t)
    up = sum(c * L[n]["val"] for n, c in U if not n.startswith("o")) * eps ** (gam - 1)
    vp = sum(c * L[n]["val"] for n, c in V if not n.startswith("o")) * eps ** (gam - 2)
    g = approx.grid
    return Field(g, up, "layer"), Field(g, vp, "layer")


def outer_fields(approx: ApproxSolution, t):
    """Sum of the outer levels (u^e, v^e) with their epsilon weights."""
    U, V, _ = ladder(approx.gamma, approx.epsilon)
    P = approx.euler_parts(t)
    ue = sum(c * P[int(n[1:])]["u"]["val"] for n, c in U if n.startswith("o"))
    ve = sum(c * P[int(n[1:])]["v"]["val"] for n, c in V if n.startswith("o"))
    return Field(approx.grid, ue), Field(approx.grid, ve)


class AssumptionError(RuntimeError):
    pass


DEFAULT_CEILINGS = {
    "H1_outer": 1e8, "H1_layer": 1e8, "H2_ratio": 1e3, "H2_grad_ratio": 1e3, "H3": 1e4,
}


def verify_assumptions(approx: ApproxSolution, R1=None, R2=None, gevrey=None, layer=None,
                       ceilings=None, times=None):
    """Evaluate the approximate-solution, remainder and wall-data bounds at output times.

    ``R1``/``R2`` may be given for a single time; otherwise the residual path
    is evaluated at every time. Returns a list of per-time records with a
    ``pass`` flag; any non-finite quantity raises :class:`AssumptionError`.
    """
    from . import norms
    gp = gevrey or norms.GevreyParams(gamma=approx.gamma)
    lp = layer or norms.LayerNormParams(gamma=approx.gamma)
    ceil = dict(DEFAULT_CEILINGS, **(ceilings or {}))
    eps = approx.epsilon
    times = approx.times if times is None else times
    out = []
    for t in times:
        gpt, lpt = gp.replace(t=t), _replace(lp, t=t)
        if R1 is None or R2 is None:
            R = remainders_residual(approx, t)
            r1, r2 = R.R1, R.R2
        else:
            r1, r2 = R1, R2
        rec = {"t": t}
        ue, ve = outer_fields(approx, t)
        h1o = [norms.h1_outer_sum(f, gpt) for f in (ue, ve)]
        rec["H1_outer"] = sum(v.value for v in h1o)
        rec["H1_outer_tail"] = sum(v.tail for v in h1o)
        up, vp = layer_fields(approx, t)
        h1l = [norms.h1_layer_sum(f, lpt) for f in (up, vp)]
        rec["H1_layer"] = sum(v.value for v in h1l)
        rec["H1_layer_tail"] = sum(v.tail for v in h1l)
        x3 = norms.pair_norm((r1, r2), norms.gevrey_X, gpt.replace(k=3))
        D1 = approx.grid.D1y
        grads = [Field(approx.grid, a) for r in (r1, r2)
                 for a in (dx_spectral(r.values), r.values @ D1.T)]
        x2 = norms.pair_norm(grads, norms.gevrey_X, gpt.replace(k=2))
        rec.update({"R_X3_sq": x3.squared, "R_X3_tail": x3.tail,
                    "gradR_X2_sq": x2.squared, "gradR_X2_tail": x2.tail,
                    "H2_ratio": x3.squared / eps ** 4, "H2_grad_ratio": x2.squared / eps ** 2})
        bd = approx.boundary_data(t)
        h3 = {
            "dt_f_X3x": norms.gevrey_Xx(bd["dt_f"], gpt.replace(k=3)).value,
            "f_X5x": norms.gevrey_Xx(bd["f"], gpt.replace(k=5)).value,
            "g0_X5x": norms.gevrey_Xx(bd["g0"], gpt.replace(k=5)).value,
            "dt_g0_X3x": norms.gevrey_Xx(bd["dt_g0"], gpt.replace(k=3)).value,
            "dt_f_bar_L2x": float(np.sqrt(2 * np.pi / approx.grid.n_x * np.sum(bd["dt_f_bar"] ** 2))),
        }
        rec.update(h3)
        rec["H3"] = sum(h3.values())
        rec["decay_certificate"] = layer_decay_certificate(approx.profiles, t, lp.a0)
        for key, val in rec.items():
            if isinstance(val, float) and not np.isfinite(val) and not key.endswith("tail"):
                raise AssumptionError(f"non-finite value for {key} at t={t}")
        rec["pass"] = all(rec[k] <= c for k, c in ceil.items())
        out.append(rec)
    return out


def _replace(obj, **kw):
    from dataclasses import replace
    return replace(obj, **kw)


def relative_difference(a: Remainders, b: Remainders):
    """Relative L2 difference of two remainder pairs (joint norm)."""
    wts = a.R1.grid.wy[None, :]
    num = np.sum(((a.R1.values - b.R1.values) ** 2 + (a.R2.values - b.R2.values) ** 2) * wts)
    den = np.sum((b.R1.values ** 2 + b.R2.values ** 2) * wts)
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return float(math.sqrt(num / den))


def layer_decay_certificate(profiles, t, a0=0.25):
    """Max over layer profiles of ``sup |exp(a0 z^2) u|`` (finite iff decay is Gaussian enough)."""
    g = profiles.grid
    wt = np.exp(a0 * g.z_nodes ** 2)[None, :]
    n = profiles.step(t)
    return max(float(np.max(np.abs(h.u[n]) * wt)) for h in profiles.layers.values())


__all__ = [
    "ApproxSolution", "AssemblyError", "AssumptionError", "compute_h", "layer_fields",
    "outer_fields", "verify_assumptions", "ExpansionProfiles", "PipelineConfig", "PipelineError",
    "Remainders", "compute_f_g0", "initial_vorticity", "ladder", "layer_decay_certificate",
    "relative_difference", "remainders_formula", "remainders_residual", "run_pipeline",
]

