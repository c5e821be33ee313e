"""Epsilon sweeps: build the expansion once, run Navier-Stokes per epsilon, fit rates.

The layer profiles do not depend on the viscosity, so :func:`run_sweep`
solves the hierarchy once and hands the shared profiles to every case.
Cases are independent; with ``jobs > 1`` they run in forked worker
processes that inherit the profiles read-only.
"""
from __future__ import annotations

import logging
import math
import multiprocessing
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import stats

from . import __version__
from .config import RunConfig
from .expansion import (ApproxSolution, PipelineConfig, compute_h, relative_difference,
                        remainders_formula, remainders_residual, run_pipeline,
                        verify_assumptions)
from .grid import Field
from .norms import conormal_sobolev, gevrey_X, pair_norm
from .ns import (energy_functionals, error_pressure_solve, error_series, eta_residual,
                 ns_from_approx, pressure_agreement, solve_ns)
from .report import RunReport

log = logging.getLogger(__name__)


class FitError(ValueError):
    pass


class RateFit(NamedTuple):
    slope: float
    intercept: float
    r2: float
    slope_ci: float         # half-width of the 95% interval on the slope
    n: int


def fit_rate(points) -> RateFit:
    """Least-squares line through ``(log eps, log value)``.

    Non-positive values are dropped with a warning; fewer than three
    surviving points raise :class:`FitError`.
    """
    pts = [(float(e), float(v)) for e, v in points]
    bad = [p for p in pts if not (p[1] > 0 and math.isfinite(p[1]))]
    if bad:
        warnings.warn(f"fit_rate: dropping {len(bad)} non-positive or non-finite value(s)",
                      RuntimeWarning, stacklevel=2)
    pts = [p for p in pts if p not in bad]
    if len(pts) < 3:
        raise FitError(f"need at least 3 positive values, have {len(pts)}")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    A = np.column_stack([x, np.ones_like(x)])
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([slope, icpt])
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    n = len(pts)
    sxx = float(((x - x.mean()) ** 2).sum())
    se = math.sqrt(ss_res / (n - 2) / sxx) if n > 2 else math.inf
    ci = float(stats.t.ppf(0.975, n - 2) * se)
    return RateFit(float(slope), float(icpt), float(r2), ci, n)


# ---------------------------------------------------------------------------
# one epsilon

def _l2(g, *arrays):
    return math.sqrt(sum(float(np.sum(a ** 2 * g.qy)) for a in arrays) * g.dx)


def run_case(profiles, cfg: RunConfig, eps, log_dir=None):
    """All per-epsilon diagnostics as a flat record of numbers."""
    approx = ApproxSolution(profiles, eps)
    g = approx.grid
    gp = cfg.gevrey()
    s = cfg.sobolev_order
    log_path = dump_dir = None
    if log_dir is not None:
        log_path = Path(log_dir) / f"ns_log_eps{eps:g}.csv"
        dump_dir = Path(log_dir)
    hist = solve_ns(ns_from_approx(approx), cfg.T, cfg.dt, output_times=profiles.stored_times,
                    cfl_max=cfg.cfl_max, log_path=log_path, dump_dir=dump_dir)
    errs = error_series(hist, approx)
    rec = {"epsilon": eps}
    U, Uinf, Uhs, Ux3, Ux3t, W, Wx2, Wx2t = ([] for _ in range(8))
    E, F, G = [], [], []
    agree = []
    for e in errs:
        u, v = e.u.values, e.v.values
        pt = gp.replace(t=e.t)
        U.append(_l2(g, u, v))
        Uinf.append(float(max(np.abs(u).max(), np.abs(v).max())))
        Uhs.append(conormal_sobolev(e.u, s) + conormal_sobolev(e.v, s))
        x3 = pair_norm((e.u, e.v), gevrey_X, pt.replace(k=3))
        Ux3.append(x3.value)
        Ux3t.append(x3.tail)
        W.append(_l2(g, e.omega_err.values))
        x2 = gevrey_X(e.omega_err, pt.replace(k=2))
        Wx2.append(x2.value)
        Wx2t.append(x2.tail)
        en = energy_functionals(e, params=gp)
        E.append(en.E)
        F.append(en.F)
        G.append(en.G)
        agree.append(relative_difference(remainders_formula(profiles, eps, t=e.t),
                                         remainders_residual(approx, e.t)))
    rec.update(U_L2=max(U), U_Linf=max(Uinf), U_Hs=max(Uhs), U_X3=max(Ux3), U_X3_tail=max(Ux3t),
               W_L2=max(W), W_X2=max(Wx2), W_X2_tail=max(Wx2t),
               E_max=max(E), F_max=max(F), G_max=max(G), E_over_eps2=max(E) / eps ** 2,
               remainder_agreement_max=max(agree))

    if cfg.checks.get("assumptions", True):
        va = verify_assumptions(approx, gevrey=gp, layer=cfg.layer_norm(),
                                ceilings=cfg.ceilings() or None)
        ratios = [r["H2_ratio"] for r in va]
        rec.update(R_X3=math.sqrt(max(r["R_X3_sq"] for r in va)),
                   H2_ratio_max=max(ratios), H2_ratio_min=min(ratios),
                   H1_outer_max=max(r["H1_outer"] for r in va),
                   H1_layer_max=max(r["H1_layer"] for r in va),
                   H3_max=max(r["H3"] for r in va),
                   decay_certificate_max=max(r["decay_certificate"] for r in va),
                   assumptions_pass=all(r["pass"] for r in va))

    # start-up is excluded: the first step is not part of a smooth history
    later = [e for e in errs if e.t > 0 and e.dt_eta is not None]
    eta_res = []
    for e in later:
        R = remainders_residual(approx, e.t)
        res = eta_residual(e, approx, R.R1, R.R2, compute_h(approx, e)).values
        eta_res.append(float(np.abs(res[:, 1:-1]).max()))
    last = errs[-1]
    R = remainders_residual(approx, last.t)
    rec["eta_residual_max"] = max(eta_res) if eta_res else 0.0
    rec["eta_residual_T"] = eta_res[-1] if eta_res else 0.0
    rec["pressure_agreement_T"] = (
        pressure_agreement(error_pressure_solve(last, approx, R.R2, R1=R.R1), last.p)
        if last.t > 0 and last.p is not None else 0.0)
    rec["eta_wall_max"] = max(e.boundary["eta_wall"] for e in errs)
    rec["divergence_max"] = max(row["divergence_max"] for row in hist.log)
    # row 0 is the approximation itself, which misses the friction law at t = 0
    rec["robin_max"] = max((row["robin_residual"] for row in hist.log[1:]), default=0.0)
    ident = [approx.boundary_identities(t) for t in approx.times]
    # the layer starts from zero, so the slip relation only holds for t > 0
    rec["approx_slip_max"] = max(d["wall_slip"] for t, d in zip(approx.times, ident) if t > 0)
    rec["approx_flux_max"] = max(d["wall_flux"] for d in ident)
    return rec


def _safe_case(profiles, cfg, eps, log_dir):
    t0 = time.perf_counter()
    try:
        rec = run_case(profiles, cfg, eps, log_dir)
        rec["status"] = "ok"
    except Exception as exc:            # one case failing must not stop the sweep
        log.exception("case eps=%g failed", eps)
        rec = {"epsilon": eps, "status": "failed", "error": f"{type(exc).__name__}: {exc}"}
    return rec, time.perf_counter() - t0


_SHARED = {}


def _worker(eps):
    return _safe_case(_SHARED["profiles"], _SHARED["cfg"], eps, _SHARED["log_dir"])


def pipeline_config(cfg: RunConfig, stencil=True) -> PipelineConfig:
    return PipelineConfig(gamma=cfg.gamma, beta=cfg.beta, T=cfg.T, dt=cfg.dt, n_out=cfg.n_out,
                          datum=cfg.datum, transport=cfg.transport, grid=cfg.make_grid(),
                          stencil=stencil)


# quantity -> (fit key, acceptance band on the slope)
TRACKED = {
    "U_L2": (1.5, 2.5),
    "W_L2": (0.6, 1.5),
    "R_X3": (1.6, 2.6),
    "U_Linf": None,
    "U_X3": None,
    "W_X2": None,
}


def _fits(records):
    ok = [r for r in records if r.get("status") == "ok"]
    fits = {}
    for name in TRACKED:
        pts = [(r["epsilon"], r[name]) for r in ok if name in r]
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                fits[name] = fit_rate(pts)._asdict()
        except FitError as exc:
            fits[name] = {"degenerate": str(exc)}
    return fits


def _verdicts(records, fits):
    out = {}
    for name, band in TRACKED.items():
        if band is None:
            continue
        f = fits.get(name, {})
        if "slope" not in f:
            out[f"{name}_slope"] = {"pass": None, "detail": f.get("degenerate", "not computed")}
            continue
        ok = band[0] <= f["slope"] <= band[1]
        if name == "U_L2":
            ok = ok and f["r2"] >= 0.98
        out[f"{name}_slope"] = {"pass": bool(ok), "value": f["slope"], "band": list(band),
                                "r2": f["r2"]}
    ratios = [r["H2_ratio_max"] for r in records if r.get("status") == "ok" and "H2_ratio_max" in r]
    lows = [r["H2_ratio_min"] for r in records if r.get("status") == "ok" and "H2_ratio_min" in r]
    if ratios and min(lows) > 0:
        spread = max(ratios) / min(lows)
        out["H2_ratio_spread"] = {"pass": bool(spread <= 2.0), "value": spread, "band": [1.0, 2.0]}
    ok = [r for r in records if r.get("status") == "ok"]
    if ok:
        agree = max(r["remainder_agreement_max"] for r in ok)
        out["remainder_agreement"] = {"pass": bool(agree <= 1e-6), "value": agree,
                                      "band": [0.0, 1e-6]}
        div = max(r["divergence_max"] for r in ok)
        out["divergence"] = {"pass": bool(div < 1e-8), "value": div, "band": [0.0, 1e-8]}
        eta = max(r["eta_wall_max"] for r in ok)
        out["eta_wall"] = {"pass": bool(eta < 1e-6), "value": eta, "band": [0.0, 1e-6]}
    return out


def run_sweep(config: RunConfig, out=None, jobs=None, profiles=None) -> RunReport:
    """Run every epsilon of the config and fit the rates; persist to ``out`` if given.

    ``profiles`` may be passed to reuse an already solved hierarchy.
    """
    cfg = config
    jobs = cfg.jobs if jobs is None else jobs
    timing = {}
    log_dir = None
    if out is not None:
        log_dir = Path(out) / "cases"
        log_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    pipeline_error = None
    if profiles is None:
        try:
            profiles = run_pipeline(pipeline_config(cfg))
        except Exception as exc:
            log.exception("expansion pipeline failed")
            pipeline_error = f"{type(exc).__name__}: {exc}"
    timing["pipeline"] = time.perf_counter() - t0

    if pipeline_error is not None:
        results = [({"epsilon": e, "status": "failed", "error": f"pipeline: {pipeline_error}"}, 0.0)
                   for e in cfg.epsilon_list]
    elif jobs > 1 and "fork" in multiprocessing.get_all_start_methods():
        _SHARED.update(profiles=profiles, cfg=cfg, log_dir=log_dir)
        try:
            ctx = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
                futures = [pool.submit(_worker, e) for e in cfg.epsilon_list]
                results = []
                for e, fut in zip(cfg.epsilon_list, futures):
                    try:
                        results.append(fut.result())
                    except Exception as exc:        # e.g. a worker killed by the OS
                        results.append(({"epsilon": e, "status": "failed",
                                         "error": f"{type(exc).__name__}: {exc}"}, 0.0))
        finally:
            _SHARED.clear()
    else:
        results = [_safe_case(profiles, cfg, e, log_dir) for e in cfg.epsilon_list]

    records = [r for r, _ in results]
    for e, (_, dt) in zip(cfg.epsilon_list, results):
        timing[f"eps={e:g}"] = dt
    fits = _fits(records)
    diagnostics = {}
    if profiles is not None:
        d = profiles.diagnostics
        diagnostics = {"energy_drift": d.get("energy_drift"),
                       "layer_boundary_residual": d.get("boundary_residual"),
                       "plugback_residual": d.get("plugback_residual")}
    report = RunReport(config=cfg.to_dict(), records=records, fits=fits,
                       verdicts=_verdicts(records, fits), diagnostics=diagnostics,
                       provenance={"config_hash": cfg.digest(), "code_version": __version__})
    report.timing = timing
    if out is not None:
        from .report import emit_report
        emit_report(report, out)
    return report


def run_norm_oracle(cfg: RunConfig, n_fields=None):
    """Norm evaluators against their brute-force references on random fields."""
    from .norm_oracle import run_oracle_suite
    n = n_fields or cfg.checks.get("oracle_fields", 20)
    return run_oracle_suite(cfg.make_grid(), n_fields=n, seed=cfg.seed)


def run_expansion(cfg: RunConfig, profiles=None):
    """Pipeline-only diagnostics for every epsilon: dual-path remainders and wall identities."""
    profiles = profiles or run_pipeline(pipeline_config(cfg, stencil=False))
    rows = []
    for eps in cfg.epsilon_list:
        approx = ApproxSolution(profiles, eps)
        for t in profiles.times:
            R = remainders_residual(approx, t)
            Rf = remainders_formula(profiles, eps, t=t)
            row = {"epsilon": eps, "t": t, "remainder_agreement": relative_difference(Rf, R),
                   "R_L2": _l2(approx.grid, R.R1.values, R.R2.values)}
            row.update({f"approx_{k}": v for k, v in approx.boundary_identities(t).items()})
            rows.append(row)
    return profiles, rows


def run_check_assumptions(cfg: RunConfig, profiles=None):
    profiles = profiles or run_pipeline(pipeline_config(cfg, stencil=False))
    rows = []
    for eps in cfg.epsilon_list:
        approx = ApproxSolution(profiles, eps)
        for rec in verify_assumptions(approx, gevrey=cfg.gevrey(), layer=cfg.layer_norm(),
                                      ceilings=cfg.ceilings() or None):
            rows.append({"epsilon": eps, **rec})
    return profiles, rows


def layer_field(profiles, order, t):
    """A solved layer profile as a layer Field (for dumps)."""
    return Field(profiles.grid, profiles.layers[order].u[profiles.step(t)], "layer")
