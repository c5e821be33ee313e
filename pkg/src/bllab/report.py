"""Persisted sweep results: JSON, per-epsilon CSV, log-log SVG plots and a verdict file.

Everything written here is a pure function of the report, so emitting the
same report twice gives byte-identical files. Wall-clock timings are
kept on the report object but written to ``timing.json`` only.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SUMMARY_COLUMNS = (
    "epsilon", "status", "U_L2", "U_Linf", "U_Hs", "U_X3", "U_X3_tail", "W_L2", "W_X2",
    "W_X2_tail", "E_max", "F_max", "G_max", "E_over_eps2", "R_X3", "H2_ratio_max",
    "H2_ratio_min", "H1_outer_max", "H1_layer_max", "H3_max", "decay_certificate_max",
    "assumptions_pass", "remainder_agreement_max", "eta_wall_max", "eta_residual_max",
    "eta_residual_T", "pressure_agreement_T", "divergence_max", "robin_max", "approx_slip_max",
    "approx_flux_max", "error",
)

# what each number means and how it was truncated; copied into report.json
QUANTITIES = {
    "U_L2": "sup over output times of the L2 norm of the velocity error",
    "U_Linf": "sup over output times of the max-norm of the velocity error",
    "U_Hs": "sup of the conormal Sobolev norm (order run.sobolev_order) of the velocity error",
    "U_X3": "sup of the truncated Gevrey X-norm (k=3) of the velocity error; tail in U_X3_tail",
    "W_L2": "sup of the L2 norm of the vorticity error",
    "W_X2": "sup of the truncated Gevrey X-norm (k=2) of the vorticity error; tail in W_X2_tail",
    "E_max": "sup of the energy functional E; F_max and G_max likewise",
    "R_X3": "sup of the truncated X-norm (k=3) of the remainder pair",
    "H2_ratio_max": "sup of ||(R1,R2)||_X3^2 / eps^4 (H2_ratio_min: inf)",
    "remainder_agreement_max": "relative L2 gap of the two remainder evaluations; tolerance 1e-6",
    "eta_wall_max": "max |eta| on the wall; tolerance 1e-6",
    "eta_residual_max": "max interior defect of the eta equation for t > 0 (finite-difference in t)",
    "eta_residual_T": "the same defect at the final time, after the start-up transient",
    "pressure_agreement_T": "relative L2 gap of error-pressure gradients at the final time",
    "divergence_max": "max |div| of the computed flow over all steps; tolerance 1e-8",
    "robin_max": "max wall friction-law defect of the computed flow over all steps after the first",
}


@dataclass
class RunReport:
    config: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict, compare=False)

    def to_dict(self):
        return _clean({"provenance": self.provenance, "config": self.config,
                       "quantities": {"truncation": _truncation(self.config), **QUANTITIES},
                       "records": self.records, "fits": self.fits, "verdicts": self.verdicts,
                       "diagnostics": self.diagnostics})

    @classmethod
    def from_dict(cls, d):
        return cls(config=d["config"], records=d["records"], fits=d["fits"],
                   verdicts=d["verdicts"], diagnostics=d.get("diagnostics", {}),
                   provenance=d.get("provenance", {}))

    @property
    def passed(self):
        return all(v.get("pass") is True for v in self.verdicts.values())


def _truncation(cfg):
    norms = cfg.get("norms", {}) if cfg else {}
    return {"M": norms.get("M"), "y_cap": norms.get("y_cap", 6),
            "note": "orders above M and vertical orders above y_cap are estimated in *_tail"}


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None, tuples to lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def report_json(report: RunReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def summary_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for rec in report.records:
        w.writerow([_cell(rec.get(c)) for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.10e}"
    return str(v)


def verdict_text(report: RunReport) -> str:
    lines = []
    for name in sorted(report.verdicts):
        v = report.verdicts[name]
        state = {True: "PASS", False: "FAIL", None: "UNDEFINED"}[v.get("pass")]
        extra = ""
        if "value" in v:
            extra = f" value={v['value']:.6g}"
        if "band" in v:
            extra += f" band=[{v['band'][0]:g}, {v['band'][1]:g}]"
        if "r2" in v:
            extra += f" r2={v['r2']:.4f}"
        if "detail" in v:
            extra += f" ({v['detail']})"
        lines.append(f"{state} {name}{extra}")
    for rec in report.records:
        if rec.get("status") != "ok":
            lines.append(f"CASE FAILED eps={rec['epsilon']:g}: {rec.get('error', '')}")
    lines.append("OVERALL " + ("PASS" if report.passed else "FAIL"))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# SVG

_W, _H, _PAD = 480, 360, 60


def _decades(lo, hi):
    return list(range(math.floor(lo), math.ceil(hi) + 1))


def loglog_svg(points, fit=None, title="", ylabel="") -> str:
    """Self-contained log-log scatter with an optional fitted line."""
    pts = [(x, y) for x, y in points if x > 0 and y is not None and y > 0]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
           f'<rect width="{_W}" height="{_H}" fill="white"/>',
           f'<text x="{_W / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>']
    if not pts:
        out.append(f'<text x="{_W / 2:.1f}" y="{_H / 2:.1f}" text-anchor="middle">no data</text>')
        return "\n".join(out + ["</svg>"]) + "\n"
    lx = [math.log10(x) for x, _ in pts]
    ly = [math.log10(y) for _, y in pts]
    x0, x1 = min(lx) - 0.05, max(lx) + 0.05
    y0, y1 = min(ly) - 0.2, max(ly) + 0.2

    def X(v):
        return _PAD + (v - x0) / (x1 - x0) * (_W - 2 * _PAD)

    def Y(v):
        return _H - _PAD - (v - y0) / (y1 - y0) * (_H - 2 * _PAD)

    out.append(f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" height="{_H - 2 * _PAD}" '
               'fill="none" stroke="black"/>')
    for d in _decades(y0, y1):
        if y0 <= d <= y1:
            out.append(f'<line x1="{_PAD}" x2="{_W - _PAD}" y1="{Y(d):.2f}" y2="{Y(d):.2f}" '
                       'stroke="#ddd"/>')
            out.append(f'<text x="{_PAD - 6}" y="{Y(d) + 4:.2f}" text-anchor="end">1e{d}</text>')
    for x, _ in pts:
        out.append(f'<text x="{X(math.log10(x)):.2f}" y="{_H - _PAD + 16}" '
                   f'text-anchor="middle">{x:g}</text>')
    out.append(f'<text x="{_W / 2:.1f}" y="{_H - 14}" text-anchor="middle">epsilon</text>')
    out.append(f'<text x="16" y="{_H / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {_H / 2:.1f})">{ylabel}</text>')
    if fit and "slope" in fit:
        a, b = fit["slope"], fit["intercept"]
        # the fit is in natural logs
        ya = (a * x0 * math.log(10) + b) / math.log(10)
        yb = (a * x1 * math.log(10) + b) / math.log(10)
        out.append(f'<line x1="{X(x0):.2f}" y1="{Y(ya):.2f}" x2="{X(x1):.2f}" y2="{Y(yb):.2f}" '
                   'stroke="steelblue" stroke-dasharray="6 4"/>')
        out.append(f'<text x="{_W - _PAD - 4}" y="{_PAD + 16}" text-anchor="end">'
                   f'slope {a:.3f} ± {fit["slope_ci"]:.3f}, r² {fit["r2"]:.4f}</text>')
    for u, v in zip(lx, ly):
        out.append(f'<circle cx="{X(u):.2f}" cy="{Y(v):.2f}" r="4" fill="black"/>')
    return "\n".join(out + ["</svg>"]) + "\n"


def _write(path: Path, text: str):
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit_report(report: RunReport, directory) -> list:
    """Write the report files into ``directory``; returns the paths written."""
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {d}: {exc}") from exc
    files = {"report.json": report_json(report), "summary.csv": summary_csv(report),
             "verdict.txt": verdict_text(report)}
    for name, fit in sorted(report.fits.items()):
        pts = [(r["epsilon"], r.get(name)) for r in report.records if r.get("status") == "ok"]
        files[f"rate_{name}.svg"] = loglog_svg(pts, fit, title=f"{name} vs epsilon", ylabel=name)
    written = []
    for name, text in files.items():
        _write(d / name, text)
        written.append(d / name)
    if report.timing:
        _write(d / "timing.json", json.dumps(report.timing, indent=2, sort_keys=True) + "\n")
    return written


def load_report(path) -> RunReport:
    p = Path(path)
    if p.is_dir():
        p = p / "report.json"
    return RunReport.from_dict(json.loads(p.read_text()))
