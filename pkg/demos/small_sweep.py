"""A three-point viscosity sweep on a coarse grid, end to end.

Writes report.json, summary.csv, verdict.txt and the rate plots into
results/demo_sweep. The rates are rough at this size; configs/acceptance.ini
is the real thing.
"""
import sys
from pathlib import Path

from bllab.config import load_config
from bllab.harness import run_sweep
from bllab.report import verdict_text

root = Path(__file__).resolve().parent.parent
cfg = load_config(root / "configs" / "smoke.ini")
out = Path(sys.argv[1]) if len(sys.argv) > 1 else root / "results" / "demo_sweep"
report = run_sweep(cfg, out=out)

print(f"{'eps':>6} {'|U-Ua|_L2':>11} {'|w-wa|_L2':>11} {'|R|_X3':>10} {'E/eps^2':>8}")
for r in report.records:
    print(f"{r['epsilon']:>6g} {r['U_L2']:>11.3e} {r['W_L2']:>11.3e} {r['R_X3']:>10.3e} "
          f"{r['E_over_eps2']:>8.3f}")
print()
for name, fit in report.fits.items():
    if "slope" in fit:
        print(f"{name:>7}: slope {fit['slope']:.2f} +- {fit['slope_ci']:.2f}")
print()
print(verdict_text(report), end="")
print(f"files in {out}")
