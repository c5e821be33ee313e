"""Command line entry point: ``bllab {sweep,expansion,check-assumptions,norm-oracle} CONFIG``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config

log = logging.getLogger("bllab")


def _rows_csv(path, rows):
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _dump_json(path, obj):
    from .report import _clean
    Path(path).write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def cmd_sweep(cfg, out, args):
    from .harness import run_sweep
    from .report import verdict_text
    report = run_sweep(cfg, out=out, jobs=args.jobs)
    sys.stdout.write(verdict_text(report))
    failed = any(r.get("status") != "ok" for r in report.records)
    return 1 if failed else 0


def cmd_expansion(cfg, out, args):
    from .harness import layer_field, run_expansion
    from .io import write_fields
    profiles, rows = run_expansion(cfg)
    out.mkdir(parents=True, exist_ok=True)
    _rows_csv(out / "expansion.csv", rows)
    _dump_json(out / "expansion_diagnostics.json", profiles.diagnostics)
    T = profiles.times[-1]
    fields = {f"layer_u{k}": layer_field(profiles, k, T) for k in sorted(profiles.layers)}
    write_fields(out / "layers_T.bin", fields, grid=profiles.grid, meta={"t": T})
    worst = max(r["remainder_agreement"] for r in rows)
    print(f"remainder agreement (max over eps, t): {worst:.3e}")
    return 0 if worst <= 1e-6 else 1


def cmd_check_assumptions(cfg, out, args):
    from .harness import run_check_assumptions
    _, rows = run_check_assumptions(cfg)
    out.mkdir(parents=True, exist_ok=True)
    _rows_csv(out / "assumptions.csv", rows)
    ok = all(r["pass"] for r in rows)
    for r in rows:
        print(f"eps={r['epsilon']:g} t={r['t']:.4g} H1_outer={r['H1_outer']:.3e} "
              f"H1_layer={r['H1_layer']:.3e} H2_ratio={r['H2_ratio']:.3e} H3={r['H3']:.3e} "
              f"{'ok' if r['pass'] else 'EXCEEDED'}")
    return 0 if ok else 1


def cmd_norm_oracle(cfg, out, args):
    from .harness import run_norm_oracle
    rows = run_norm_oracle(cfg)
    out.mkdir(parents=True, exist_ok=True)
    _rows_csv(out / "norm_oracle.csv", rows)
    bad = [r for r in rows if not r["pass"]]
    worst = max(r["rel"] for r in rows)
    print(f"{len(rows) - len(bad)}/{len(rows)} evaluations within tolerance; worst rel {worst:.2e}")
    return 0 if not bad else 1


COMMANDS = {
    "sweep": (cmd_sweep, "run the epsilon sweep and write the report"),
    "expansion": (cmd_expansion, "solve the expansion hierarchy only"),
    "check-assumptions": (cmd_check_assumptions, "evaluate the assumption bounds"),
    "norm-oracle": (cmd_norm_oracle, "compare the norm evaluators with brute-force references"),
}


def build_parser():
    p = argparse.ArgumentParser(prog="bllab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        s = sub.add_parser(name, help=help_)
        s.add_argument("config", type=Path)
        s.add_argument("--out", type=Path, default=None,
                       help="output directory (default: run.out from the config)")
        s.add_argument("--jobs", type=int, default=None, help="worker processes for sweeps")
        s.add_argument("--verbose", "-v", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.jobs is not None and args.jobs < 1:
        print("--jobs must be at least 1", file=sys.stderr)
        return 2
    out = args.out or Path(cfg.out)
    fn, _ = COMMANDS[args.command]
    return fn(cfg, out, args)


if __name__ == "__main__":
    sys.exit(main())
