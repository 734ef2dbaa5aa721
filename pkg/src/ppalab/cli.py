"""Batch front-end: ``ppalab run`` and ``ppalab plot``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import suites


PLOT_TARGETS = {
    "neumann-decay": "moller",
    "mu-convergence": "modes",
    "cluster-decay": "kms",
    "thermal-mass-vs-beta": "thermal-mass",
}


def load_config(path: str | None, seed: int | None = None, out: str | None = None) -> dict:
    cfg = suites.DEFAULT_CONFIG
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = suites.merge(cfg, json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise suites.ConfigError(f"cannot read config {path}: {exc}") from exc
    else:
        cfg = suites.merge(cfg, {})
    if seed is not None:
        cfg["seed"] = seed
    cfg["output_dir"] = out or os.environ.get("PPALAB_OUT") or cfg.get("output_dir") or "ppalab-out"
    return suites.validate(cfg)


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["output_dir"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise suites.ConfigError(f"unwritable output path {out}: {exc}") from exc
    return out


def write_report(path: Path, suite: str, checks: list) -> None:
    report = {"suite": suite, "passed": all(c.passed for c in checks), "checks": [c.row() for c in checks]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, ensure_ascii=False)
        fh.write("\n")


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.seed, args.out)
    out = _outdir(cfg)
    checks, tables = suites.run_suite(cfg, args.suite)
    write_report(out / f"report-{args.suite}.json", args.suite, checks)
    for name, table in sorted(tables.items()):
        suites.write_table(out / f"{name}.csv", table)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.check_id:45s} residual={c.residual:.3e}  tol={c.tolerance:.1e}")
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed; report in {out}")
    return 1 if failed else 0


def cmd_plot(args) -> int:
    cfg = load_config(args.config)
    out = _outdir(cfg)
    _, tables = suites.run_suite(cfg, PLOT_TARGETS[args.target])
    path = out / f"{args.target}.csv"
    suites.write_table(path, tables[args.target])
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ppalab", description="Lattice checks of perturbative agreement and interacting KMS states.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a suite of checks and write a JSON report")
    r.add_argument("--config", help="JSON config merged over the defaults")
    r.add_argument("--suite", required=True, choices=suites.SUITES + ("all",))
    r.add_argument("--out", help="output directory")
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_run)
    q = sub.add_parser("plot", help="write plot-ready CSV data")
    q.add_argument("--config")
    q.add_argument("--target", required=True, choices=sorted(PLOT_TARGETS))
    q.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except suites.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
