"""twopoint <experiment> --config PATH [--seed N] [--out DIR]

Exit codes: 0 when every check passes, 1 when a tolerance check fails
(the failing checks are named), 2 for configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import EXPERIMENTS, SCHEMA_VERSION, RunConfig, load_config
from .errors import BaseMismatch, ConfigError, DomainViolation, GridMismatch, TwoPointError
from .experiments import Outcome, Table, run_experiment
from .field import FieldBase, dump_csv

log = logging.getLogger("twopoint")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
# errors that mean the configuration describes an invalid setup
CONFIG_ERRORS = (ConfigError, DomainViolation, GridMismatch, BaseMismatch)


def _plain(obj):
    """JSON fallback for numpy scalars and arrays."""
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def canonical(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, default=_plain)


def digest(report: dict) -> str:
    """sha256 of the report without its timestamp and digest fields."""
    body = {k: v for k, v in report.items() if k not in ("timestamp", "digest")}
    return hashlib.sha256(canonical(body).encode()).hexdigest()


def build_report(cfg: RunConfig, outcome: Outcome, timestamp: str | None = None) -> dict:
    report = {
        "schema_version": SCHEMA_VERSION,
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "checks": [c.to_dict() for c in outcome.checks],
        "passed": outcome.passed,
        "failing": outcome.failing,
        "results": outcome.results,
    }
    # round-trip once so the digest sees exactly what is written
    report = json.loads(canonical(report))
    report["digest"] = digest(report)
    report["timestamp"] = timestamp if timestamp is not None else _dt.datetime.now(_dt.timezone.utc).isoformat()
    return report


def write_table(path: Path, table) -> None:
    if isinstance(table, FieldBase):
        dump_csv(table, path)
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(table.header)
        for row in table.rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_outputs(out: Path, report: dict, tables: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(canonical(report) + "\n")
    if "samples.csv" not in tables:
        tables = dict(tables, **{"samples.csv": Table(["check", "value", "passed"],
                                                      [[c["name"], c["value"], c["passed"]] for c in report["checks"]])})
    for name, table in tables.items():
        write_table(out / name, table)


def summary(report: dict) -> str:
    lines = [f"experiment: {report['experiment']}  seed: {report['seed']}"]
    w = max([len(c["name"]) for c in report["checks"]] + [5])
    lines.append(f"{'check':<{w}}  {'value':>14}  rel  {'tol':>10}  status")
    for c in report["checks"]:
        v, t = c["value"], c["tol"]
        vs = f"{v:14.6g}" if isinstance(v, float) else f"{str(v):>14}"
        ts = f"{t:10.3g}" if isinstance(t, float) else f"{str(t):>10}"
        lines.append(f"{c['name']:<{w}}  {vs}  {c['relation']:>3}  {ts}  {'PASS' if c['passed'] else 'FAIL'}")
    lines.append("result: " + ("PASS" if report["passed"] else "FAIL (" + ", ".join(report["failing"]) + ")"))
    return "\n".join(lines)


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twopoint", description="Two-point concavity verification experiments.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="TOML run configuration")
    p.add_argument("--seed", type=int, default=None, help="override the configured seed")
    p.add_argument("--out", default=None, help="output directory (default: the configured one)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out)
        if cfg.experiment != args.experiment:
            raise ConfigError(f"config is for {cfg.experiment!r}, command line asked for {args.experiment!r}")
        outcome = run_experiment(cfg)
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TwoPointError as exc:
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    report = build_report(cfg, outcome)
    write_outputs(Path(cfg.out), report, outcome.tables)
    print(summary(report))
    if not outcome.passed:
        print("failing checks: " + ", ".join(outcome.failing), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
