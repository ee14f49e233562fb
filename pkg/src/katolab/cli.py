"""``katolab`` command line.

Exit codes: 0 all checks pass, 1 a suite failed (the report is still
written), 2 configuration or usage error, 3 output could not be written.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import SUITES, ConfigError, ExperimentConfig, parse_grid
from .report import emit, envelope, from_csv, loads, sweep_envelope
from .suites import check, run_suite

__all__ = ["main", "run", "run_sweep", "resolve_config"]

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
FORMATS = ("json", "csv", "plotdata")


def _unit(args):
    name, cfg = args
    t0 = time.perf_counter()
    res = run_suite(name, cfg)
    return res, time.perf_counter() - t0


def _map(units, workers: int):
    """Results in submission order; the pool only changes where units run."""
    if workers <= 1 or len(units) <= 1:
        return [_unit(u) for u in units]
    with ProcessPoolExecutor(max_workers=min(workers, len(units))) as pool:
        return list(pool.map(_unit, units))


def run(cfg: ExperimentConfig) -> tuple[dict, dict]:
    """Run the configured suites; returns ``(report, timing)``."""
    out = _map([(s, cfg) for s in cfg.suites], cfg.workers)
    report = envelope(cfg, [r for r, _ in out])
    timing = {"suites": {r["name"]: dt for r, dt in out}, "workers": cfg.workers}
    return report, timing


def run_sweep(cfg: ExperimentConfig, magnitudes) -> tuple[dict, dict]:
    """One envelope per coefficient magnitude, plus monotonicity of the Carleson suprema."""
    from dataclasses import replace

    mags = [float(m) for m in magnitudes]
    if not mags:
        raise ConfigError("sweep needs at least one magnitude")
    try:
        cfgs = [replace(cfg, coefficients=replace(cfg.coefficients, magnitude=m)) for m in mags]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    units = [(s, c) for c in cfgs for s in c.suites]
    out = _map(units, cfg.workers)
    k = len(cfg.suites)
    reports = [envelope(c, [r for r, _ in out[i * k : (i + 1) * k]]) for i, c in enumerate(cfgs)]
    checks = []
    if "carleson" in cfg.suites:
        sups = []
        for rep in reports:
            s = next(x for x in rep["suites"] if x["name"] == "carleson")
            sups.append(s["measurements"].get("functional", {}).get("supremum", float("nan")) if s["error"] is None else float("nan"))
        order = sorted(range(len(mags)), key=lambda i: mags[i])
        for a, b in zip(order, order[1:]):
            checks.append(check(f"Carleson supremum nondecreasing, kappa {mags[a]:g} -> {mags[b]:g}", sups[b], sups[a], ">="))
    timing = {"runs": [{r["name"]: dt for r, dt in out[i * k : (i + 1) * k]} for i in range(len(cfgs))], "workers": cfg.workers}
    return sweep_envelope(cfg, "coefficients.magnitude", mags, reports, checks), timing


def resolve_config(args) -> ExperimentConfig:
    # without a config file every suite runs; a config file's list (possibly empty) is taken as is
    cfg = ExperimentConfig.load(args.config) if getattr(args, "config", None) else ExperimentConfig(suites=SUITES)
    kw = {}
    if getattr(args, "suite", None):
        kw["suites"] = tuple(args.suite)
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "out", None):
        kw["output"] = args.out
    if getattr(args, "grid", None):
        kw["grid"] = parse_grid(args.grid)
    env = os.environ.get("KATOLAB_WORKERS")
    if env:
        try:
            kw["workers"] = int(env)
        except ValueError as exc:
            raise ConfigError(f"KATOLAB_WORKERS must be an integer, got {env!r}") from exc
    return cfg.with_overrides(**kw)


def _common(p: argparse.ArgumentParser, suites: bool = True) -> None:
    p.add_argument("--config", help="JSON experiment configuration")
    if suites:
        p.add_argument("--suite", action="append", choices=SUITES, help="suite to run (repeatable); overrides the config list")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--out", help="output path prefix")
    p.add_argument("--grid", help="lattice as Nx x ... x Nt, e.g. 16x16x32")
    p.add_argument("--format", action="append", choices=FORMATS, help="output format (repeatable; default all)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="katolab", description="Numerical verification suites for parabolic operators with BMO antisymmetric part.")
    sub = ap.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("verify", help="run verification suites"))
    sw = sub.add_parser("sweep", help="run suites over a list of coefficient magnitudes")
    _common(sw)
    sw.add_argument("--magnitudes", required=True, help="comma-separated magnitudes, e.g. 0,0.25,0.5,1")
    _common(sub.add_parser("sqrt-compare", help="quadrature square root against the closed form and the dense oracle"), suites=False)
    rp = sub.add_parser("report", help="re-emit formats from a saved JSON (or flattened CSV) report")
    rp.add_argument("input", help="report .json or flattened .csv")
    rp.add_argument("--out", required=True, help="output path prefix")
    rp.add_argument("--format", action="append", choices=FORMATS)
    return ap


def _summary(report: dict, stream) -> None:
    runs = report.get("runs", [report])
    for rep in runs:
        for s in rep.get("suites", []):
            n_fail = sum(c["verdict"] != "pass" for c in s["checks"])
            status = "PASS" if s["passed"] else "FAIL"
            extra = f" error: {s['error']['message']}" if s.get("error") else ""
            print(f"{status} {s['name']}: {len(s['checks']) - n_fail}/{len(s['checks'])} checks{extra}", file=stream)
    for c in report.get("checks", []):
        print(f"{c['verdict'].upper()} sweep: {c['name']}", file=stream)


def main(argv=None) -> int:
    # argparse exits with status 2 on usage errors, matching EXIT_CONFIG
    args = build_parser().parse_args(argv)
    formats = tuple(args.format) if args.format else FORMATS
    try:
        if args.command == "report":
            text = Path(args.input).read_text()
            report = from_csv(text) if args.input.endswith(".csv") else loads(text)
            emit(report, args.out, formats)
            return EXIT_OK
        cfg = resolve_config(args)
        if args.command == "sqrt-compare":
            cfg = cfg.with_overrides(suites=("sqrt-oracle",))
            report, timing = run(cfg)
        elif args.command == "sweep":
            mags = [m for m in args.magnitudes.split(",") if m.strip()]
            try:
                mags = [float(m) for m in mags]
            except ValueError as exc:
                raise ConfigError(f"bad --magnitudes: {exc}") from exc
            report, timing = run_sweep(cfg, mags)
        else:
            report, timing = run(cfg)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"katolab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        paths = emit(report, cfg.output, formats, timing)
    except OSError as exc:
        print(f"katolab: cannot write report: {exc}", file=sys.stderr)
        return EXIT_IO
    _summary(report, sys.stdout)
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK if report["passed"] else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
