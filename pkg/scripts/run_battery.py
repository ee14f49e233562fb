"""Run every suite for each coefficient family and write one report per family.

Usage: python3 scripts/run_battery.py OUTDIR [--grid 16x16x32]
Exit status is 1 when any suite failed.
"""

import argparse
import time
from pathlib import Path

from katolab.cli import run
from katolab.coefficients import FAMILIES, GeneratorSpec
from katolab.config import ExperimentConfig, parse_grid
from katolab.report import emit


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("outdir", type=Path)
    p.add_argument("--grid", default="16x16x32")
    p.add_argument("--families", nargs="+", default=list(FAMILIES))
    args = p.parse_args()
    grid = parse_grid(args.grid)
    t0 = time.perf_counter()
    ok = True
    for fam in args.families:
        mag = {"identity": 0.0, "random_smooth": 0.5}.get(fam, 1.0)
        cfg = ExperimentConfig(grid=grid, coefficients=GeneratorSpec(fam, mag), output=str(args.outdir / fam))
        report, timing = run(cfg)
        emit(report, cfg.output, timing=timing)
        ok &= report["passed"]
        failed = [s["name"] for s in report["suites"] if not s["passed"]]
        print(f"{fam:16s} {'PASS' if report['passed'] else 'FAIL'} {failed} {time.perf_counter() - t0:.0f}s", flush=True)
    raise SystemExit(0 if ok else 1)


if __name__ == "__main__":
    main()
