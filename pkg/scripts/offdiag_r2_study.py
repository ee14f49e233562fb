"""Fit quality of the A = I inward annulus decay as the lattice and lambda vary.

Prints slope and r^2 of the log-linear fit for a few (Nx, lambda/l) pairs.
"""

import argparse

from katolab.coefficients import GeneratorSpec, generate
from katolab.lattice import GridSpec
from katolab.offdiag import OffDiagConfig, annuli_decay, annuli_fit
from katolab.operator import ParabolicOperator
from katolab.suites import offdiag_setup


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--nx", type=int, nargs="+", default=[32, 64])
    p.add_argument("--divisors", type=float, nargs="+", default=[4, 8, 16])
    args = p.parse_args()
    for nx in args.nx:
        g = GridSpec(2, nx, max(nx, 32))
        op = ParabolicOperator(generate(GeneratorSpec("identity"), g))
        Delta, _ = offdiag_setup(g)
        for div in args.divisors:
            lam = Delta.ell / div
            rows = annuli_decay(op, Delta, lam, "scalar", OffDiagConfig())
            fit = annuli_fit(rows, "inward", "scalar")
            ratios = " ".join(f"{r['ratio']:.4g}" for r in rows if r["direction"] == "inward")
            print(f"Nx={nx:3d} lambda=l/{div:g}: slope {fit.slope:+.5f}  r2 {fit.r2:.4f}  ratios {ratios}")


if __name__ == "__main__":
    main()
