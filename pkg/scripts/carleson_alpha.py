"""Carleson supremum as the antisymmetric part is scaled by alpha.

The functional is quadratic in alpha only while the resolvent is held fixed;
this prints the honest two-point ratios next to the fixed-resolvent one.
"""

import argparse

from katolab.coefficients import GeneratorSpec, generate
from katolab.carleson import carleson_functional
from katolab.lattice import GridSpec
from katolab.operator import ParabolicOperator


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--family", default="checkerboard")
    p.add_argument("--nx", type=int, default=32)
    p.add_argument("--alphas", type=float, nargs="+", default=[1.0, 0.5, 0.25, 0.125])
    args = p.parse_args()
    g = GridSpec(2, args.nx, 32)
    base = generate(GeneratorSpec(args.family, 1.0), g)
    sups = []
    for a in args.alphas:
        s = carleson_functional(ParabolicOperator(base.scaled_D(a))).supremum
        sups.append(s)
        print(f"alpha={a:<6g} sup={s:.6e}")
    for (a, s), (b, t) in zip(zip(args.alphas, sups), zip(args.alphas[1:], sups[1:])):
        print(f"sup({a:g}) / sup({b:g}) = {s / t:.4f}   (alpha^2 ratio {(a / b) ** 2:g})")


if __name__ == "__main__":
    main()
