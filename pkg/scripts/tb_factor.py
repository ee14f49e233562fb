"""Drop factor of ||f - L||^2 under epsilon halving, across epsilon and lattices."""

import argparse

import numpy as np

from katolab.carleson import laa_scaling
from katolab.coefficients import GeneratorSpec, generate
from katolab.lattice import GridSpec
from katolab.operator import ParabolicOperator
from katolab.suites import tb_cube


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--family", default="checkerboard")
    p.add_argument("--nx", type=int, nargs="+", default=[32])
    p.add_argument("--eps", type=float, nargs="+", default=[0.2, 0.1, 0.05])
    args = p.parse_args()
    for nx in args.nx:
        g = GridSpec(2, nx, max(nx, 32))
        op = ParabolicOperator(generate(GeneratorSpec(args.family, 1.0), g))
        for eps in args.eps:
            sc = laa_scaling(op, tb_cube(g), np.eye(2)[0], eps)
            print(f"Nx={nx} eps={eps:g}: factor_i {sc['factor_i']:.3f}  change_ii {sc['change_ii']:.3f}  change_iii {sc['change_iii']:.3f}")


if __name__ == "__main__":
    main()
