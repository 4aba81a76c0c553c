#!/usr/bin/env python3
"""Locate the three toy saddles and report the convergence order of each run."""
import argparse

import numpy as np

from ipmsaddle import ToyPotential2D, estimate_convergence_order, run_ipm
from ipmsaddle.experiments import toy_config
from ipmsaddle.solver import InsufficientData


def main(args) -> int:
    model = ToyPotential2D()
    starts = [(0.5, 0.8), (-0.5, 0.8), (0.2, -0.1)]
    print(f"{'start':>14} {'rho':>6} {'M':>5} {'status':>10} {'iters':>5}  saddle                        order")
    for rho in args.rho:
        for start in starts:
            tr = run_ipm(model, start, toy_config(rho=rho, M=args.M, tol=args.tol))
            try:
                order = f"{estimate_convergence_order(tr):.2f}"
            except InsufficientData:
                order = "n/a"
            print(f"{str(start):>14} {rho:6g} {args.M:5d} {tr.status:>10} {tr.outer_iters:5d}  "
                  f"{np.array2string(tr.x, precision=6):28s}  {order}")
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rho", type=float, nargs="+", default=[5.0, 100.0])
    parser.add_argument("--M", type=int, default=100)
    parser.add_argument("--tol", type=float, default=1e-8)
    raise SystemExit(main(parser.parse_args()))
