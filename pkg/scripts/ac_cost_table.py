#!/usr/bin/env python3
"""Allen-Cahn outer iterations and total cost M x Iter over M and rho."""
import argparse

from ipmsaddle.experiments import ac_cost_table


def main(args) -> int:
    rows = ac_cost_table(M_list=args.M, rho_list=args.rho, inner_dt=args.dt)
    print(f"{'rho':>5} {'M':>5} {'Iter':>5} {'cost':>7}  status")
    for r in rows:
        print(f"{r.rho:5g} {r.M:5d} {r.outer_iters:5d} {str(r.total_cost):>7}  {r.status}")
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--M", type=int, nargs="+", default=[100, 200, 400])
    parser.add_argument("--rho", type=float, nargs="+", default=[0.0, 0.3])
    parser.add_argument("--dt", type=float, default=0.01, help="inner step")
    raise SystemExit(main(parser.parse_args()))
