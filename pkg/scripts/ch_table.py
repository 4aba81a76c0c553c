#!/usr/bin/env python3
"""Convergence table for Cahn-Hilliard: IMF (rho=0) against IPM (rho=100).

``--all-initials`` adds the three stand-in initial states (marked ``*``).
"""
import argparse

from ipmsaddle.experiments import ch_initials, ch_table
from ipmsaddle.landscape import GinzburgLandau1D


def main(args) -> int:
    model = GinzburgLandau1D.cahn_hilliard()
    inits = ch_initials(model)
    if not args.all_initials:
        inits = {"phi04": inits["phi04"]}
    rows = ch_table(inits, M_list=args.M, model=model, coupling=args.coupling)
    print(f"{'initial':>8} {'method':>6} {'M':>5} {'mark':>4} {'status':>16} {'iters':>6} {'mass':>10}")
    for r in rows:
        print(f"{r['initial']:>8} {r['method']:>6} {r['M']:5d} {r['mark']:>4} {r['status']:>16} "
              f"{r['outer_iters']:6d} {r['mass']:10.6f}")
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--M", type=int, nargs="+", default=[10, 100, 200, 500])
    parser.add_argument("--all-initials", action="store_true")
    parser.add_argument("--coupling", choices=["consistent", "l2-coefficient"], default="consistent")
    raise SystemExit(main(parser.parse_args()))
