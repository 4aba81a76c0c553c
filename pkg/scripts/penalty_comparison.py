#!/usr/bin/env python3
"""Cubic against quartic proximal penalty on Allen-Cahn over rho and M."""
import argparse
import json

from ipmsaddle.experiments import compare_penalty, penalty_report


def main(args) -> int:
    runs = compare_penalty(powers=(3, 4), rho_list=args.rho, M_list=args.M)
    rep = penalty_report(runs)
    for r in rep["runs"]:
        print(f"b={r['b']} rho={r['rho']:g} M={r['M']:>6d}: {r['status']:>16} after {r['outer_iters']} cycles")
    print(json.dumps({k: v for k, v in rep.items() if k != "runs"}, indent=2))
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rho", type=float, nargs="+", default=[0.4])
    parser.add_argument("--M", type=int, nargs="+", default=[1000, 2000, 4000, 8000, 10000, 20000])
    raise SystemExit(main(parser.parse_args()))
