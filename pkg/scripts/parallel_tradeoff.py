"""GA vs RA: traffic per steplength and drift from the sequential run.

Sweeps n and p on log-uniform diagonal problems and prints, per cell, the
steplength traffic per fresh step, the worst per-step RA divergence in units
of n*eps and the iteration counts of the three runs.

    python scripts/parallel_tradeoff.py --rule cy:l=4,m=3 --kmax 1e3
"""
import argparse

import numpy as np

from cygrad.parallel import partition_rows, simulate_parallel_solve
from cygrad.problems import build_problem
from cygrad.solver import SolveConfig, solve_gradient
from cygrad.steplengths import parse_rule

EPS = np.finfo(float).eps


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rule", default="cy:l=4,m=3")
    ap.add_argument("--kmax", type=float, default=1e3)
    ap.add_argument("--sizes", type=int, nargs="+", default=[500, 1000, 2000])
    ap.add_argument("--procs", type=int, nargs="+", default=[2, 4, 8, 16])
    ap.add_argument("--tol", type=float, default=1e-8)
    ap.add_argument("--reduce-order", choices=("ascending", "tree"), default="ascending")
    args = ap.parse_args()

    rule = parse_rule(args.rule)
    cfg = SolveConfig(rule, tol=args.tol, max_iter=20000)
    print(f"rule={rule}  kmax={args.kmax:g}  tol={args.tol:g}  reduce={args.reduce_order}")
    print(f"{'n':>6} {'p':>3} {'GA/step':>9} {'RA/step':>8} {'RA div/(n eps)':>15} "
          f"{'it seq':>7} {'it GA':>6} {'it RA':>6}")
    for n in args.sizes:
        prob = build_problem(f"diag:n={n},loguniform,kmax={args.kmax:g},seed=0,rhs=random:1")
        seq = solve_gradient(prob, cfg)
        for p in args.procs:
            plan = partition_rows(n, p)
            hg, ga = simulate_parallel_solve(prob, rule, plan, "ga", cfg)
            hr, ra = simulate_parallel_solve(prob, rule, plan, "ra", cfg, args.reduce_order)
            fresh_ga = max(r.scalars_sent for r in ga.records)
            fresh_ra = max(r.scalars_sent for r in ra.records)
            print(f"{n:>6} {p:>3} {fresh_ga:>9} {fresh_ra:>8} "
                  f"{ra.max_divergence / (n * EPS):>15.3g} "
                  f"{seq.iterations:>7} {hg.iterations:>6} {hr.iterations:>6}")


if __name__ == "__main__":
    main()
