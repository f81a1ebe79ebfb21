"""Iterations to 1e-10 on random 2x2 SPD problems, per rule.

    python scripts/two_dim_termination.py --seeds 200 --cond 1e3
"""
import argparse
from collections import Counter

from cygrad.problems import generate_spd_2d
from cygrad.solver import SolveConfig, solve_gradient
from cygrad.steplengths import parse_rule

RULES = ["sd", "bb1", "y", "dy", "yb", "ybr:m=2", "cy:l=1,m=1", "cy:l=4,m=3", "cy:l=2,m=5"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--cond", type=float, default=1e3)
    ap.add_argument("--rules", nargs="+", default=RULES)
    args = ap.parse_args()

    print(f"{'rule':<12} {'max k':>6}  histogram of k")
    for text in args.rules:
        rule = parse_rule(text)
        hist = Counter()
        for seed in range(args.seeds):
            h = solve_gradient(generate_spd_2d(seed, args.cond),
                               SolveConfig(rule, tol=1e-10, max_iter=500))
            hist[h.iterations if h.status == "Converged" else None] += 1
        finite = [k for k in hist if k is not None]
        worst = max(finite) if finite else "-"
        shown = ", ".join(f"{k}:{c}" for k, c in sorted(hist.items(), key=lambda t: (t[0] is None, t[0] or 0)))
        print(f"{text:<12} {worst:>6}  {shown}")


if __name__ == "__main__":
    main()
