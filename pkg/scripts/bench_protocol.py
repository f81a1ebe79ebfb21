"""Iteration-count table for the default method set on the large stand-in problem.

Writes markdown, CSV and JSON next to each other so runs can be diffed.

    python scripts/bench_protocol.py --out results/bench --jobs 4
    python scripts/bench_protocol.py --problem diag:n=5000,loguniform,kmax=1e4,seed=0,rhs=ones,x0=zero
"""
import argparse
import os
from pathlib import Path

from cygrad.bench import DEFAULT_PROBLEM, DEFAULT_RULES, BenchSpec, render, run_bench


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--problem", nargs="+", default=[DEFAULT_PROBLEM])
    ap.add_argument("--rules", nargs="+", default=list(DEFAULT_RULES))
    ap.add_argument("--repetitions", type=int, default=1)
    ap.add_argument("--max-iter", type=int, default=10000)
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out", default=None, help="path prefix for .md/.csv/.json")
    args = ap.parse_args()

    spec = BenchSpec(problems=args.problem, rules=args.rules, repetitions=args.repetitions,
                     max_iter=args.max_iter, jobs=args.jobs)
    result = run_bench(spec)
    print(render(result, "markdown"))
    if args.out:
        prefix = Path(args.out)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        for fmt, ext in (("markdown", "md"), ("csv", "csv"), ("json", "json")):
            prefix.with_suffix(f".{ext}").write_text(render(result, fmt))
        print(f"wrote {prefix}.{{md,csv,json}}")


if __name__ == "__main__":
    main()
