"""Command-line front end: ``solve``, ``bench``, ``simulate``, ``generate``.

Exit codes: 0 converged, 2 usage or configuration error, 3 iteration cap
reached, 4 numerical breakdown.

``--config FILE`` reads flat ``key = value`` lines whose keys are the long
flag names (``max-iter = 500``); flags given on the command line win.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench as benchmod
from .parallel import partition_rows, simulate_parallel_solve
from .problems import (
    ConfigError, FormatError, build_problem, parse_generator, read_matrix_market,
    write_matrix_market, write_vector,
)
from .solver import SolveConfig, Status, solve
from .steplengths import RuleParseError, parse_rule

EXIT_OK, EXIT_CONFIG, EXIT_MAX_ITER, EXIT_BREAKDOWN = 0, 2, 3, 4
STATUS_EXIT = {Status.CONVERGED: EXIT_OK, Status.MAX_ITER: EXIT_MAX_ITER,
               Status.BREAKDOWN: EXIT_BREAKDOWN}
BOOL_FLAGS = {"recurrence", "quiet"}


class UsageError(Exception):
    pass


def _problem_args(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--gen", help="generator, e.g. diag:n=100,loguniform,kmax=1e2,seed=1")
    src.add_argument("--matrix", help="Matrix Market file")
    p.add_argument("--rhs", default=None, help="zero | ones | random:SEED | vector file")
    p.add_argument("--x0", default=None, help="vector file for the starting point")


def _solve_args(p):
    p.add_argument("--rule", required=True, help="steplength rule, e.g. cy:l=4,m=3, or cg")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--norm", choices=("initial", "rhs"), default="initial",
                   help="stop on |g_k| <= tol*|g_0| (initial) or tol*|b| (rhs)")
    p.add_argument("--recurrence", action="store_true",
                   help="update g by recurrence instead of recomputing A x - b")
    p.add_argument("--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cygrad", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="flat key = value file mirroring the flags")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one problem")
    _problem_args(p)
    _solve_args(p)
    p.add_argument("--history", help="write the convergence history CSV here")
    p.add_argument("--json", help="write the JSON report here")

    p = sub.add_parser("bench", help="iteration-count table over methods x thresholds")
    p.add_argument("--problems", nargs="+", default=[benchmod.DEFAULT_PROBLEM])
    p.add_argument("--rules", nargs="+", default=list(benchmod.DEFAULT_RULES))
    p.add_argument("--thresholds", nargs="+", type=float,
                   default=list(benchmod.DEFAULT_THRESHOLDS))
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--format", choices=("markdown", "csv", "json"), default="markdown")
    p.add_argument("--norm", choices=("initial", "rhs"), default="initial")
    p.add_argument("--rhs", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--output", help="write the table here instead of stdout")

    p = sub.add_parser("simulate", help="simulate GA/RA parallel steplength evaluation")
    _problem_args(p)
    _solve_args(p)
    p.add_argument("--p", type=int, required=True, help="simulated processor count")
    p.add_argument("--strategy", choices=("ga", "ra"), required=True)
    p.add_argument("--reduce-order", choices=("ascending", "tree"), default="ascending")
    p.add_argument("--out-prefix", help="write PREFIX_history.csv and PREFIX_comm.csv")

    p = sub.add_parser("generate", help="write a generated problem as Matrix Market")
    p.add_argument("spec", help="diag:... or spd2d:seed=3,cond=100")
    p.add_argument("--output", required=True, help="path prefix; writes .mtx, _rhs.txt, _x0.txt")
    return ap


def _config_tokens(path) -> list[str]:
    tokens = []
    for ln in Path(path).read_text().splitlines():
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        key, eq, val = ln.partition("=")
        if not eq:
            raise UsageError(f"config line {ln!r} is not key = value")
        key, val = key.strip().replace("_", "-"), val.strip()
        if key in BOOL_FLAGS:
            if val.lower() in ("1", "true", "yes", "on"):
                tokens.append(f"--{key}")
        else:
            tokens.append(f"--{key}")
            tokens.extend(val.split())
    return tokens


def _expand_config(argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return rest
    commands = {"solve", "bench", "simulate", "generate"}
    idx = next((i for i, a in enumerate(rest) if a in commands), None)
    if idx is None:
        return rest
    return rest[:idx + 1] + _config_tokens(known.config) + rest[idx + 1:]


def _problem(args, rep=0):
    from .problems import read_vector

    ref = args.gen if args.gen else f"mm:{args.matrix}"
    prob = build_problem(ref, rep, args.rhs)
    if args.x0:
        prob.x0 = read_vector(args.x0)
        if prob.x0.shape != (prob.n,):
            raise ConfigError(f"x0 has {prob.x0.size} values, operator has n={prob.n}")
    return prob


def _config(args):
    rule = None if args.rule.lower() == "cg" else parse_rule(args.rule)
    return SolveConfig(rule=rule, tol=args.tol, max_iter=args.max_iter, norm_ref=args.norm,
                       recurrence=args.recurrence)


def cmd_solve(args) -> int:
    prob = _problem(args)
    for w in prob.warnings:
        print(f"warning: {w}", file=sys.stderr)
    h = solve(prob, _config(args))
    if args.history:
        with open(args.history, "w") as fh:
            h.to_csv(fh)
    if args.json:
        doc = h.to_json(include_x=prob.n <= 100000)
        doc["problem"] = prob.label
        Path(args.json).write_text(json.dumps(doc, indent=1))
    if not args.quiet:
        print(f"{prob.label}  rule={h.method}  status={h.status}  iterations={h.iterations}  "
              f"|g|/|g0|={h.final_norm / h.initial_norm if h.initial_norm else 0.0:.3e}")
        if h.message:
            print(h.message)
    return STATUS_EXIT[h.status]


def cmd_bench(args) -> int:
    spec = benchmod.BenchSpec(
        problems=args.problems, rules=args.rules, thresholds=args.thresholds,
        repetitions=args.repetitions, max_iter=args.max_iter, output=args.format,
        norm_ref=args.norm, rhs_policy=args.rhs, jobs=args.jobs,
    )
    text = benchmod.render(benchmod.run_bench(spec), spec.output)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    prob = _problem(args)
    cfg = _config(args)
    if cfg.rule is None:
        raise ConfigError("simulate needs a steplength rule, not cg")
    plan = partition_rows(prob.n, args.p)
    h, trace = simulate_parallel_solve(prob, cfg.rule, plan, args.strategy, cfg,
                                       args.reduce_order)
    if args.out_prefix:
        with open(f"{args.out_prefix}_history.csv", "w") as fh:
            h.to_csv(fh)
        with open(f"{args.out_prefix}_comm.csv", "w") as fh:
            trace.to_csv(fh)
    if not args.quiet:
        print(f"{prob.label}  rule={h.method}  strategy={args.strategy.upper()}  p={args.p}  "
              f"status={h.status}  iterations={h.iterations}")
        print(f"steplength traffic={trace.total_steplength_traffic}  "
              f"gradient gather={trace.total_gather_volume}  "
              f"max divergence={trace.max_divergence:.3e}")
    return STATUS_EXIT[h.status]


def cmd_generate(args) -> int:
    kind, _ = parse_generator(args.spec)
    prob = build_problem(args.spec)
    prefix = args.output[:-4] if args.output.endswith(".mtx") else args.output
    mtx = f"{prefix}.mtx"
    write_matrix_market(mtx, prob.operator, comment=f"generated by cygrad: {args.spec}")
    write_vector(f"{prefix}_rhs.txt", prob.rhs)
    write_vector(f"{prefix}_x0.txt", prob.x0)
    back = read_matrix_market(mtx)
    rng = np.random.default_rng(0)
    for v in [np.eye(prob.n)[i] for i in range(min(prob.n, 4))] + [rng.standard_normal(prob.n)]:
        a, b = prob.operator.matvec(v), back.matvec(v)
        if np.any(np.abs(a - b) > 1e-14 * np.maximum(np.abs(a), 1e-300)):
            print("round-trip check failed", file=sys.stderr)
            return EXIT_BREAKDOWN
    print(f"wrote {mtx} ({kind}, n={prob.n}, nnz={back.nnz})")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "bench": cmd_bench, "simulate": cmd_simulate,
            "generate": cmd_generate}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_expand_config(argv))
    except UsageError as exc:
        print(f"cygrad: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (RuleParseError, ConfigError, FormatError, ValueError, OSError) as exc:
        print(f"cygrad: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
