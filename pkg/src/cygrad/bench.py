"""Iteration-count tables: methods x residual thresholds.

One solve per (problem, method, repetition) runs to the smallest threshold;
the count for a larger threshold is the first iteration that crossed it.
Cells that miss a threshold within ``max_iter`` are rendered as a sentinel.
"""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .problems import build_problem
from .solver import SolveConfig, solve
from .steplengths import parse_rule

DEFAULT_RULES = ("cg", "cy:l=4,m=3", "csd:m=3", "cbb:m=4", "dy", "bb1", "sd")
DEFAULT_THRESHOLDS = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
# stand-in for the unnamed large-scale matrix: same n, log-uniform diagonal,
# b = 1 and x0 = 0 so the initial gradient is spread over the whole spectrum
DEFAULT_PROBLEM = "diag:n=50000,loguniform,kmax=1e4,seed=0,rhs=ones,x0=zero"


@dataclass
class BenchSpec:
    problems: list[str] = field(default_factory=lambda: [DEFAULT_PROBLEM])
    rules: list[str] = field(default_factory=lambda: list(DEFAULT_RULES))
    thresholds: list[float] = field(default_factory=lambda: list(DEFAULT_THRESHOLDS))
    repetitions: int = 1
    max_iter: int = 10000
    output: str = "markdown"
    norm_ref: str = "initial"
    rhs_policy: str | None = None
    jobs: int = 1

    def __post_init__(self):
        if not self.problems or not self.rules:
            raise ValueError("bench needs at least one problem and one rule")
        if any(a <= b for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ValueError("thresholds must be strictly decreasing")
        if not self.thresholds or not all(0 < t < 1 for t in self.thresholds):
            raise ValueError("thresholds must lie in (0, 1)")
        if self.repetitions < 1 or self.max_iter < 1:
            raise ValueError("repetitions and max_iter must be >= 1")
        if self.output not in ("csv", "json", "markdown"):
            raise ValueError(f"unknown output format {self.output!r}")
        for r in self.rules:
            if r.lower() != "cg":
                parse_rule(r)


def rule_label(text: str) -> str:
    return "CG" if text.lower() == "cg" else parse_rule(text).label


@dataclass
class Cell:
    counts: list[int | None]
    statuses: list[str]

    @property
    def value(self) -> float | None:
        if not self.counts or any(c is None for c in self.counts):
            return None
        return sum(self.counts) / len(self.counts)


def _run_one(args):
    ref, rule_text, rep, spec = args
    problem = build_problem(ref, rep, spec.rhs_policy)
    rule = None if rule_text.lower() == "cg" else parse_rule(rule_text)
    cfg = SolveConfig(rule=rule, tol=spec.thresholds[-1], max_iter=spec.max_iter,
                      norm_ref=spec.norm_ref)
    h = solve(problem, cfg)
    ref_norm = h.threshold / cfg.tol
    counts = []
    for t in spec.thresholds:
        k = h.first_below(t * ref_norm)
        counts.append(k)
    return problem.label, counts, str(h.status), h.elapsed


def run_bench(spec: BenchSpec) -> dict:
    jobs = [(ref, r, rep, spec) for ref in spec.problems for r in spec.rules
            for rep in range(spec.repetitions)]
    if spec.jobs > 1:
        with ProcessPoolExecutor(spec.jobs) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]

    tables = []
    it = iter(results)
    for ref in spec.problems:
        rows = []
        for r in spec.rules:
            cells = [Cell([], []) for _ in spec.thresholds]
            timings = []
            label = ref
            for _ in range(spec.repetitions):
                label, counts, status, elapsed = next(it)
                timings.append(elapsed)
                for c, k in zip(cells, counts):
                    c.counts.append(k)
                    c.statuses.append(status if k is None else "Converged")
            rows.append({"method": rule_label(r), "rule": r, "cells": cells,
                         "timings": timings})
        tables.append({"problem": ref, "label": label, "rows": rows})
    return {"thresholds": list(spec.thresholds), "max_iter": spec.max_iter,
            "repetitions": spec.repetitions, "tables": tables}


def _fmt(v: float | None, sentinel: str) -> str:
    if v is None:
        return sentinel
    return str(int(v)) if float(v).is_integer() else f"{v:.1f}"


def to_markdown(result: dict) -> str:
    """Methods as rows, thresholds as columns; per-column minima in bold, ``\\`` when the cap is exceeded."""
    th = result["thresholds"]
    out = []
    for tab in result["tables"]:
        out.append(f"Problem: {tab['label']}  (cap {result['max_iter']} iterations, "
                   f"{result['repetitions']} repetition(s))\n")
        out.append("| | " + " | ".join(f"{t:.0e}" for t in th) + " |")
        out.append("|---" * (len(th) + 1) + "|")
        best = []
        for j in range(len(th)):
            vals = [r["cells"][j].value for r in tab["rows"] if r["cells"][j].value is not None]
            best.append(min(vals) if vals else None)
        for r in tab["rows"]:
            cells = []
            for j, c in enumerate(r["cells"]):
                s = _fmt(c.value, "\\")
                if c.value is not None and c.value == best[j]:
                    s = f"**{s}**"
                cells.append(s)
            out.append(f"| {r['method']} | " + " | ".join(cells) + " |")
        out.append("")
    return "\n".join(out)


def to_csv(result: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["problem", "method", "rule"] + [f"{t:g}" for t in result["thresholds"]])
    for tab in result["tables"]:
        for r in tab["rows"]:
            w.writerow([tab["label"], r["method"], r["rule"]]
                       + [_fmt(c.value, "") for c in r["cells"]])
    return buf.getvalue()


def to_json(result: dict) -> str:
    doc = {k: result[k] for k in ("thresholds", "max_iter", "repetitions")}
    doc["tables"] = []
    for tab in result["tables"]:
        rows = []
        for r in tab["rows"]:
            rows.append({
                "method": r["method"], "rule": r["rule"],
                "iterations": [c.value for c in r["cells"]],
                "cells": [{"counts": c.counts,
                           "status_counts": {s: c.statuses.count(s) for s in sorted(set(c.statuses))}}
                          for c in r["cells"]],
                "timings_s": r["timings"],
            })
        doc["tables"].append({"problem": tab["problem"], "label": tab["label"], "rows": rows})
    return json.dumps(doc, indent=1)


def render(result: dict, fmt: str) -> str:
    return {"markdown": to_markdown, "csv": to_csv, "json": to_json}[fmt](result)
