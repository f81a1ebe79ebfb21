"""End-to-end acceptance checks, one group per numbered criterion.

Each group records a verdict per sub-case; ``conftest.py`` prints one
PASS/FAIL line per criterion in the terminal summary. Run alone with
``pytest tests/test_acceptance.py -v``.
"""
import os
from collections import defaultdict

import numpy as np
import pytest

from cygrad.bench import BenchSpec, run_bench, to_markdown
from cygrad.linalg import DiagonalOperator, as_vector
from cygrad.parallel import partition_rows, simulate_parallel_solve
from cygrad.problems import (
    ProblemInstance, SpectrumSpec, build_problem, generate_diagonal, generate_spd_2d,
    read_matrix_market,
)
from cygrad.solver import SolveConfig, Status, solve_cg, solve_gradient
from cygrad.steplengths import Branch, parse_rule

from conftest import DATA
from test_problems import dense_from_file

EPS = np.finfo(float).eps
TITLES = {
    1: "hand trace cy:l=1,m=1 on diag(1,2)",
    2: "two-dimensional termination within 3 iterations",
    3: "CY steps satisfy 1 <= 1/alpha <= 2*lambda_n",
    4: "Yuan bracket at every Y step",
    5: "GMR specializes to SD and BB1",
    6: "CY R-linear decay on n=1000",
    7: "bench protocol on the n=50000 stand-in",
    8: "CG terminates within 55 iterations on 50 eigenvalues",
    9: "GA exact, RA bounded, traffic model",
    10: "Matrix Market CSR matvec vs dense brute force",
}
RESULTS = defaultdict(dict)


def record(crit, case, ok, detail=""):
    RESULTS[crit][case] = (bool(ok), detail)
    assert ok, f"criterion {crit} [{case}]: {detail}"


def summary_lines():
    lines = []
    for crit in sorted(TITLES):
        cases = RESULTS.get(crit)
        if not cases:
            lines.append(f"criterion {crit:2d}: NOT RUN  {TITLES[crit]}")
            continue
        bad = [c for c, (ok, _) in cases.items() if not ok]
        verdict = "PASS" if not bad else "FAIL"
        tail = f"  failing: {', '.join(bad)}" if bad else ""
        lines.append(f"criterion {crit:2d}: {verdict}  {TITLES[crit]} "
                     f"({len(cases) - len(bad)}/{len(cases)} cases){tail}")
    return lines


# 1 -------------------------------------------------------------------------

def test_c1_hand_trace():
    prob = ProblemInstance(DiagonalOperator([1.0, 2.0]), as_vector([0.0, 0.0]),
                           as_vector([1.0, 1.0]))
    h = solve_gradient(prob, SolveConfig(parse_rule("cy:l=1,m=1"), tol=1e-300, max_iter=3,
                                         record_iterates=True))
    alphas = [r.alpha for r in h.steps()]
    xs = h.iterates
    ok = (np.allclose(alphas, [5 / 9, 1 / 2, 1.0], rtol=1e-15, atol=0)
          and np.allclose(xs[1], [4 / 9, -1 / 9], rtol=0, atol=1e-16)
          and np.allclose(xs[2], [2 / 9, 0.0], rtol=0, atol=1e-16)
          and [r.branch for r in h.steps()] == [Branch.SD, Branch.Y, Branch.SD]
          and h.records[3].grad_norm <= 1e-14)
    record(1, "trace", ok, f"alphas={alphas}, |g3|={h.records[-1].grad_norm:.2e}")


# 2 -------------------------------------------------------------------------

@pytest.mark.parametrize("text", ["dy", "yb", "cy:l=1,m=1", "cy:l=4,m=3", "cy:l=2,m=5"])
def test_c2_two_dim_termination(text):
    worst, bad = 0, []
    for seed in range(100):
        prob = generate_spd_2d(seed, 1e3)
        h = solve_gradient(prob, SolveConfig(parse_rule(text), tol=1e-10, max_iter=50))
        k = h.first_below(1e-10 * h.initial_norm)
        worst = max(worst, k if k is not None else 99)
        if k is None or k > 3:
            bad.append(seed)
    record(2, text, not bad, f"{len(bad)}/100 seeds need more than 3 iterations (worst k={worst})")


# 3 -------------------------------------------------------------------------

@pytest.mark.parametrize("lmax", [1e2, 1e4])
def test_c3_property_a_condition_one(lmax):
    prob = generate_diagonal(SpectrumSpec(100, "loguniform", lmax, seed=0))
    h = solve_gradient(prob, SolveConfig(parse_rule("cy:l=4,m=3"), tol=1e-8))
    inv = np.array([1.0 / r.alpha for r in h.steps()])
    ok = h.status is Status.CONVERGED and inv.min() >= 1.0 and inv.max() <= 2 * lmax + 1e-9
    record(3, f"lambda_n={lmax:g}", ok,
           f"status={h.status}, 1/alpha in [{inv.min():.17g}, {inv.max():.6g}]")


# 4 -------------------------------------------------------------------------

Y_FAMILIES = ["y", "dy", "yb", "ybr:m=2", "cy:l=1,m=1", "cy:l=4,m=3", "cy:l=2,m=5"]


def y_step_problems():
    for seed in range(3):
        yield generate_diagonal(SpectrumSpec(100, "loguniform", 1e3, seed=seed))
        yield generate_diagonal(SpectrumSpec(200, "uniform", 1e2, seed=seed))
    for seed in range(20):
        yield generate_spd_2d(seed, 1e3)
    yield build_problem(str(DATA / "laplace2d_100.mtx"), rhs_policy="ones")


@pytest.mark.parametrize("text", Y_FAMILIES)
def test_c4_yuan_bracket(text):
    total, low_bad, high_bad = 0, 0, 0
    for prob in y_step_problems():
        h = solve_gradient(prob, SolveConfig(parse_rule(text), tol=1e-10, max_iter=3000))
        for r in h.steps():
            if r.branch is not Branch.Y:
                continue
            sp, sc = r.sd_pair
            total += 1
            low_bad += not (1 / (1 / sp + 1 / sc) * (1 - 1e-12) < r.alpha)
            high_bad += not (r.alpha < min(sp, sc) * (1 + 1e-12))
    ok = total > 0 and low_bad == 0 and high_bad == 0
    record(4, text, ok, f"{total} Y steps, lower violated {low_bad}, upper violated {high_bad}")


# 5 -------------------------------------------------------------------------

@pytest.mark.parametrize("gmr,ref", [("gmr:tau=lag0,rho=0", "sd"),
                                     ("gmr:tau=lag1,rho=0", "bb1")])
def test_c5_gmr_specialization(gmr, ref):
    bad = []
    for seed in range(5):
        prob = generate_diagonal(SpectrumSpec(50, "loguniform", 1e3, seed=seed))
        cfg = dict(tol=1e-300, max_iter=200, record_iterates=True)
        a = solve_gradient(prob, SolveConfig(parse_rule(gmr), **cfg))
        b = solve_gradient(prob, SolveConfig(parse_rule(ref), **cfg))
        same = (len(a.iterates) == len(b.iterates) == 201
                and all(np.array_equal(u, v) for u, v in zip(a.iterates, b.iterates)))
        if not same:
            bad.append(seed)
    record(5, f"{gmr} == {ref}", not bad, f"seeds differing: {bad}")


# 6 -------------------------------------------------------------------------

def test_c6_r_linear_decay():
    prob = generate_diagonal(SpectrumSpec(1000, "loguniform", 1e4, seed=0))
    h = solve_gradient(prob, SolveConfig(parse_rule("cy:l=4,m=3"), tol=1e-6, max_iter=10000))
    norms = np.array([r.grad_norm for r in h.records])
    # envelope M_k = max_{j >= k} |g_j| dominates the tail
    env = np.maximum.accumulate(norms[::-1])[::-1]
    slope = np.polyfit(np.arange(env.size), np.log(env), 1)[0]
    ok = h.status is Status.CONVERGED and slope < 0
    record(6, "cy:l=4,m=3", ok, f"status={h.status}, iterations={h.iterations}, slope={slope:.3e}")


# 7 -------------------------------------------------------------------------

def test_c7_bench_protocol():
    spec = BenchSpec(jobs=min(7, os.cpu_count() or 1))
    assert spec.max_iter == 10000 and spec.problems[0].startswith("diag:n=50000")
    result = run_bench(spec)
    table = to_markdown(result)
    rows = {r["method"]: r for r in result["tables"][0]["rows"]}
    th = result["thresholds"]
    sd = rows["SD"]["cells"][th.index(1e-3)].value
    cy = rows["CY"]["cells"][th.index(1e-5)].value
    labels = [ln.split("|")[1].strip() for ln in table.splitlines() if ln.startswith("| ") and
              not ln.startswith("| |")]
    defaults = [str(parse_rule(r["rule"])) if r["rule"] != "cg" else "cg" for r in rows.values()]
    ok = (labels == ["CG", "CY", "CSD", "CBB", "DY", "BB1", "SD"]
          and defaults[1:4] == ["cy:l=4,m=3", "csd:m=3", "cbb:m=4"]
          and sd is None and cy is not None)
    print(table)
    record(7, "table", ok, f"SD@1e-3={sd}, CY@1e-5={cy}, rows={labels}")


# 8 -------------------------------------------------------------------------

def test_c8_cg_termination():
    prob = generate_diagonal(SpectrumSpec(50, "uniform", 1e2, seed=0))
    assert np.unique(prob.operator.values).size == 50
    h = solve_cg(prob, SolveConfig(None, tol=1e-12, max_iter=1000))
    k = h.first_below(1e-12 * h.initial_norm)
    record(8, "uniform n=50", k is not None and k <= 55, f"iterations={k}")


# 9 -------------------------------------------------------------------------

PAR_PROBLEM = "diag:n=1000,loguniform,kmax=1e3,seed=2,rhs=random:3"
PAR_RULES = ["sd", "bb1", "dy", "cy:l=4,m=3", "csd:m=3", "cbb:m=4"]


@pytest.mark.parametrize("p", [1, 2, 4, 8])
def test_c9_ga_bit_identical(p):
    prob = build_problem(PAR_PROBLEM)
    bad = []
    for text in PAR_RULES:
        cfg = SolveConfig(parse_rule(text), tol=1e-10, max_iter=10000)
        seq = solve_gradient(prob, cfg)
        h, tr = simulate_parallel_solve(prob, cfg.rule, partition_rows(prob.n, p), "ga", cfg)
        if not (np.array_equal(h.final_x, seq.final_x)
                and [r.alpha for r in h.records] == [r.alpha for r in seq.records]
                and tr.max_divergence == 0.0):
            bad.append(text)
    record(9, f"GA p={p}", not bad, f"rules differing: {bad}")


@pytest.mark.parametrize("p", [2, 4, 8])
def test_c9_ra_bounded(p):
    prob = build_problem(PAR_PROBLEM)
    worst_div, worst_x = 0.0, 0.0
    for text in PAR_RULES:
        cfg = SolveConfig(parse_rule(text), tol=1e-12, max_iter=20000)
        seq = solve_gradient(prob, cfg)
        h, tr = simulate_parallel_solve(prob, cfg.rule, partition_rows(prob.n, p), "ra", cfg)
        worst_div = max(worst_div, tr.max_divergence)
        rel = np.linalg.norm(h.final_x - seq.final_x) / np.linalg.norm(seq.final_x)
        worst_x = max(worst_x, rel)
    ok = worst_div <= 10 * prob.n * EPS and worst_x <= 1e-8
    record(9, f"RA p={p}", ok, f"divergence/(n eps)={worst_div / (prob.n * EPS):.3g}, "
                               f"final x rel gap={worst_x:.2e}")


def test_c9_traffic_model():
    per_step = {}
    for n in (250, 500, 1000):
        for p in (2, 4, 8):
            prob = build_problem(f"diag:n={n},loguniform,kmax=1e2,seed=0")
            cfg = SolveConfig(parse_rule("sd"), tol=1e-6, max_iter=3)
            plan = partition_rows(n, p)
            _, ga = simulate_parallel_solve(prob, cfg.rule, plan, "ga", cfg)
            _, ra = simulate_parallel_solve(prob, cfg.rule, plan, "ra", cfg)
            per_step[n, p] = ({r.scalars_sent for r in ga.records},
                              {r.scalars_sent for r in ra.records})
    ok = all(ga == {(p - 1) * n} and ra == {p - 1} for (n, p), (ga, ra) in per_step.items())
    record(9, "traffic", ok, f"per-step GA/RA scalars: {per_step}")


# 10 ------------------------------------------------------------------------

def test_c10_matrix_market_oracle():
    rng = np.random.default_rng(0)
    bad, checked = [], 0
    for path in sorted(DATA.glob("*.mtx")):
        dense = np.array(dense_from_file(path))
        n = dense.shape[0]
        if n > 200:
            continue
        A = read_matrix_market(path)
        checked += 1
        for v in list(np.eye(n)[: min(n, 10)]) + [rng.standard_normal(n) for _ in range(5)]:
            want = [sum(dense[i, j] * v[j] for j in range(n)) for i in range(n)]
            got = A.matvec(v)
            if not np.allclose(got, want, rtol=1e-13, atol=1e-300):
                bad.append(path.name)
                break
    record(10, "bundled", checked > 0 and not bad, f"{checked} matrices, mismatched: {bad}")
