import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cygrad.linalg import DiagonalOperator, as_vector
from cygrad.problems import SpectrumSpec, generate_diagonal
from cygrad.solver import SolveConfig, solve_gradient
from cygrad.steplengths import (
    Branch, Cycle, Lag, RhoCycle, RuleParseError, RuleSequencingError, ScheduleViolation,
    SolverContext, SteplengthRule, bb1_step, bb2_step, cy_rule, parse_rule, sd_step,
    yuan_step, yuan_value,
)

A12 = DiagonalOperator([1.0, 2.0])


def ctx_at(k, g=(1.0, 2.0), g_prev=(1.0, 2.0), op=A12):
    """Context at iteration k with plausible history, for branch-selection checks."""
    c = SolverContext(op, as_vector(g), k=k)
    if k > 0:
        c.g_prev = as_vector(g_prev)
        c.alpha_prev = 0.3
        c.sd_prev = 0.5
        c.s_prev_sq = 0.3 ** 2 * 5.0
    return c


def test_sd_step_examples():
    c = ctx_at(0)
    r = sd_step(c)
    assert r.branch is Branch.SD and r.alpha == pytest.approx(5 / 9, rel=1e-15)
    assert c.sd_curr == r.alpha
    assert sd_step(ctx_at(0, op=DiagonalOperator(np.ones(2)))).alpha == 1.0
    assert sd_step(ctx_at(0, g=(2 / 9, 0.0))).alpha == 1.0


def test_bb_steps():
    c = ctx_at(1, g=(0.3, 0.1))
    c.sd_prev = None
    assert bb1_step(c).alpha == pytest.approx(5 / 9, rel=1e-15)
    assert bb2_step(c).alpha == pytest.approx(9 / 17, rel=1e-15)
    assert bb2_step(c).alpha <= bb1_step(c).alpha
    # k = 0 falls back to the SD value
    c0 = ctx_at(0)
    assert bb1_step(c0).alpha == sd_step(ctx_at(0)).alpha
    assert bb1_step(c0).branch is Branch.BB1
    assert bb2_step(ctx_at(0)).alpha == sd_step(ctx_at(0)).alpha
    ident = ctx_at(1, op=DiagonalOperator(np.ones(2)))
    ident.sd_prev = None
    assert bb1_step(ident).alpha == 1.0 and bb2_step(ident).alpha == 1.0


def test_yuan_hand_value():
    # discriminant sqrt(9/25 + 16/25) = 1, denominator 1 + 9/5 + 6/5 = 4
    assert yuan_value(5 / 9, 5 / 6, 20 / 81, 125 / 81) == pytest.approx(0.5, rel=1e-15)
    c = SolverContext(A12, as_vector([4 / 9, -2 / 9]), k=1, g_prev=as_vector([1.0, 2.0]),
                      alpha_prev=5 / 9, sd_prev=5 / 9, s_prev_sq=125 / 81)
    r = yuan_step(c)
    assert r.branch is Branch.Y and r.alpha == pytest.approx(0.5, rel=1e-14)


def test_yuan_zero_gradient_limit():
    # equal SD quotients 1/c and a vanishing gradient term give 1/c
    assert yuan_value(0.25, 0.25, 0.0, 1.0) == pytest.approx(0.25)
    assert yuan_value(0.25, 0.25, 1e-30, 1.0) == pytest.approx(0.25)


def test_yuan_needs_previous_sd():
    c = ctx_at(1)
    c.sd_prev = None
    with pytest.raises(RuleSequencingError):
        yuan_step(c)
    with pytest.raises(RuleSequencingError):
        yuan_step(ctx_at(0))


# closed-form phase patterns, written independently of the rule code
def expected_branch(kind, k, l=None, m=None):
    if kind == "sd":
        return "SD"
    if kind == "dy":
        return "SD" if k % 4 < 2 else "Y"
    if kind == "yb":
        return "Y" if k % 3 == 1 else "SD"
    if kind == "ybr":
        r = k % (3 + m)
        return "HOLD" if r > 2 else ("Y" if r == 1 else "SD")
    if kind == "csd":
        return "SD" if k % m == 0 else "HOLD"
    if kind == "cbb":
        return "BB1" if k % m == 0 else "HOLD"
    if kind == "cy":
        r = k % (l + m + 2)
        return "Y" if r == 1 else ("SD" if r < l + 2 else "HOLD")
    raise AssertionError(kind)


RULES = ["sd", "dy", "yb", "ybr:m=1", "ybr:m=2", "ybr:m=5", "csd:m=1", "csd:m=3", "cbb:m=1",
         "cbb:m=4", "cy:l=1,m=1", "cy:l=4,m=3", "cy:l=2,m=5", "cy:l=7,m=1"]


@pytest.mark.parametrize("text", RULES)
def test_phase_pattern(text):
    rule = parse_rule(text)
    period = {"dy": 4, "yb": 3}.get(rule.kind, 1)
    if rule.kind == "ybr":
        period = 3 + rule.m
    elif rule.kind in ("csd", "cbb"):
        period = rule.m
    elif rule.kind == "cy":
        period = rule.l + rule.m + 2
    for k in range(10 * period + 1):
        got = rule.step(ctx_at(k)).branch.value
        assert got == expected_branch(rule.kind, k, rule.l, rule.m), (text, k)


@pytest.mark.parametrize("k, branch", [(0, "SD"), (1, "SD"), (2, "Y"), (3, "Y"), (4, "SD"),
                                       (5, "SD"), (7, "Y")])
def test_dy_examples(k, branch):
    assert parse_rule("dy").step(ctx_at(k)).branch.value == branch


def test_cy_examples():
    pattern = [parse_rule("cy:l=4,m=3").step(ctx_at(k)).branch.value for k in range(9)]
    assert pattern == ["SD", "Y", "SD", "SD", "SD", "SD", "HOLD", "HOLD", "HOLD"]
    pattern = [parse_rule("cy:l=1,m=1").step(ctx_at(k)).branch.value for k in range(4)]
    assert pattern == ["SD", "Y", "SD", "HOLD"]
    assert cy_rule(ctx_at(10), 4, 3).branch is Branch.Y


def test_ybr_and_cyclic_examples():
    assert parse_rule("ybr:m=2").step(ctx_at(3)).branch is Branch.HOLD
    assert parse_rule("ybr:m=2").step(ctx_at(5)).branch is Branch.SD
    assert parse_rule("ybr:m=1").step(ctx_at(1)).branch is Branch.Y
    assert parse_rule("csd:m=3").step(ctx_at(7)).branch is Branch.HOLD
    assert parse_rule("cbb:m=4").step(ctx_at(8)).branch is Branch.BB1
    hold = parse_rule("csd:m=3").step(ctx_at(2))
    assert hold.alpha == 0.3


@pytest.mark.parametrize("text", RULES + ["y", "bb1", "bb2"])
def test_no_hold_at_k0(text):
    assert parse_rule(text).step(ctx_at(0)).branch is not Branch.HOLD


@pytest.mark.parametrize("l, m", [(1, 1), (4, 3), (2, 5), (3, 2)])
def test_cy_yuan_never_follows_hold(l, m):
    prob = generate_diagonal(SpectrumSpec(200, "loguniform", 1e4, seed=3))
    h = solve_gradient(prob, SolveConfig(parse_rule(f"cy:l={l},m={m}"), tol=1e-12, max_iter=400))
    br = [r.branch for r in h.steps()]
    for prev, cur in zip(br, br[1:]):
        if cur is Branch.Y:
            assert prev is Branch.SD


def test_gmr_schedule_checks():
    rule = SteplengthRule("gmr", m=1, tau=lambda k: k - 2, rho=lambda k: 0)
    with pytest.raises(ScheduleViolation):
        rule.step(ctx_at(3))
    rule = SteplengthRule("gmr", m=1, tau=lambda k: k, rho=lambda k: -1)
    with pytest.raises(ScheduleViolation):
        rule.step(ctx_at(3))
    with pytest.raises(ValueError):
        SteplengthRule("gmr", m=0, tau=Lag(1), rho=RhoCycle((0,)))


def test_gmr_rho_one_is_bb2_form_on_current_gradient():
    rule = parse_rule("gmr:tau=lag0,rho=1")
    c = ctx_at(2, g=(0.7, -0.4))
    alpha = rule.step(c).alpha
    g = np.array([0.7, -0.4]); lam = np.array([1.0, 2.0])
    assert alpha == pytest.approx(np.sum(lam * g * g) / np.sum(lam ** 2 * g * g), rel=1e-15)


def test_schedules():
    assert [Lag(2)(k) for k in range(5)] == [0, 0, 0, 1, 2]
    assert [Cycle(3)(k) for k in range(7)] == [0, 0, 0, 3, 3, 3, 6]
    assert [RhoCycle((0, 1))(k) for k in range(4)] == [0, 1, 0, 1]


def test_rule_validation():
    for bad in ["cy:l=0,m=3", "cy:l=4,m=0", "csd:m=0", "ybr"]:
        with pytest.raises(RuleParseError):
            parse_rule(bad)


@pytest.mark.parametrize("text, token", [
    ("cy:l=4,q=3", "q=3"), ("csd:m=x", "m=x"), ("gmr:tau=foo", "tau=foo"), ("sd:m=2", "m=2"),
    ("zz", "zz"),
])
def test_parse_errors_name_token(text, token):
    with pytest.raises(RuleParseError, match=token):
        parse_rule(text)


def test_defaults_from_benchmark_setting():
    assert str(parse_rule("cy")) == "cy:l=4,m=3"
    assert str(parse_rule("csd")) == "csd:m=3"
    assert str(parse_rule("cbb")) == "cbb:m=4"


rule_strings = st.one_of(
    st.sampled_from(["sd", "bb1", "bb2", "y", "dy", "yb"]),
    st.builds(lambda m: f"ybr:m={m}", st.integers(1, 9)),
    st.builds(lambda m: f"csd:m={m}", st.integers(1, 9)),
    st.builds(lambda m: f"cbb:m={m}", st.integers(1, 9)),
    st.builds(lambda l, m: f"cy:l={l},m={m}", st.integers(1, 9), st.integers(1, 9)),
    st.builds(lambda j, r: f"gmr:tau=lag{j},rho={r}", st.integers(0, 5),
              st.lists(st.integers(0, 3), min_size=1, max_size=3).map(
                  lambda v: "/".join(map(str, v)))),
    st.builds(lambda c: f"gmr:tau=cycle{c},rho=0", st.integers(1, 6)),
)


@given(rule_strings)
def test_rule_string_round_trip(text):
    rule = parse_rule(text)
    again = parse_rule(str(rule))
    assert again == rule
    assert str(again) == str(rule)


def _y_steps(text, seeds=range(5)):
    for seed in seeds:
        prob = generate_diagonal(SpectrumSpec(100, "loguniform", 1e3, seed=seed))
        h = solve_gradient(prob, SolveConfig(parse_rule(text), tol=1e-10, max_iter=2000))
        st = h.steps()
        for prev, r in zip(st, st[1:]):
            if r.branch is Branch.Y:
                yield prev.branch, r


def _bracket(r):
    sp, sc = r.sd_pair
    return 1 / (1 / sp + 1 / sc), min(sp, sc)


@pytest.mark.parametrize("text", ["yb", "dy", "y", "cy:l=4,m=3", "cy:l=1,m=1", "ybr:m=2"])
def test_yuan_bracket_after_sd_step(text):
    n = 0
    for prev, r in _y_steps(text):
        lo, hi = _bracket(r)
        assert r.alpha < hi * (1 + 1e-12)
        if prev is Branch.SD:
            n += 1
            assert lo * (1 - 1e-12) < r.alpha
    assert n > 0


def test_yuan_lower_bracket_can_fail_after_yuan_step():
    # the lower bound relies on the previous step being SD; DY's second Y step is not
    lows = [r.alpha > _bracket(r)[0] for prev, r in _y_steps("dy", [0]) if prev is Branch.Y]
    assert lows and not all(lows)
