"""Steplength rules for the gradient iteration ``x_{k+1} = x_k - alpha_k g_k``.

Each rule reads a :class:`SolverContext` describing iteration ``k`` and
returns a :class:`StepResult`. Rules never clip or safeguard; anything
non-finite or non-positive raises :class:`NumericalBreakdown`.

Rule strings (CLI and config files)::

    sd  bb1  bb2  y  dy  yb  ybr:m=2  csd:m=3  cbb:m=4  cy:l=4,m=3
    gmr:tau=lag1,rho=0        gmr:tau=cycle3,rho=0/1,m=2
"""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .linalg import NumericalBreakdown, SpdOperator, ZeroGradient, dot, rayleigh_step

Quotient = Callable[[SpdOperator, np.ndarray, int], float]


class RuleSequencingError(RuntimeError):
    """A rule asked for history the context does not hold."""


class ScheduleViolation(ValueError):
    pass


class RuleParseError(ValueError):
    pass


class Branch(str, enum.Enum):
    SD = "SD"
    Y = "Y"
    BB1 = "BB1"
    BB2 = "BB2"
    HOLD = "HOLD"
    GMR = "GMR"
    CG = "CG"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class StepResult:
    alpha: float
    branch: Branch


@dataclass
class SolverContext:
    """Mutable per-solve state consumed by the rules at iteration ``k``.

    ``quotient`` evaluates generalized Rayleigh steplengths; the parallel
    simulator swaps it for a distributed version.
    """

    operator: SpdOperator
    g_curr: np.ndarray
    k: int = 0
    g_prev: np.ndarray | None = None
    alpha_prev: float | None = None
    sd_curr: float | None = None
    sd_prev: float | None = None
    s_prev_sq: float | None = None
    quotient: Quotient = rayleigh_step
    depth: int = 1
    grads: deque = field(default=None, repr=False)

    def __post_init__(self):
        if self.grads is None:
            self.grads = deque([(self.k, self.g_curr)], maxlen=self.depth)

    def sd(self) -> float:
        if self.sd_curr is None:
            self.sd_curr = self.quotient(self.operator, self.g_curr, 0)
        return self.sd_curr

    def gradient(self, j: int) -> np.ndarray:
        for idx, g in self.grads:
            if idx == j:
                return g
        raise RuleSequencingError(f"gradient g_{j} is not retained at k={self.k}")

    def advance(self, g_next: np.ndarray, alpha: float) -> None:
        """Shift to iteration ``k+1`` after taking step ``alpha``."""
        self.s_prev_sq = alpha * alpha * dot(self.g_curr, self.g_curr)
        self.g_prev = self.g_curr
        self.sd_prev = self.sd_curr
        self.alpha_prev = alpha
        self.g_curr = g_next
        self.sd_curr = None
        self.k += 1
        self.grads.append((self.k, g_next))


def _hold(ctx: SolverContext) -> StepResult:
    if ctx.alpha_prev is None:
        raise RuleSequencingError(f"hold requested at k={ctx.k} with no previous steplength")
    return StepResult(ctx.alpha_prev, Branch.HOLD)


def sd_step(ctx: SolverContext) -> StepResult:
    return StepResult(ctx.sd(), Branch.SD)


def bb1_step(ctx: SolverContext) -> StepResult:
    # undefined at k=0; the SD value is used there
    if ctx.k == 0:
        return StepResult(ctx.sd(), Branch.BB1)
    if ctx.sd_prev is not None:
        return StepResult(ctx.sd_prev, Branch.BB1)
    return StepResult(ctx.quotient(ctx.operator, ctx.g_prev, 0), Branch.BB1)


def bb2_step(ctx: SolverContext) -> StepResult:
    if ctx.k == 0:
        return StepResult(ctx.sd(), Branch.BB2)
    return StepResult(ctx.quotient(ctx.operator, ctx.g_prev, 1), Branch.BB2)


def yuan_value(sd_prev: float, sd_curr: float, g_sq: float, s_prev_sq: float) -> float:
    a, c = 1.0 / sd_prev, 1.0 / sd_curr
    denom = math.sqrt((a - c) ** 2 + 4.0 * g_sq / s_prev_sq) + a + c
    return 2.0 / denom


def yuan_step(ctx: SolverContext) -> StepResult:
    """Yuan's steplength from two consecutive SD quotients and ``|s_{k-1}|^2``."""
    if ctx.k < 1 or ctx.sd_prev is None or ctx.s_prev_sq is None:
        raise RuleSequencingError(f"Yuan step at k={ctx.k} needs the previous SD quotient")
    if ctx.s_prev_sq == 0.0:
        raise ZeroGradient("previous step was null")
    sd_curr = ctx.sd()
    alpha = yuan_value(ctx.sd_prev, sd_curr, dot(ctx.g_curr, ctx.g_curr), ctx.s_prev_sq)
    if not math.isfinite(alpha) or alpha <= 0:
        raise NumericalBreakdown(f"Yuan steplength {alpha!r} at k={ctx.k}")
    return StepResult(alpha, Branch.Y)


def y_rule(ctx: SolverContext) -> StepResult:
    if ctx.k == 0:
        return sd_step(ctx)
    return yuan_step(ctx)


def dy_rule(ctx: SolverContext) -> StepResult:
    return sd_step(ctx) if ctx.k % 4 < 2 else yuan_step(ctx)


def _yb_phase(ctx, r):
    return yuan_step(ctx) if r == 1 else sd_step(ctx)


def yb_rule(ctx: SolverContext) -> StepResult:
    return _yb_phase(ctx, ctx.k % 3)


def ybr_rule(ctx: SolverContext, m: int) -> StepResult:
    r = ctx.k % (3 + m)
    if r > 2:
        return _hold(ctx)
    return _yb_phase(ctx, r)


def csd_rule(ctx: SolverContext, m: int) -> StepResult:
    return sd_step(ctx) if ctx.k % m == 0 else _hold(ctx)


def cbb_rule(ctx: SolverContext, m: int) -> StepResult:
    return bb1_step(ctx) if ctx.k % m == 0 else _hold(ctx)


def cy_rule(ctx: SolverContext, l: int, m: int) -> StepResult:
    r = ctx.k % (l + m + 2)
    # r == 1 also satisfies r < l+2; the Yuan case is listed first and wins
    if r == 1:
        return yuan_step(ctx)
    if r < l + 2:
        return sd_step(ctx)
    return _hold(ctx)


def gmr_rule(ctx: SolverContext, tau, rho, m: int) -> StepResult:
    k = ctx.k
    t, q = int(tau(k)), int(rho(k))
    if not max(0, k - m) <= t <= k:
        raise ScheduleViolation(f"tau({k}) = {t} outside [{max(0, k - m)}, {k}]")
    if q < 0:
        raise ScheduleViolation(f"rho({k}) = {q} is negative")
    if t == k and q == 0:
        return StepResult(ctx.sd(), Branch.GMR)
    if t == k - 1 and q == 0 and ctx.sd_prev is not None:
        return StepResult(ctx.sd_prev, Branch.GMR)
    return StepResult(ctx.quotient(ctx.operator, ctx.gradient(t), q), Branch.GMR)


# -- GMR schedules -----------------------------------------------------------

@dataclass(frozen=True)
class Lag:
    """tau(k) = max(0, k - lag)."""

    lag: int

    def __call__(self, k):
        return max(0, k - self.lag)

    @property
    def retard(self):
        return self.lag

    def __str__(self):
        return f"lag{self.lag}"


@dataclass(frozen=True)
class Cycle:
    """tau(k) = start of the current length-``c`` cycle; gives CSD with rho=0."""

    c: int

    def __call__(self, k):
        return self.c * (k // self.c)

    @property
    def retard(self):
        return self.c - 1

    def __str__(self):
        return f"cycle{self.c}"


@dataclass(frozen=True)
class RhoCycle:
    values: tuple[int, ...]

    def __call__(self, k):
        return self.values[k % len(self.values)]

    def __str__(self):
        return "/".join(str(v) for v in self.values)


# -- rule object and grammar -------------------------------------------------

KINDS = ("sd", "bb1", "bb2", "y", "dy", "yb", "ybr", "csd", "cbb", "cy", "gmr")
DEFAULTS = {"csd": {"m": 3}, "cbb": {"m": 4}, "cy": {"l": 4, "m": 3}}


@dataclass(frozen=True)
class SteplengthRule:
    kind: str
    l: int | None = None
    m: int | None = None
    tau: Callable[[int], int] | None = None
    rho: Callable[[int], int] | None = None

    def __post_init__(self):
        kind = self.kind
        if kind not in KINDS:
            raise ValueError(f"unknown rule kind {kind!r}")
        if kind == "cy" and (self.l is None or self.l < 1):
            raise ValueError(f"cy needs l >= 1, got l={self.l}")
        if kind in ("cy", "csd", "cbb", "ybr") and (self.m is None or self.m < 1):
            raise ValueError(f"{kind} needs m >= 1, got m={self.m}")
        if kind == "gmr":
            if self.tau is None or self.rho is None:
                raise ValueError("gmr needs tau and rho schedules")
            m = self.m if self.m is not None else getattr(self.tau, "retard", None)
            if m is None or m < 0:
                raise ValueError("gmr needs a retard m >= 0")
            if m < getattr(self.tau, "retard", 0):
                raise ValueError(f"gmr retard m={m} is shorter than tau schedule {self.tau}")
            object.__setattr__(self, "m", m)

    @property
    def label(self) -> str:
        return self.kind.upper()

    @property
    def history_depth(self) -> int:
        return self.m + 1 if self.kind == "gmr" else 1

    def new_context(self, operator, g0, quotient: Quotient = rayleigh_step) -> SolverContext:
        return SolverContext(operator, g0, quotient=quotient, depth=self.history_depth)

    def step(self, ctx: SolverContext) -> StepResult:
        kind = self.kind
        if kind == "sd":
            return sd_step(ctx)
        if kind == "bb1":
            return bb1_step(ctx)
        if kind == "bb2":
            return bb2_step(ctx)
        if kind == "y":
            return y_rule(ctx)
        if kind == "dy":
            return dy_rule(ctx)
        if kind == "yb":
            return yb_rule(ctx)
        if kind == "ybr":
            return ybr_rule(ctx, self.m)
        if kind == "csd":
            return csd_rule(ctx, self.m)
        if kind == "cbb":
            return cbb_rule(ctx, self.m)
        if kind == "cy":
            return cy_rule(ctx, self.l, self.m)
        return gmr_rule(ctx, self.tau, self.rho, self.m)

    def __str__(self):
        if self.kind in ("csd", "cbb", "ybr"):
            return f"{self.kind}:m={self.m}"
        if self.kind == "cy":
            return f"cy:l={self.l},m={self.m}"
        if self.kind == "gmr":
            return f"gmr:tau={self.tau},rho={self.rho},m={self.m}"
        return self.kind


def _int_token(key, val, token):
    try:
        return int(val)
    except ValueError:
        raise RuleParseError(f"bad integer in token {token!r}") from None


def _parse_tau(val, token):
    for prefix, cls in (("lag", Lag), ("cycle", Cycle)):
        if val.startswith(prefix):
            n = _int_token("tau", val[len(prefix):], token)
            if n < (0 if cls is Lag else 1):
                raise RuleParseError(f"bad tau schedule in token {token!r}")
            return cls(n)
    raise RuleParseError(f"unknown tau schedule in token {token!r}")


def _parse_rho(val, token):
    vals = tuple(_int_token("rho", v, token) for v in val.split("/"))
    if any(v < 0 for v in vals):
        raise RuleParseError(f"rho must be nonnegative in token {token!r}")
    return RhoCycle(vals)


def parse_rule(text: str) -> SteplengthRule:
    """Parse a rule string such as ``cy:l=4,m=3``."""
    head, _, tail = text.strip().partition(":")
    kind = head.lower()
    if kind not in KINDS:
        raise RuleParseError(f"unknown rule {head!r}")
    allowed = {
        "ybr": {"m"}, "csd": {"m"}, "cbb": {"m"}, "cy": {"l", "m"},
        "gmr": {"tau", "rho", "m"},
    }.get(kind, set())
    params = dict(DEFAULTS.get(kind, {}))
    for token in filter(None, tail.split(",")):
        key, eq, val = token.partition("=")
        key = key.strip()
        if not eq or key not in allowed:
            raise RuleParseError(f"unexpected token {token!r} for rule {kind!r}")
        val = val.strip()
        if key == "tau":
            params[key] = _parse_tau(val, token)
        elif key == "rho":
            params[key] = _parse_rho(val, token)
        else:
            params[key] = _int_token(key, val, token)
    if kind == "gmr":
        params.setdefault("rho", RhoCycle((0,)))
        if "tau" not in params:
            raise RuleParseError("gmr rule needs a tau=... token")
    try:
        return SteplengthRule(kind, **params)
    except ValueError as exc:
        raise RuleParseError(str(exc)) from None
