"""Single-process simulation of distributed steplength evaluation.

Rows of ``A`` are split into ``p`` contiguous blocks, one per simulated
processor. Two strategies compute the Rayleigh quotient ``g'g / g'Ag``:

* GA (gather): every block computes ``q_i = A_i g``, the pieces are
  all-gathered into ``q`` and ``g'q`` is taken globally in the canonical
  order. Bit-identical to the sequential solve; costs ``(p-1) n`` scalars.
* RA (reduce): every block computes ``c_i = g_i' q_i`` locally and the ``p``
  partials are sum-reduced. Costs ``p-1`` scalars but regroups the sum.

Both strategies also all-gather the new gradient every iteration.
Traffic is counted in scalar values crossing the simulated interconnect.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import SpdOperator, ZeroGradient, dot, finite_ratio, rayleigh_step
from .solver import ConvergenceHistory, SolveConfig, solve_gradient

STRATEGIES = ("ga", "ra")


@dataclass(frozen=True)
class PartitionPlan:
    n: int
    p: int
    row_ranges: tuple[tuple[int, int], ...]  # half-open, 0-based

    @property
    def sizes(self):
        return [hi - lo for lo, hi in self.row_ranges]


def partition_rows(n: int, p: int) -> PartitionPlan:
    """Near-equal contiguous blocks; the first ``n % p`` blocks get one extra row."""
    if not 1 <= p <= n:
        raise ValueError(f"need 1 <= p <= n, got p={p}, n={n}")
    base, extra = divmod(n, p)
    ranges, lo = [], 0
    for i in range(p):
        hi = lo + base + (1 if i < extra else 0)
        ranges.append((lo, hi))
        lo = hi
    return PartitionPlan(n, p, tuple(ranges))


def gather_cost(plan: PartitionPlan) -> int:
    """Scalars moved by one all-gather: each processor receives what it lacks."""
    return sum(plan.n - s for s in plan.sizes)


def _tree_sum(vals):
    vals = list(vals)
    while len(vals) > 1:
        nxt = [vals[i] + vals[i + 1] for i in range(0, len(vals) - 1, 2)]
        if len(vals) % 2:
            nxt.append(vals[-1])
        vals = nxt
    return vals[0]


@dataclass
class CommRecord:
    k: int
    strategy: str
    scalars_sent: int
    gather_volume: int
    alpha: float
    divergence: float


@dataclass
class CommTrace:
    records: list[CommRecord] = field(default_factory=list)

    @property
    def total_steplength_traffic(self) -> int:
        return sum(r.scalars_sent for r in self.records)

    @property
    def total_gather_volume(self) -> int:
        return sum(r.gather_volume for r in self.records)

    @property
    def max_divergence(self) -> float:
        return max((r.divergence for r in self.records), default=0.0)

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "strategy", "scalars_sent", "gather_volume", "alpha", "divergence"])
        for r in self.records:
            w.writerow([r.k, r.strategy.upper(), r.scalars_sent, r.gather_volume,
                        repr(r.alpha), repr(r.divergence)])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


class DistributedQuotient:
    """Drop-in replacement for :func:`rayleigh_step` routing through GA or RA.

    ``scalars_sent`` accumulates steplength traffic until reset.
    """

    def __init__(self, plan: PartitionPlan, strategy: str, reduce_order: str = "ascending"):
        if strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
        if reduce_order not in ("ascending", "tree"):
            raise ValueError(f"reduce_order must be 'ascending' or 'tree', got {reduce_order!r}")
        self.plan = plan
        self.strategy = strategy
        self.reduce_order = reduce_order
        self.scalars_sent = 0

    def blocks(self, A: SpdOperator, v: np.ndarray):
        return [A.matvec_rows(v, lo, hi) for lo, hi in self.plan.row_ranges]

    def gathered_matvec(self, A, v):
        q = np.concatenate(self.blocks(A, v))
        self.scalars_sent += gather_cost(self.plan)
        return q

    def allreduce(self, partials):
        self.scalars_sent += self.plan.p - 1
        if self.reduce_order == "tree":
            return _tree_sum(partials)
        total = 0.0
        for c in partials:
            total += c
        return total

    def __call__(self, A: SpdOperator, g: np.ndarray, rho: int = 0) -> float:
        if rho < 0:
            raise ValueError(f"rho must be nonnegative, got {rho}")
        if not np.any(g):
            raise ZeroGradient("steplength requested for a zero gradient")
        w = g
        for _ in range(rho):
            w = self.gathered_matvec(A, w)
        num = dot(g, w)
        if self.strategy == "ga":
            den = dot(g, self.gathered_matvec(A, w))
        else:
            q_blocks = self.blocks(A, w)
            den = self.allreduce(
                dot(g[lo:hi], q) for (lo, hi), q in zip(self.plan.row_ranges, q_blocks)
            )
        return finite_ratio(num, den)


def ga_steplength(plan: PartitionPlan, A: SpdOperator, g: np.ndarray, k: int = 0):
    return _single(plan, A, g, "ga", k)


def ra_steplength(plan: PartitionPlan, A: SpdOperator, g: np.ndarray, k: int = 0,
                  reduce_order: str = "ascending"):
    return _single(plan, A, g, "ra", k, reduce_order)


def _single(plan, A, g, strategy, k, reduce_order="ascending"):
    q = DistributedQuotient(plan, strategy, reduce_order)
    alpha = q(A, g, 0)
    seq = rayleigh_step(A, g, 0)
    rec = CommRecord(k, strategy, q.scalars_sent, 0, alpha, abs(alpha - seq) / abs(seq))
    return alpha, rec


def simulate_parallel_solve(problem, rule, plan: PartitionPlan, strategy: str,
                            config: SolveConfig, reduce_order: str = "ascending"):
    """Solve with every steplength dot product routed through ``strategy``.

    A shadow context replays each step with the sequential kernel on the
    same iterate; ``divergence`` is the relative gap between the two
    steplengths.
    """
    if plan.n != problem.operator.n:
        raise ValueError(f"plan is for n={plan.n}, problem has n={problem.operator.n}")
    if rule is None:
        raise ValueError("simulation needs a steplength rule")
    if config.rule is not rule:
        config = SolveConfig(**{**config.__dict__, "rule": rule})
    kernel = DistributedQuotient(plan, strategy, reduce_order)
    trace = CommTrace()
    gather = gather_cost(plan)
    shadow = {}

    def monitor(ctx, step):
        sh = shadow.get("ctx")
        if sh is None:
            sh = shadow["ctx"] = rule.new_context(ctx.operator, ctx.g_curr)
        else:
            sh.advance(ctx.g_curr, ctx.alpha_prev)
        seq = rule.step(sh).alpha
        div = abs(step.alpha - seq) / abs(seq)
        trace.records.append(
            CommRecord(ctx.k, strategy, kernel.scalars_sent, gather, step.alpha, div)
        )
        kernel.scalars_sent = 0

    history = solve_gradient(problem, config, quotient=kernel, monitor=monitor)
    return history, trace
