"""Gradient iteration driver, CG baseline and Property A diagnostics."""
from __future__ import annotations

import csv
import enum
import io
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .linalg import NumericalBreakdown, SpectrumInfo, ZeroGradient, dot, rayleigh_step
from .steplengths import Branch, SteplengthRule


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIterReached"
    BREAKDOWN = "NumericalBreakdown"

    def __str__(self):
        return self.value


@dataclass
class PropertyACheckConfig:
    """Constants of Property A. ``M1=None`` means ``2 * lambda_max``."""

    xi: int = 1
    M1: float | None = None
    M2: float = 2.0
    mu_list: tuple[int, ...] | None = None  # None: every mu in 1..n-1
    upper_slack: float = 1e-9
    lower_rtol: float = 1e-12

    def __post_init__(self):
        if self.xi < 1 or self.M2 <= 0 or (self.M1 is not None and self.M1 <= 0):
            raise ValueError("need xi >= 1, M1 > 0, M2 > 0")


@dataclass
class SolveConfig:
    rule: SteplengthRule | None = None  # None only for CG
    tol: float = 1e-6
    max_iter: int = 10000
    record_history: bool = True
    diagnostics: PropertyACheckConfig | None = None
    norm_ref: str = "initial"  # or "rhs"
    recurrence: bool = False
    record_iterates: bool = False
    record_objective: bool = False

    def __post_init__(self):
        if not 0 < self.tol < 1:
            raise ValueError(f"tol must lie in (0, 1), got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.norm_ref not in ("initial", "rhs"):
            raise ValueError(f"norm_ref must be 'initial' or 'rhs', got {self.norm_ref!r}")


@dataclass
class IterRecord:
    k: int
    grad_norm: float
    branch: Branch | None = None
    alpha: float | None = None
    objective: float | None = None
    partial_energies: dict[int, float] | None = None
    next_component_sq: dict[int, float] | None = None
    # (sd_prev, sd_curr) on Yuan steps, for the bracket check
    sd_pair: tuple[float, float] | None = None


@dataclass
class ConvergenceHistory:
    records: list[IterRecord]
    status: Status
    final_x: np.ndarray
    iterations: int
    initial_norm: float
    threshold: float
    method: str = ""
    config: SolveConfig | None = None
    elapsed: float = 0.0
    iterates: list[np.ndarray] | None = None
    message: str = ""

    @property
    def final_norm(self) -> float:
        return self.records[-1].grad_norm

    def first_below(self, threshold: float) -> int | None:
        """First recorded k with ``grad_norm <= threshold``, or None."""
        for r in self.records:
            if r.grad_norm <= threshold:
                return r.k
        return None

    def steps(self):
        return [r for r in self.records if r.alpha is not None]

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "branch", "alpha", "grad_norm"])
        for r in self.records:
            w.writerow([r.k, "" if r.branch is None else str(r.branch),
                        "" if r.alpha is None else repr(r.alpha), repr(r.grad_norm)])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text

    def to_json(self, include_x: bool = True) -> dict:
        cfg = self.config
        doc = {
            "method": self.method,
            "config": None if cfg is None else {
                "rule": self.method, "tol": cfg.tol, "max_iter": cfg.max_iter,
                "norm_ref": cfg.norm_ref, "recurrence": cfg.recurrence,
            },
            "status": str(self.status),
            "message": self.message,
            "iterations": self.iterations,
            "initial_norm": self.initial_norm,
            "final_norm": self.final_norm,
            "timings": {"elapsed_s": self.elapsed},
            "records": [
                {"k": r.k, "branch": None if r.branch is None else str(r.branch),
                 "alpha": r.alpha, "grad_norm": r.grad_norm}
                for r in self.records
            ],
        }
        if include_x:
            doc["final_x"] = self.final_x.tolist()
        return doc

    def dumps(self, **kw) -> str:
        return json.dumps(self.to_json(**kw), indent=1)


def partial_gradient_energy(g: np.ndarray, mu: int) -> float:
    """Sum of the squares of the first ``mu`` gradient components."""
    if not 1 <= mu <= g.shape[0]:
        raise IndexError(f"mu={mu} outside 1..{g.shape[0]}")
    head = g[:mu]
    return dot(head, head)


def _threshold(problem, config, g0_norm):
    if config.norm_ref == "rhs":
        ref = math.sqrt(dot(problem.rhs, problem.rhs))
        if ref == 0.0:
            raise ValueError("norm_ref='rhs' needs a nonzero right-hand side")
    else:
        ref = g0_norm
    return config.tol * ref


class _Recorder:
    def __init__(self, problem, config):
        self.config = config
        self.problem = problem
        self.records: list[IterRecord] = []
        self.iterates = [] if config.record_iterates else None
        diag = config.diagnostics
        n = problem.operator.n
        if diag is None:
            self.mus = None
        else:
            self.mus = tuple(diag.mu_list) if diag.mu_list is not None else tuple(range(1, n))
            if any(not 1 <= mu <= n - 1 for mu in self.mus):
                raise ValueError(f"mu values must lie in 1..{n - 1}")

    def add(self, k, x, g, gn, final=False):
        if not (self.config.record_history or final):
            return None
        rec = IterRecord(k, gn)
        if self.config.record_objective:
            b = self.problem.rhs
            rec.objective = 0.5 * dot(x, g) - 0.5 * dot(b, x)
        if self.mus is not None:
            cum = np.add.accumulate(g * g)
            rec.partial_energies = {mu: float(cum[mu - 1]) for mu in self.mus}
            rec.next_component_sq = {mu: float(g[mu] * g[mu]) for mu in self.mus}
        if self.iterates is not None:
            self.iterates.append(x.copy())
        self.records.append(rec)
        return rec


def solve_gradient(problem, config: SolveConfig, *, quotient=rayleigh_step, monitor=None
                   ) -> ConvergenceHistory:
    """Run ``x_{k+1} = x_k - alpha_k g_k`` with the configured steplength rule.

    The gradient is recomputed as ``A x - b`` each iteration unless
    ``config.recurrence`` is set. Stops when ``|g_k| <= tol * ref``, after
    ``max_iter`` steps, or on breakdown (history kept up to that point).

    ``quotient`` replaces the Rayleigh-quotient kernel and ``monitor(ctx,
    step)`` is called after every steplength; both exist for the parallel
    simulator.
    """
    rule = config.rule
    if rule is None:
        raise ValueError("solve_gradient needs a steplength rule")
    A, b = problem.operator, problem.rhs
    t0 = time.perf_counter()
    x = np.array(problem.x0, dtype=np.float64)
    g = A.matvec(x) - b
    g0_norm = math.sqrt(dot(g, g))
    threshold = _threshold(problem, config, g0_norm)
    rec = _Recorder(problem, config)
    ctx = rule.new_context(A, g, quotient)
    status, message = None, ""
    k = 0
    while True:
        gn = math.sqrt(dot(g, g))
        if not math.isfinite(gn):
            status, message = Status.BREAKDOWN, f"non-finite gradient at k={k}"
            break
        if gn <= threshold:
            status = Status.CONVERGED
            break
        if k >= config.max_iter:
            status = Status.MAX_ITER
            break
        r = rec.add(k, x, g, gn)
        try:
            step = rule.step(ctx)
        except (NumericalBreakdown, ZeroGradient) as exc:
            status, message = Status.BREAKDOWN, f"k={k}: {exc}"
            if r is not None:
                rec.records.pop()
            break
        if monitor is not None:
            monitor(ctx, step)
        if r is not None:
            r.alpha, r.branch = step.alpha, step.branch
            if step.branch is Branch.Y:
                r.sd_pair = (ctx.sd_prev, ctx.sd_curr)
        x = x - step.alpha * g
        if config.recurrence:
            g = g - step.alpha * A.matvec(g)
        else:
            g = A.matvec(x) - b
        ctx.advance(g, step.alpha)
        k += 1
    if status is not Status.BREAKDOWN or math.isfinite(gn):
        rec.add(k, x, g, gn, final=True)
    return ConvergenceHistory(
        records=rec.records, status=status, final_x=x, iterations=k,
        initial_norm=g0_norm, threshold=threshold, method=str(rule), config=config,
        elapsed=time.perf_counter() - t0, iterates=rec.iterates, message=message,
    )


def solve_cg(problem, config: SolveConfig) -> ConvergenceHistory:
    """Hestenes-Stiefel conjugate gradients with the same stopping contract.

    The residual follows the usual recurrence. ``p' A p <= 0`` means the
    operator is not SPD and ends the solve with ``NumericalBreakdown``.
    """
    A, b = problem.operator, problem.rhs
    t0 = time.perf_counter()
    x = np.array(problem.x0, dtype=np.float64)
    g = A.matvec(x) - b
    gg = dot(g, g)
    g0_norm = math.sqrt(gg)
    threshold = _threshold(problem, config, g0_norm)
    rec = _Recorder(problem, config)
    p = -g
    status, message = None, ""
    k = 0
    while True:
        gn = math.sqrt(gg)
        if not math.isfinite(gn):
            status, message = Status.BREAKDOWN, f"non-finite residual at k={k}"
            break
        if gn <= threshold:
            status = Status.CONVERGED
            break
        if k >= config.max_iter:
            status = Status.MAX_ITER
            break
        r = rec.add(k, x, g, gn)
        Ap = A.matvec(p)
        pAp = dot(p, Ap)
        if not pAp > 0 or not math.isfinite(pAp):
            status, message = Status.BREAKDOWN, f"k={k}: curvature p'Ap = {pAp!r}"
            if r is not None:
                rec.records.pop()
            break
        alpha = gg / pAp
        if r is not None:
            r.alpha, r.branch = alpha, Branch.CG
        x = x + alpha * p
        g = g + alpha * Ap
        gg_new = dot(g, g)
        p = -g + (gg_new / gg) * p
        gg = gg_new
        k += 1
    if math.isfinite(gn):
        rec.add(k, x, g, gn, final=True)
    return ConvergenceHistory(
        records=rec.records, status=status, final_x=x, iterations=k,
        initial_norm=g0_norm, threshold=threshold, method="cg", config=config,
        elapsed=time.perf_counter() - t0, iterates=rec.iterates, message=message,
    )


def solve(problem, config: SolveConfig) -> ConvergenceHistory:
    if config.rule is None:
        return solve_cg(problem, config)
    return solve_gradient(problem, config)


# -- Property A --------------------------------------------------------------

@dataclass
class PropertyAEntry:
    k: int
    branch: Branch
    inv_alpha: float
    cond1: bool
    # (mu, j, required lower bound on 1/alpha) for every failed condition-2 probe
    cond2_violations: list[tuple[int, int, float]] = field(default_factory=list)
    cond2_probes: int = 0

    @property
    def ok(self) -> bool:
        return self.cond1 and not self.cond2_violations


@dataclass
class PropertyAReport:
    entries: list[PropertyAEntry]
    M1: float
    M2: float
    xi: int

    @property
    def passed(self) -> bool:
        return all(e.ok for e in self.entries)

    def passed_for(self, *branches) -> bool:
        return all(e.ok for e in self.entries if e.branch in branches)

    @property
    def cond1_passed(self) -> bool:
        return all(e.cond1 for e in self.entries)

    def violations(self):
        return [e for e in self.entries if not e.ok]


class MissingDiagnostics(ValueError):
    pass


def check_property_a(history: ConvergenceHistory, spectrum: SpectrumInfo,
                     cfg: PropertyACheckConfig) -> PropertyAReport:
    """Check both Property A conditions at every recorded step.

    Condition 1: ``lambda_1 <= 1/alpha_k <= M1``. Condition 2, for each
    probed ``mu`` and ``j < min(k, xi)``: with ``eps = G(k-j, mu)``, if
    ``g_{mu+1,k-j}^2 >= M2 * eps`` then ``1/alpha_k >= (2/3) lambda_{mu+1}``.
    The ``k=0`` step is probed with ``j=0`` so every step is covered.
    """
    if not spectrum.exact or spectrum.eigenvalues is None:
        raise MissingDiagnostics("Property A needs the exact sorted spectrum")
    lam = spectrum.eigenvalues
    recs = history.records
    if any(r.partial_energies is None for r in recs):
        raise MissingDiagnostics("history was recorded without partial energies")
    by_k = {r.k: r for r in recs}
    M1 = cfg.M1 if cfg.M1 is not None else 2.0 * spectrum.lambda_max
    lo = spectrum.lambda_min * (1.0 - cfg.lower_rtol)
    entries = []
    for r in recs:
        if r.alpha is None:
            continue
        inv = 1.0 / r.alpha
        e = PropertyAEntry(r.k, r.branch, inv, lo <= inv <= M1 + cfg.upper_slack)
        for j in range(max(1, min(r.k, cfg.xi))):
            past = by_k.get(r.k - j)
            if past is None:
                continue
            for mu, eps in past.partial_energies.items():
                nxt = past.next_component_sq[mu]
                # eps must be positive: with G = 0 the premise needs g_{mu+1} != 0
                if nxt >= cfg.M2 * eps and (eps > 0 or nxt > 0):
                    e.cond2_probes += 1
                    need = (2.0 / 3.0) * lam[mu]
                    if inv < need * (1.0 - cfg.lower_rtol):
                        e.cond2_violations.append((mu, j, need))
        entries.append(e)
    return PropertyAReport(entries, M1, cfg.M2, cfg.xi)
