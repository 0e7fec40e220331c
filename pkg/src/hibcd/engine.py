"""Hybrid inexact block coordinate descent.

Minimizes ``F(x) = f(x) + sum_i h_i(x_i)`` over blocks ``x = (x_1, ..., x_m)``.
Each block is updated, in a fixed order, by either a fast proximal-gradient
(FPG) step at an extrapolated point or a Frank-Wolfe (FW) step with an
adaptive step size, repeated ``inner_repeats`` times per outer iteration.
Every accepted step carries a numerically checked sufficient-descent
certificate; FPG steps double their curvature estimate until it holds.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from hibcd.errors import NumericalFailure

log = logging.getLogger(__name__)

FPG = "FPG"
FW = "FW"
RULES = (FPG, FW)

MAX_DOUBLINGS = 50


@dataclass
class BlockSpec:
    """Per-block configuration.

    ``delta`` floors the FPG step parameter and is added to the FW
    curvature form. ``rho`` is the block's weak-convexity modulus and
    enters the extrapolation cap. ``eta`` is informational only.
    """

    rule: str = FPG
    inner_repeats: int = 1
    delta: float = 1e-12
    rho: float = 0.0
    eta: float = 1.0
    alpha_cap: float = 0.9999

    def __post_init__(self):
        self.rule = self.rule.upper()
        if self.rule not in RULES:
            raise ValueError(f"unknown update rule {self.rule!r}")
        if self.inner_repeats < 1:
            raise ValueError("inner_repeats must be >= 1")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        if not 0 <= self.alpha_cap < 1:
            raise ValueError("alpha_cap must lie in [0, 1)")
        if self.eta < 1:
            raise ValueError("eta must be >= 1")


class BlockProblem:
    """What the engine needs to know about a multi-block problem.

    Subclasses implement the smooth part through :meth:`value` and
    :meth:`value_and_grad`, and each nonsmooth ``h_i`` through
    :meth:`prox`, :meth:`lo` and :meth:`h`. FPG blocks need
    :meth:`stepsize`, FW blocks need :meth:`curvature`.
    """

    n_blocks = 0

    def value(self, x):
        raise NotImplementedError

    def value_and_grad(self, i, x):
        """Return ``(f(x), grad_i f(x))``."""
        raise NotImplementedError

    def h(self, i, xi):
        """Value of ``h_i``; zero for indicators of feasible points."""
        return 0.0

    def prox(self, i, v, beta):
        """``prox_{h_i / beta}(v)``."""
        raise NotImplementedError

    def lo(self, i, grad):
        """A minimizer of ``<grad, y> + h_i(y)``."""
        raise NotImplementedError

    def lo_exact(self, i, grad):
        """Oracle used by the gap diagnostic; defaults to ``lo``.

        Override when ``lo`` is inexact or keeps warm-start state that the
        diagnostic should not touch.
        """
        return self.lo(i, grad)

    def stepsize(self, i, x):
        """Curvature estimate ``beta_i`` for an FPG step on block ``i``."""
        raise NotImplementedError

    def curvature(self, i, x, d):
        """``d^T R d`` for a PSD ``R`` making the FW quadratic model an upper bound.

        The engine adds ``delta * ||d||^2`` to make it definite.
        """
        raise NotImplementedError

    def is_feasible(self, i, xi):
        return True


class Certificate(NamedTuple):
    ok: bool
    slack: float


def verify_sufficient_descent(kind, f_new, f_base, grad, delta, param, rtol=1e-9):
    """Check the quadratic upper bound certifying a step.

    The bound is ``f_new <= f_base + <grad, delta> + q / 2`` where ``q`` is
    ``param * ||delta||^2`` for FPG (``param`` is the step parameter) and
    ``q = param`` for FW (``param`` is the curvature form evaluated on the
    full step ``delta``).

    Returns the certificate and its slack (bound minus ``f_new``).
    """
    kind = kind.upper()
    lin = float(np.vdot(grad, delta))
    if kind == FPG:
        quad = param * float(np.vdot(delta, delta))
    elif kind == FW:
        quad = param
    else:
        raise ValueError(f"unknown step kind {kind!r}")
    slack = f_base + lin + 0.5 * quad - f_new
    return Certificate(bool(slack >= -rtol * (1.0 + abs(f_base))), float(slack))


def fista_alpha(mu, squared=False):
    """One FISTA-type extrapolation weight.

    Returns ``(alpha_k, mu_{k+1})`` with ``alpha_k = (mu_k - 1) / mu_{k+1}``.
    The default recursion is ``mu_{k+1} = (1 + sqrt(1 + 4 mu_k)) / 2``;
    ``squared=True`` uses the classical ``sqrt(1 + 4 mu_k^2)``.
    """
    mu_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * (mu * mu if squared else mu)))
    return (mu - 1.0) / mu_next, mu_next


class ExtrapolationSchedule:
    """Sequence of extrapolation weights ``alpha_k``, clipped to ``[0, cap]``.

    Modes: ``"fista"`` (recursion without the square), ``"fista2"``
    (classical FISTA), ``"constant"`` (``value`` every iteration) and
    ``"none"``.
    """

    MODES = ("fista", "fista2", "constant", "none")

    def __init__(self, mode="fista", cap=0.9999, value=0.0):
        if mode not in self.MODES:
            raise ValueError(f"unknown extrapolation mode {mode!r}")
        if not 0 <= cap < 1:
            raise ValueError("cap must lie in [0, 1)")
        self.mode = mode
        self.cap = cap
        self.value = value
        self.reset()

    def reset(self):
        self.mu = 1.0
        self.k = 0

    def next(self):
        if self.mode in ("fista", "fista2"):
            a, self.mu = fista_alpha(self.mu, squared=self.mode == "fista2")
        elif self.mode == "constant":
            a = self.value
        else:
            a = 0.0
        self.k += 1
        return min(max(a, 0.0), self.cap)


@dataclass
class StopRule:
    """Stop on relative objective change, FW gap, or iteration count.

    The objective change is ``|F_k - F_{k+1}| / |F_k|``. ``None`` disables
    a tolerance.
    """

    obj_tol: float = 1e-4
    max_iter: int = 3000
    gap_tol: float = None

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        for name in ("obj_tol", "gap_tol"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class IterationRecord:
    iter: int
    elapsed: float
    objective: float
    gap_total: float
    gaps: tuple
    steps: tuple
    alpha: float
    descent_ok: bool
    backtracks: int
    min_slack: float


class StepRecord(NamedTuple):
    iter: int
    block: int
    repeat: int
    rule: str
    value: float
    slack: float
    backtracks: int


@dataclass
class SolverTrace:
    """Per-outer-iteration history of a run.

    ``elapsed`` is cumulative wall time spent in block updates; FW-gap
    diagnostics are excluded.
    """

    records: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    initial_objective: float = float("nan")
    initial_gap: float = float("nan")
    stop_reason: str = ""

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def objectives(self):
        return self.column("objective")

    @property
    def gaps(self):
        return self.column("gap_total")

    @property
    def elapsed(self):
        return self.records[-1].elapsed if self.records else 0.0

    @property
    def total_backtracks(self):
        return sum(r.backtracks for r in self.records)


def fw_gap(problem, x):
    """Total FW gap and per-block gaps at a feasible ``x``."""
    gaps = []
    for i in range(problem.n_blocks):
        _, g = problem.value_and_grad(i, x)
        y = problem.lo_exact(i, g)
        gi = float(np.vdot(g, x[i] - y)) + problem.h(i, x[i]) - problem.h(i, y)
        gaps.append(gi)
    return float(sum(gaps)), tuple(gaps)


class _Step(NamedTuple):
    x: np.ndarray
    value: float
    f_new: float
    cert: Certificate
    backtracks: int


def _with_block(x, i, xi):
    y = list(x)
    y[i] = xi
    return y


def fpg_step(problem, i, x, x_prev, alpha, spec, beta_prev=None):
    """Extrapolated proximal-gradient update of block ``i``.

    ``x_prev`` is the block's value before its previous update. The weight
    is capped at ``alpha_cap * sqrt(beta_prev / (rho + beta))``.
    """
    beta_raw = problem.stepsize(i, x)
    if not np.isfinite(beta_raw):
        raise NumericalFailure(f"non-finite step parameter on block {i}")
    beta = max(spec.delta, float(beta_raw))
    xi = x[i]
    backtracks = 0
    for _ in range(MAX_DOUBLINGS + 1):
        a = min(alpha, spec.alpha_cap)
        if beta_prev is not None:
            a = min(a, spec.alpha_cap * math.sqrt(beta_prev / (spec.rho + beta)))
        z = xi + a * (xi - x_prev) if a > 0 else xi
        xz = _with_block(x, i, z)
        fz, gz = problem.value_and_grad(i, xz)
        xp = problem.prox(i, z - gz / beta, beta)
        f_new = problem.value(_with_block(x, i, xp))
        cert = verify_sufficient_descent(FPG, f_new, fz, gz, xp - z, beta)
        if cert.ok:
            return _Step(xp, beta, f_new, cert, backtracks)
        beta *= 2.0
        backtracks += 1
    raise NumericalFailure(f"FPG backtracking exceeded {MAX_DOUBLINGS} doublings on block {i}")


def fw_step(problem, i, x, spec):
    """Frank-Wolfe update of block ``i`` with the adaptive step size."""
    xi = x[i]
    f, g = problem.value_and_grad(i, x)
    y = problem.lo(i, g)
    d = y - xi
    if not np.any(d):
        return _Step(xi, 0.0, f, Certificate(True, 0.0), 0)
    num = -float(np.vdot(g, d)) + problem.h(i, xi) - problem.h(i, y)
    curv = float(problem.curvature(i, x, d)) + spec.delta * float(np.vdot(d, d))
    if not (np.isfinite(curv) and curv > 0):
        raise NumericalFailure(f"FW curvature form is not positive on block {i}")
    backtracks = 0
    for _ in range(MAX_DOUBLINGS + 1):
        gamma = min(1.0, max(0.0, num / curv))
        if gamma == 0.0:
            return _Step(xi, 0.0, f, Certificate(True, 0.0), backtracks)
        xp = xi + gamma * d
        f_new = problem.value(_with_block(x, i, xp))
        cert = verify_sufficient_descent(FW, f_new, f, g, gamma * d, gamma * gamma * curv)
        if cert.ok:
            return _Step(xp, gamma, f_new, cert, backtracks)
        curv *= 2.0
        backtracks += 1
    raise NumericalFailure(f"FW step certification failed on block {i}")


def run(problem, blocks, x0, schedule=None, stop=None, track_gap=True, callback=None):
    """Run the hybrid BCD scheme from ``x0``.

    Parameters
    ----------
    problem : BlockProblem
    blocks : list of BlockSpec
        One per block, in update order.
    x0 : sequence of ndarray
        Feasible starting blocks.
    schedule : ExtrapolationSchedule, optional
        Defaults to the ``"fista"`` recursion capped at 0.9999.
    stop : StopRule, optional
    track_gap : bool
        Evaluate the FW gap after every outer iteration. Forced on when
        ``stop.gap_tol`` is set.
    callback : callable, optional
        Called as ``callback(k, x, record)`` after each outer iteration.

    Returns
    -------
    x : list of ndarray
    trace : SolverTrace
    """
    m = problem.n_blocks
    if len(blocks) != m or len(x0) != m:
        raise ValueError(f"expected {m} block specs and starting blocks")
    schedule = schedule or ExtrapolationSchedule()
    schedule.reset()
    stop = stop or StopRule()
    track_gap = track_gap or stop.gap_tol is not None

    x = [np.array(b, dtype=float) for b in x0]
    for i in range(m):
        if not problem.is_feasible(i, x[i]):
            raise ValueError(f"starting block {i} is infeasible")
    prev = [b.copy() for b in x]
    beta_prev = [None] * m

    def h_total(x):
        return sum(problem.h(i, x[i]) for i in range(m))

    trace = SolverTrace()
    F = problem.value(x) + h_total(x)
    trace.initial_objective = F
    if track_gap:
        trace.initial_gap = fw_gap(problem, x)[0]
    elapsed = 0.0

    for k in range(stop.max_iter):
        t0 = time.perf_counter()
        alpha = schedule.next()
        steps = []
        backtracks = 0
        min_slack = math.inf
        ok = True
        f_last = None
        try:
            for i, spec in enumerate(blocks):
                for ell in range(spec.inner_repeats):
                    if spec.rule == FPG:
                        st = fpg_step(problem, i, x, prev[i], alpha, spec, beta_prev[i])
                        beta_prev[i] = st.value
                    else:
                        st = fw_step(problem, i, x, spec)
                    prev[i] = x[i]
                    x[i] = st.x
                    f_last = st.f_new
                    backtracks += st.backtracks
                    min_slack = min(min_slack, st.cert.slack)
                    ok = ok and st.cert.ok
                    trace.steps.append(StepRecord(k, i, ell, spec.rule, st.value,
                                                  st.cert.slack, st.backtracks))
                steps.append(st.value)
        except NumericalFailure as exc:
            trace.stop_reason = "numerical_failure"
            exc.trace = trace
            raise
        elapsed += time.perf_counter() - t0

        F_new = f_last + h_total(x)
        if not np.isfinite(F_new):
            trace.stop_reason = "numerical_failure"
            raise NumericalFailure("objective became non-finite", trace=trace)
        if track_gap:
            gap, gaps = fw_gap(problem, x)
        else:
            gap, gaps = float("nan"), ()
        rec = IterationRecord(k + 1, elapsed, F_new, gap, gaps, tuple(steps), alpha,
                              ok, backtracks, min_slack)
        trace.records.append(rec)
        if callback is not None:
            callback(k, x, rec)
        if log.isEnabledFor(logging.DEBUG) and (k % 100 == 0):
            log.debug("iter %d F=%.6e gap=%.3e", k + 1, F_new, gap)

        change = abs(F - F_new) / max(abs(F), np.finfo(float).tiny)
        F = F_new
        if stop.gap_tol is not None and gap <= stop.gap_tol:
            trace.stop_reason = "gap_tol"
            break
        if stop.obj_tol is not None and change < stop.obj_tol:
            trace.stop_reason = "obj_tol"
            break
    else:
        trace.stop_reason = "max_iter"
    return x, trace


def _ceil_sqrt(q):
    n = max(1, math.ceil(math.sqrt(q)))
    while n > 1 and (n - 1) ** 2 >= q:
        n -= 1
    while n * n < q:
        n += 1
    return n


def inner_repeat_bound(rule, eta, rho_over_beta=0.0):
    """Upper bound on the best number of inner repeats of a block.

    ``ceil(sqrt(eta / 2))`` for FW and
    ``ceil(sqrt((2 eta + 1 + rho / beta) / 2))`` for FPG.
    """
    rule = rule.upper()
    if eta < 1:
        raise ValueError("eta must be >= 1")
    if not 0 <= rho_over_beta <= 1:
        raise ValueError("rho_over_beta must lie in [0, 1]")
    if rule == FW:
        return _ceil_sqrt(eta / 2.0)
    if rule == FPG:
        return _ceil_sqrt((2.0 * eta + 1.0 + rho_over_beta) / 2.0)
    raise ValueError(f"unknown update rule {rule!r}")


def recommend_inner_repeats(rule, eta, rho_over_beta=0.0):
    """Like :func:`inner_repeat_bound`, but returns 1 where it is known optimal.

    That is the case for FW with ``eta <= 4`` and for FPG with ``rho = 0``
    and ``eta <= 3/2``.
    """
    bound = inner_repeat_bound(rule, eta, rho_over_beta)
    rule = rule.upper()
    if rule == FW and eta <= 4:
        return 1
    if rule == FPG and rho_over_beta == 0 and eta <= 1.5:
        return 1
    return bound
