"""iBiG-SAM, the BiG-SAM baseline, parameter schedules and the Tikhonov path.

Both solvers iterate

    x_{n+1} = alpha_n * z_n + (1 - alpha_n) * s_n

where ``s_n`` is a prox-grad step on the inner problem and ``z_n`` a gradient
step on the outer objective. iBiG-SAM evaluates both at the extrapolated point
``y_n = x_n + theta_n (x_n - x_{n-1})``; BiG-SAM evaluates them at ``x_n``.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .operators import (
    _outer_gradient_step,
    _prox_grad,
    step_parameters,
)
from .problem_model import BilevelProblem, validate_problem

__all__ = [
    "StopKind",
    "StopReason",
    "StoppingRule",
    "SolverConfig",
    "TraceRecord",
    "IterationTrace",
    "SolverResult",
    "NumericalFailure",
    "theta_bar",
    "alpha_schedule",
    "epsilon_schedule",
    "ibig_sam_step",
    "big_sam_step",
    "ibig_sam_run",
    "big_sam_run",
    "PathPoint",
    "tikhonov_path",
    "default_config",
]

logger = logging.getLogger(__name__)

ALPHA_CEILING = 1.0 - 1e-6


class StopKind(str, enum.Enum):
    RELATIVE_INNER_GAP = "relative_inner_gap"
    DISTANCE = "distance_to_reference"
    CAP = "iteration_cap_only"


class StopReason(str, enum.Enum):
    TOLERANCE_MET = "tolerance_met"
    ITERATION_CAP = "iteration_cap"


class NumericalFailure(FloatingPointError):
    """An iterate became non-finite."""

    def __init__(self, iteration: int, message: str = ""):
        self.iteration = iteration
        super().__init__(message or f"non-finite iterate at iteration {iteration}")


@dataclass(frozen=True)
class StoppingRule:
    """When to stop.

    ``relative_inner_gap`` stops once ``(phi(x_n) - phi*) / phi* <= tolerance``
    and needs a positive scalar reference ``phi*``. ``distance_to_reference``
    stops once ``||x_n - x*|| <= tolerance`` and needs the vector ``x*``.
    ``iteration_cap_only`` runs to ``max_iterations``.
    """

    kind: StopKind = StopKind.CAP
    tolerance: float = 1e-3
    reference: object = None

    def __post_init__(self):
        kind = StopKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if not self.tolerance > 0:
            raise ValueError("stopping tolerance must be positive")
        if kind is StopKind.RELATIVE_INNER_GAP:
            ref = self.reference
            if ref is None or np.ndim(ref) != 0 or not float(ref) > 0:
                raise ValueError("relative_inner_gap needs a positive scalar reference phi*")
            object.__setattr__(self, "reference", float(ref))
        elif kind is StopKind.DISTANCE:
            if self.reference is None or np.ndim(self.reference) != 1:
                raise ValueError("distance_to_reference needs a reference vector x*")
            object.__setattr__(self, "reference", np.asarray(self.reference, dtype=float))

    @classmethod
    def relative_gap(cls, phi_star, tolerance=1e-2):
        return cls(StopKind.RELATIVE_INNER_GAP, tolerance, phi_star)

    @classmethod
    def distance(cls, x_star, tolerance=1e-3):
        return cls(StopKind.DISTANCE, tolerance, x_star)

    def met(self, phi: float, dist: Optional[float]) -> bool:
        if self.kind is StopKind.RELATIVE_INNER_GAP:
            return (phi - self.reference) / self.reference <= self.tolerance
        if self.kind is StopKind.DISTANCE:
            return dist <= self.tolerance
        return False


@dataclass(frozen=True)
class SolverConfig:
    """Step sizes, schedules and stopping for one solver run.

    ``alpha_fn(n)`` and ``epsilon_fn(n, alpha_n)`` replace the default
    schedules ``alpha_n = 2*kappa / (n*(1 - beta))`` and
    ``eps_n = alpha_n / n**epsilon_exponent``. ``force_zero_inertia`` pins
    ``theta_n = 0``. ``seed`` is carried for provenance only; the solvers
    themselves are deterministic.
    """

    lam: float
    gamma: float
    inertia_alpha: float = 3.0
    kappa: float = 0.1
    epsilon_exponent: float = 0.01
    max_iterations: int = 1000
    stopping: StoppingRule = field(default_factory=StoppingRule)
    use_moreau_outer: bool = False
    seed: int = 0
    force_zero_inertia: bool = False
    alpha_fn: Optional[Callable[[int], float]] = None
    epsilon_fn: Optional[Callable[[int, float], float]] = None

    def __post_init__(self):
        if not self.inertia_alpha >= 3:
            raise ValueError(f"inertia_alpha must be >= 3, got {self.inertia_alpha!r}")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.epsilon_exponent < 0:
            raise ValueError("epsilon_exponent must be nonnegative")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError("max_iterations must be a positive integer")


def default_config(problem: BilevelProblem, **overrides) -> SolverConfig:
    """Config with ``lam = 1/L_f`` and ``gamma = 2/(L_h + sigma)``."""
    h = problem.outer
    kw = dict(
        lam=1.0 / problem.inner_smooth.lipschitz_grad,
        gamma=2.0 / (h.lipschitz_grad + h.strong_convexity),
    )
    kw.update(overrides)
    return SolverConfig(**kw)


class TraceRecord(NamedTuple):
    n: int
    theta: float
    alpha: float
    eps: Optional[float]
    phi: float
    h: float
    dist_ref: Optional[float]
    inertia_mag: float
    seconds: float


TRACE_COLUMNS = TraceRecord._fields


@dataclass
class IterationTrace:
    records: list = field(default_factory=list)

    def append(self, record: TraceRecord):
        if self.records and record.n != self.records[-1].n + 1:
            raise ValueError("trace records must be consecutive in n")
        self.records.append(record)

    def column(self, name: str) -> np.ndarray:
        return np.array(
            [np.nan if getattr(r, name) is None else getattr(r, name) for r in self.records],
            dtype=float,
        )

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]


@dataclass
class SolverResult:
    solution: np.ndarray
    iterations_used: int
    stop_reason: StopReason
    trace: IterationTrace


# -- schedules ---------------------------------------------------------------


def theta_bar(n: int, inertia_alpha: float, epsilon_n: float, x_n, x_prev) -> float:
    """Upper bound on the inertial weight at iteration ``n``.

    ``min((n-1)/(n+alpha-1), eps_n/||x_n - x_prev||)``, or just the first term
    when ``x_n == x_prev`` bitwise. The second branch is nudged down by one ulp
    if needed so that ``theta * ||x_n - x_prev|| <= eps_n`` holds in floating
    point.
    """
    cap = (n - 1) / (n + inertia_alpha - 1)
    x_n = np.asarray(x_n, dtype=float)
    x_prev = np.asarray(x_prev, dtype=float)
    if np.array_equal(x_n, x_prev):
        return cap
    d = float(np.linalg.norm(x_n - x_prev))
    if d == 0.0:
        return cap
    t = epsilon_n / d
    if t * d > epsilon_n:
        t = float(np.nextafter(t, 0.0))
    return min(cap, t)


def alpha_schedule(n: int, kappa: float, beta: float) -> float:
    """``2*kappa / (n*(1 - beta))`` clamped to at most ``1 - 1e-6``."""
    raw = 2.0 * kappa / (n * (1.0 - beta))
    if raw > ALPHA_CEILING:
        logger.info("alpha_%d = %.6g clamped to %.6g", n, raw, ALPHA_CEILING)
        return ALPHA_CEILING
    return raw


def epsilon_schedule(n: int, alpha_n: float, exponent: float) -> float:
    """``alpha_n / n**exponent``; ``exponent == 0`` breaks eps_n = o(alpha_n)."""
    if exponent == 0:
        logger.warning("epsilon_exponent=0 gives eps_n = alpha_n, which is not o(alpha_n)")
    return alpha_n / n**exponent


# -- one-step maps -----------------------------------------------------------


def _outer(problem: BilevelProblem, gamma: float, y: np.ndarray, moreau: bool) -> np.ndarray:
    if moreau:
        return problem.outer.prox(y, gamma)
    return _outer_gradient_step(problem.outer, gamma, y)


def ibig_sam_step(problem, config: SolverConfig, alpha_n: float, theta_n: float, x_n, x_prev):
    """One iBiG-SAM update ``(x_n, x_{n-1}) -> x_{n+1}`` for given weights."""
    y = x_n + theta_n * (x_n - x_prev)
    s = _prox_grad(problem, config.lam, y)
    z = _outer(problem, config.gamma, y, config.use_moreau_outer)
    return alpha_n * z + (1.0 - alpha_n) * s


def big_sam_step(problem, config: SolverConfig, alpha_n: float, x):
    """One BiG-SAM update ``x -> alpha*S_gamma(x) + (1-alpha)*T_lam(x)``."""
    s = _prox_grad(problem, config.lam, x)
    z = _outer(problem, config.gamma, x, config.use_moreau_outer)
    return alpha_n * z + (1.0 - alpha_n) * s


# -- runners -----------------------------------------------------------------


def _prepare(problem: BilevelProblem, config: SolverConfig, baseline: bool):
    issues = validate_problem(problem)
    if issues:
        raise ValueError("invalid problem: " + "; ".join(issues))
    params = step_parameters(problem, config.lam, config.gamma, baseline=baseline)
    if config.use_moreau_outer and problem.outer.prox is None:
        raise ValueError("use_moreau_outer requires an outer prox")
    stop = config.stopping
    if stop.kind is StopKind.DISTANCE and stop.reference.shape != (problem.dimension,):
        raise ValueError("distance reference has wrong dimension")
    if config.epsilon_fn is None and config.epsilon_exponent == 0 and not baseline:
        logger.warning("epsilon_exponent=0 gives eps_n = alpha_n, which is not o(alpha_n)")
    return params


def _start(x, dim, what):
    if x is None:
        return np.zeros(dim)
    x = np.array(x, dtype=float)
    if x.shape != (dim,):
        raise ValueError(f"{what} has shape {x.shape}, expected ({dim},)")
    return x


def _alpha(config: SolverConfig, n: int, beta: float) -> float:
    if config.alpha_fn is not None:
        return float(config.alpha_fn(n))
    return alpha_schedule(n, config.kappa, beta)


def _epsilon(config: SolverConfig, n: int, alpha_n: float) -> float:
    if config.epsilon_fn is not None:
        return float(config.epsilon_fn(n, alpha_n))
    # exponent==0 already warned once in _prepare
    return alpha_n / n**config.epsilon_exponent


def _observe(problem, stop: StoppingRule, x):
    phi = problem.inner_value(x)
    hval = problem.outer_value(x)
    ref = stop.reference if stop.kind is StopKind.DISTANCE else problem.reference_solution
    dist = None if ref is None else float(np.linalg.norm(x - ref))
    return phi, hval, dist


def ibig_sam_run(problem: BilevelProblem, config: SolverConfig, x0=None, x1=None) -> SolverResult:
    """Run iBiG-SAM from ``(x0, x1)`` (zeros by default).

    Iteration ``n`` maps ``(x_n, x_{n-1})`` to ``x_{n+1}`` with
    ``theta_n = theta_bar(...)``. The stopping rule is evaluated on
    ``x_{n+1}``, and ``iterations_used`` is the first ``n`` at which it holds.

    Raises
    ------
    ValueError
        Invalid problem, config or start points.
    NumericalFailure
        An iterate became non-finite.
    """
    params = _prepare(problem, config, baseline=False)
    dim = problem.dimension
    x_prev = _start(x0, dim, "x0")
    x = _start(x1, dim, "x1")
    stop = config.stopping
    trace = IterationTrace()
    t0 = time.perf_counter()
    for n in range(1, config.max_iterations + 1):
        a = _alpha(config, n, params.beta)
        eps = _epsilon(config, n, a)
        if config.force_zero_inertia:
            theta = 0.0
        else:
            theta = theta_bar(n, config.inertia_alpha, eps, x, x_prev)
        inertia = theta * float(np.linalg.norm(x - x_prev))
        x_next = ibig_sam_step(problem, config, a, theta, x, x_prev)
        if not np.all(np.isfinite(x_next)):
            raise NumericalFailure(n)
        x_prev, x = x, x_next
        phi, hval, dist = _observe(problem, stop, x)
        trace.append(TraceRecord(n, theta, a, eps, phi, hval, dist, inertia,
                                 time.perf_counter() - t0))
        if stop.met(phi, dist):
            return SolverResult(x, n, StopReason.TOLERANCE_MET, trace)
    return SolverResult(x, config.max_iterations, StopReason.ITERATION_CAP, trace)


def big_sam_run(problem: BilevelProblem, config: SolverConfig, x0=None) -> SolverResult:
    """Run BiG-SAM from ``x0`` (zeros by default); needs ``lam <= 1/L_f``.

    Same trace and stopping contract as :func:`ibig_sam_run`; ``theta`` and
    the inertia column are zero and ``eps`` is ``None``.
    """
    params = _prepare(problem, config, baseline=True)
    x = _start(x0, problem.dimension, "x0")
    stop = config.stopping
    trace = IterationTrace()
    t0 = time.perf_counter()
    for n in range(1, config.max_iterations + 1):
        a = _alpha(config, n, params.beta)
        x_next = big_sam_step(problem, config, a, x)
        if not np.all(np.isfinite(x_next)):
            raise NumericalFailure(n)
        x = x_next
        phi, hval, dist = _observe(problem, stop, x)
        trace.append(TraceRecord(n, 0.0, a, None, phi, hval, dist, 0.0,
                                 time.perf_counter() - t0))
        if stop.met(phi, dist):
            return SolverResult(x, n, StopReason.TOLERANCE_MET, trace)
    return SolverResult(x, config.max_iterations, StopReason.ITERATION_CAP, trace)


def reference_run(problem: BilevelProblem, iterations: int = 1000, config=None):
    """``(x*, phi*)`` from a fixed-length BiG-SAM run with default steps."""
    cfg = config or default_config(problem)
    cfg = replace(cfg, max_iterations=iterations, stopping=StoppingRule())
    res = big_sam_run(problem, cfg)
    return res.solution, problem.inner_value(res.solution)


# -- regularization path -----------------------------------------------------


class PathPoint(NamedTuple):
    lam: float
    x: np.ndarray
    phi: float
    h: float
    iterations: int


def tikhonov_path(problem: BilevelProblem, lambdas: Sequence[float], *,
                  mode: str = "tikhonov", tolerance: float = 1e-10,
                  max_iterations: int = 100_000, x0=None) -> list[PathPoint]:
    """Minimizers of a penalized single-level problem along a decreasing grid.

    ``mode="tikhonov"`` minimizes ``phi + lam*h``, whose minimizers approach
    the bilevel solution as ``lam -> 0``. ``mode="penalty"`` minimizes
    ``h + lam*phi``, the penalized form of the bilevel problem; on the scalar
    toy problem its minimizer is ``1/(1 + lam)``.

    Each point is found by proximal gradient with step ``1/L`` (``L`` the
    gradient Lipschitz constant of the smooth part), warm-started from the
    previous minimizer, until the relative objective change drops to
    ``tolerance`` or ``max_iterations`` is hit.
    """
    lambdas = [float(v) for v in lambdas]
    if not lambdas:
        raise ValueError("empty lambda grid")
    if any(v <= 0 for v in lambdas):
        raise ValueError("lambda grid must be positive")
    if any(b >= a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambda grid must be strictly decreasing")
    if mode not in ("tikhonov", "penalty"):
        raise ValueError(f"unknown path mode {mode!r}")
    f, g, h = problem.inner_smooth, problem.inner_nonsmooth, problem.outer
    x = _start(x0, problem.dimension, "x0")
    path = []
    for lam in lambdas:
        if mode == "tikhonov":
            w_f, w_h, w_g = 1.0, lam, 1.0
        else:
            w_f, w_h, w_g = lam, 1.0, lam
        step = 1.0 / (w_f * f.lipschitz_grad + w_h * h.lipschitz_grad)

        def objective(u):
            return w_f * f.value(u) + w_h * h.value(u) + w_g * problem.nonsmooth_value(u)

        prev = objective(x)
        it = 0
        for it in range(1, max_iterations + 1):
            grad = w_f * f.gradient(x) + w_h * h.gradient(x)
            x = g.prox(x - step * grad, step * w_g)
            if not np.all(np.isfinite(x)):
                raise NumericalFailure(it, f"non-finite path iterate at lambda={lam!r}")
            cur = objective(x)
            if abs(prev - cur) <= tolerance * max(abs(prev), abs(cur)):
                break
            prev = cur
        path.append(PathPoint(lam, x.copy(), problem.inner_value(x), float(h.value(x)), it))
    return path
