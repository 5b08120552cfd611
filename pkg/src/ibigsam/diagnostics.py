"""Sampled audits of oracle and operator properties.

Each audit draws points uniformly from ``[-10, 10]^n / sqrt(n)`` with a
seeded generator, measures the worst violation of one inequality and
compares it against a fixed tolerance. Sampling can refute a property but
never prove it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np
from scipy import optimize

from .operators import _eta, _outer_gradient_step, _prox_grad
from .problem_model import BilevelProblem, OuterOracle, ProxOracle, SmoothOracle
from .solvers import IterationTrace, SolverConfig

__all__ = [
    "AuditReport",
    "gradient_fd_check",
    "averagedness_audit",
    "contraction_audit",
    "prox_audit",
    "trace_audit",
    "corrupt_gradient",
    "write_reports_csv",
    "REPORT_COLUMNS",
]

REPORT_COLUMNS = ("check", "samples", "worst_violation", "tolerance", "worst_index",
                  "passed", "canary")

# floor for inequalities whose right-hand side can be exactly zero
_ROUNDING_FLOOR = 1e-14


@dataclass(frozen=True)
class AuditReport:
    """Outcome of one sampled check; ``passed`` iff worst <= tolerance."""

    check: str
    samples: int
    worst_violation: float
    tolerance: float
    worst_index: int = -1
    canary: bool = False

    @property
    def passed(self) -> bool:
        return bool(self.worst_violation <= self.tolerance)

    def csv_row(self) -> list:
        return [self.check, self.samples, repr(float(self.worst_violation)),
                repr(float(self.tolerance)), self.worst_index,
                int(self.passed), int(self.canary)]


def write_reports_csv(path, reports: Iterable[AuditReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow(r.csv_row())


def _points(rng, n, count):
    return rng.uniform(-10.0, 10.0, size=(count, n)) / math.sqrt(n)


def _worst(values):
    values = np.asarray(values, dtype=float)
    i = int(np.argmax(values))
    return float(values[i]), i


def gradient_fd_check(oracle, points: int = 20, seed: int = 0, rel_tol: float = 1e-5,
                      name: str = "gradient_fd") -> AuditReport:
    """Compare ``oracle.gradient`` with central differences.

    Step is ``1e-6 * (1 + ||x||)``; the violation at a point is
    ``||g_fd - g|| / ||g||``.
    """
    rng = np.random.default_rng(seed)
    n = oracle.dimension
    errs = []
    for x in _points(rng, n, points):
        g = np.asarray(oracle.gradient(x), dtype=float)
        step = 1e-6 * (1.0 + np.linalg.norm(x))
        fd = np.empty(n)
        for k in range(n):
            e = np.zeros(n)
            e[k] = step
            fd[k] = (oracle.value(x + e) - oracle.value(x - e)) / (2 * step)
        errs.append(np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-12))
    worst, i = _worst(errs)
    return AuditReport(name, points, worst, rel_tol, i)


def corrupt_gradient(oracle, factor: float = 1.01):
    """Copy of ``oracle`` whose gradient is off by 1% in its largest entry."""

    def bad(x):
        g = np.array(oracle.gradient(x), dtype=float)
        k = int(np.argmax(np.abs(g)))
        g[k] *= factor
        return g

    return replace(oracle, gradient=bad)


def _pairs(rng, n, samples):
    return _points(rng, n, samples), _points(rng, n, samples)


def _leading_direction(f: SmoothOracle, rng, iterations: int = 200) -> np.ndarray:
    """Unit direction of largest gradient change, by power iteration on
    gradient differences at the origin."""
    x0 = np.zeros(f.dimension)
    g0 = np.asarray(f.gradient(x0), dtype=float)
    v = rng.standard_normal(f.dimension)
    v /= np.linalg.norm(v)
    for _ in range(iterations):
        w = np.asarray(f.gradient(x0 + v), dtype=float) - g0
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break
        v = w / nw
    return v


def averagedness_audit(problem: BilevelProblem, lam: float, samples: int = 100,
                       seed: int = 0, slack: float = 1e-8, canary: bool = False) -> AuditReport:
    """Nonexpansiveness of ``(T_lam - (1-beta) I) / beta``, ``beta = (2+lam L_f)/4``.

    ``lam`` is not range-checked so that out-of-range canaries can be run;
    the violation is ``||Tx - Ty|| / ||x - y|| - 1``. One pair in ten is
    a short displacement (1% of a uniform pair's distance) along the
    direction of largest curvature of ``f``, since uniform pairs rarely excite
    the single expanding direction of an out-of-range step and long
    displacements let a projection mask it.
    """
    beta = (2.0 + lam * problem.inner_smooth.lipschitz_grad) / 4.0
    rng = np.random.default_rng(seed)
    X, Y = _pairs(rng, problem.dimension, samples)
    probes = samples // 10
    if probes:
        v = _leading_direction(problem.inner_smooth, rng)
        steps = 1e-2 * np.linalg.norm(X[-probes:] - Y[-probes:], axis=1)
        Y[-probes:] = X[-probes:] + steps[:, None] * v

    def resid(u):
        return (_prox_grad(problem, lam, u) - (1.0 - beta) * u) / beta

    vals = [np.linalg.norm(resid(x) - resid(y)) / np.linalg.norm(x - y) - 1.0
            for x, y in zip(X, Y)]
    worst, i = _worst(vals)
    return AuditReport("averagedness", samples, worst, slack, i, canary)


def contraction_audit(h: OuterOracle, gamma: float, samples: int = 100, seed: int = 0,
                      slack: float = 1e-8, canary: bool = False) -> AuditReport:
    """``||S x - S y|| <= eta ||x - y||`` for ``S = I - gamma grad h``.

    The violation is ``||Sx - Sy|| / ||x - y|| - eta`` against tolerance
    ``slack*eta`` plus a rounding floor. ``gamma`` is not range-checked; out of
    range, the formula for eta is clamped at zero.
    """
    eta = _eta(gamma, h.strong_convexity, h.lipschitz_grad)
    rng = np.random.default_rng(seed)
    X, Y = _pairs(rng, h.dimension, samples)
    vals = []
    for x, y in zip(X, Y):
        d = _outer_gradient_step(h, gamma, x) - _outer_gradient_step(h, gamma, y)
        vals.append(np.linalg.norm(d) / np.linalg.norm(x - y) - eta)
    worst, i = _worst(vals)
    return AuditReport("contraction", samples, worst, slack * eta + _ROUNDING_FLOOR, i, canary)


def _golden(fun, lo, hi, tol=1e-11):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc, fd = fun(c), fun(d)
    while hi - lo > tol * (1.0 + abs(lo) + abs(hi)):
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = fun(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = fun(d)
    return 0.5 * (lo + hi)


def brute_force_prox(g: ProxOracle, x: np.ndarray, scale: float, guess=None) -> np.ndarray:
    """Numerically minimize ``scale*g(u) + 0.5||u - x||^2``.

    Separable ``g``: golden-section search per coordinate, holding the other
    coordinates at ``guess`` (any point of the domain). Otherwise Powell's
    method from ``x``.
    """
    if g.value is None:
        raise ValueError("brute-force prox needs g.value")
    x = np.asarray(x, dtype=float)
    if g.separable:
        base = np.array(x if guess is None else guess, dtype=float)
        out = np.empty_like(x)
        for k in range(len(x)):
            radius = 10.0 * (1.0 + abs(x[k]) + scale)

            def obj(t, k=k):
                u = base.copy()
                u[k] = t
                return scale * g.value(u) + 0.5 * (t - x[k]) ** 2

            out[k] = _golden(obj, x[k] - radius, x[k] + radius)
        return out

    def full(u):
        return scale * g.value(u) + 0.5 * float((u - x) @ (u - x))

    res = optimize.minimize(full, x, method="Powell",
                            options={"xtol": 1e-12, "ftol": 1e-15, "maxiter": 100_000})
    return res.x


def prox_audit(g: ProxOracle, scale: float, samples: int = 100, seed: int = 0,
               brute_force_dim_cap: int = 6, tol: float = 1e-6) -> AuditReport:
    """Firm nonexpansiveness of ``prox(., scale)``, plus brute-force optimality.

    Per sample pair the violation is the relative excess
    ``(||Px - Py||^2 - <Px - Py, x - y>) / ||x - y||^2``. When the dimension is
    at most ``brute_force_dim_cap`` the max-norm distance between ``prox(x)``
    and a numeric minimizer also counts.
    """
    rng = np.random.default_rng(seed)
    X, Y = _pairs(rng, g.dimension, samples)
    brute = g.dimension <= brute_force_dim_cap and g.value is not None
    vals = []
    for x, y in zip(X, Y):
        px, py = g.prox(x, scale), g.prox(y, scale)
        dp, dx = px - py, x - y
        v = (dp @ dp - dp @ dx) / (dx @ dx)
        if brute:
            v = max(v, float(np.max(np.abs(px - brute_force_prox(g, x, scale, guess=px)))))
        vals.append(v)
    worst, i = _worst(vals)
    return AuditReport("prox", samples, worst, tol, i)


def trace_audit(trace: IterationTrace, config: SolverConfig) -> AuditReport:
    """Per-iteration inertial bounds of a solver trace.

    Checks that ``n`` runs 1, 2, 3, ... without gaps, ``alpha_n`` lies in
    (0, 1), ``theta_n <= (n-1)/(n+alpha-1)`` and ``theta_n ||x_n - x_{n-1}|| <=
    eps_n``. All four are exact (tolerance 0).
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    vals = []
    for k, rec in enumerate(trace):
        v = 0.0 if rec.n == k + 1 else math.inf
        if not 0.0 < rec.alpha < 1.0:
            v = max(v, -rec.alpha, rec.alpha - 1.0, np.finfo(float).tiny)
        cap = (rec.n - 1) / (rec.n + config.inertia_alpha - 1)
        v = max(v, rec.theta - cap)
        if rec.eps is not None:
            v = max(v, rec.inertia_mag - rec.eps)
        elif rec.inertia_mag != 0.0:
            v = max(v, abs(rec.inertia_mag))
        vals.append(v)
    worst, i = _worst(vals)
    return AuditReport("trace", len(trace), worst, 0.0, i)
