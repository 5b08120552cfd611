"""Oracle interfaces and the bilevel problem container.

A simple bilevel problem is the triple ``(f, g, h)``::

    minimize h(x)  subject to  x in argmin { f(z) + g(z) }

where ``f`` is convex with Lipschitz gradient, ``g`` is proper, lsc and convex
(accessed only through its proximal map) and ``h`` is smooth and strongly
convex. Oracles are plain frozen dataclasses holding callables; they never
mutate state, so a single problem may be evaluated from several threads or
processes at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional

import numpy as np

__all__ = [
    "SmoothOracle",
    "ProxOracle",
    "OuterOracle",
    "BilevelProblem",
    "validate_problem",
]


@dataclass(frozen=True)
class SmoothOracle:
    """Convex differentiable ``f`` with ``lipschitz_grad``-Lipschitz gradient."""

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    lipschitz_grad: float
    dimension: int


@dataclass(frozen=True)
class ProxOracle:
    """Proper lsc convex ``g`` accessed through ``prox(x, scale)``.

    ``prox(x, t)`` returns ``argmin_u t*g(u) + 0.5*||u - x||^2``.

    ``value`` is optional and may return ``inf`` (indicator functions). The
    solvers never call it on their own iterates when ``indicator`` is set,
    since sequential-averaging iterates are only asymptotically feasible.
    ``separable`` tells the brute-force prox audit that ``g`` is a sum of
    one-dimensional terms.
    """

    prox: Callable[[np.ndarray, float], np.ndarray]
    dimension: int
    value: Optional[Callable[[np.ndarray], float]] = None
    separable: bool = False
    indicator: bool = False


@dataclass(frozen=True)
class OuterOracle:
    """Strongly convex smooth outer objective ``h``.

    ``prox`` is only needed for the Moreau-envelope variant of the outer step.
    """

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    strong_convexity: float
    lipschitz_grad: float
    dimension: int
    prox: Optional[Callable[[np.ndarray, float], np.ndarray]] = None


@dataclass(frozen=True)
class BilevelProblem:
    inner_smooth: SmoothOracle
    inner_nonsmooth: ProxOracle
    outer: OuterOracle
    reference_inner_optimum: Optional[float] = None
    reference_solution: Optional[np.ndarray] = None
    name: str = ""
    # generator payload (matrices, plant, seed); used for serialization only
    instance: Any = field(default=None, repr=False, compare=False)

    @property
    def dimension(self) -> int:
        return self.inner_smooth.dimension

    def inner_value(self, x: np.ndarray) -> float:
        """phi(x) = f(x) + g(x), with indicator terms counted as zero."""
        return float(self.inner_smooth.value(x)) + self.nonsmooth_value(x)

    def nonsmooth_value(self, x: np.ndarray) -> float:
        g = self.inner_nonsmooth
        if g.value is None or g.indicator:
            return 0.0
        return float(g.value(x))

    def outer_value(self, x: np.ndarray) -> float:
        return float(self.outer.value(x))

    def with_reference(self, solution=None, inner_optimum=None) -> "BilevelProblem":
        sol = None if solution is None else np.asarray(solution, dtype=float)
        return replace(
            self,
            reference_solution=sol,
            reference_inner_optimum=None if inner_optimum is None else float(inner_optimum),
        )


def validate_problem(problem: BilevelProblem) -> list[str]:
    """Return the list of violated standing assumptions (empty if none).

    Checks that the three oracles share one dimension, that both Lipschitz
    constants are positive and that ``0 < sigma <= L_h``. Violations are
    returned as data; nothing is raised.
    """
    f, g, h = problem.inner_smooth, problem.inner_nonsmooth, problem.outer
    report = []
    dims = {"inner_smooth": f.dimension, "inner_nonsmooth": g.dimension, "outer": h.dimension}
    if len(set(dims.values())) != 1:
        desc = ", ".join(f"{k}={v}" for k, v in dims.items())
        report.append(f"dimension mismatch: {desc}")
    for key, d in dims.items():
        if not (isinstance(d, (int, np.integer)) and d > 0):
            report.append(f"{key} dimension must be a positive integer")
    if not f.lipschitz_grad > 0:
        report.append("inner lipschitz_grad must be positive")
    if not h.lipschitz_grad > 0:
        report.append("outer lipschitz_grad must be positive")
    if not h.strong_convexity > 0:
        report.append("strong_convexity must be positive")
    elif h.lipschitz_grad > 0 and h.strong_convexity > h.lipschitz_grad:
        report.append("strong_convexity must not exceed outer lipschitz_grad")
    if problem.reference_solution is not None:
        if np.shape(problem.reference_solution) != (f.dimension,):
            report.append("reference_solution has wrong shape")
    return report
