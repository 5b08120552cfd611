"""Prox-grad map, outer contraction step and their constants.

Public functions range-check their step sizes on every call. The solvers check
once at configuration time and then use the unchecked ``_prox_grad`` /
``_outer_gradient_step`` helpers inside the loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .problem_model import BilevelProblem, OuterOracle

__all__ = [
    "StepParameters",
    "step_parameters",
    "soft_threshold",
    "project_nonnegative",
    "prox_grad_map",
    "outer_step",
    "moreau_outer_step",
    "averaged_beta",
    "contraction_factor",
]


def soft_threshold(x, mu):
    """Componentwise ``sign(x) * max(|x| - mu, 0)``.

    This is the proximal map of ``mu * ||.||_1``. Entries with ``|x_k| == mu``
    map to zero.
    """
    if mu < 0:
        raise ValueError(f"threshold must be nonnegative, got {mu}")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - mu, 0.0)


def project_nonnegative(x):
    """Euclidean projection onto the nonnegative orthant."""
    return np.maximum(np.asarray(x, dtype=float), 0.0)


def _prox_grad(problem: BilevelProblem, lam: float, x: np.ndarray) -> np.ndarray:
    f, g = problem.inner_smooth, problem.inner_nonsmooth
    return g.prox(x - lam * f.gradient(x), lam)


def _outer_gradient_step(h: OuterOracle, gamma: float, x: np.ndarray) -> np.ndarray:
    return x - gamma * h.gradient(x)


def _check_lambda(lam: float, lipschitz: float, upper: float = 2.0, closed: bool = False):
    bound = upper / lipschitz
    ok = 0 < lam <= bound if closed else 0 < lam < bound
    if not ok:
        br = "]" if closed else ")"
        raise ValueError(f"lambda={lam!r} outside (0, {upper:g}/L_f{br} = (0, {bound!r}{br}")


def _check_gamma(gamma: float, sigma: float, lipschitz: float):
    bound = 2.0 / (lipschitz + sigma)
    if not 0 < gamma <= bound:
        raise ValueError(f"gamma={gamma!r} outside (0, 2/(L_h+sigma)] = (0, {bound!r}]")


def prox_grad_map(problem: BilevelProblem, lam: float, x) -> np.ndarray:
    """``T_lam(x) = prox_{lam g}(x - lam * grad f(x))`` for ``lam`` in (0, 2/L_f)."""
    _check_lambda(lam, problem.inner_smooth.lipschitz_grad)
    return _prox_grad(problem, lam, np.asarray(x, dtype=float))


def outer_step(h: OuterOracle, gamma: float, x) -> np.ndarray:
    """``S_gamma(x) = x - gamma * grad h(x)`` for ``gamma`` in (0, 2/(L_h+sigma)]."""
    _check_gamma(gamma, h.strong_convexity, h.lipschitz_grad)
    return _outer_gradient_step(h, gamma, np.asarray(x, dtype=float))


def moreau_outer_step(h: OuterOracle, gamma: float, y) -> np.ndarray:
    """Gradient step on the Moreau envelope of ``h``, i.e. ``prox_{gamma h}(y)``."""
    if h.prox is None:
        raise ValueError("outer objective exposes no prox; Moreau step unavailable")
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma!r}")
    return h.prox(np.asarray(y, dtype=float), gamma)


def averaged_beta(lam: float, lipschitz: float) -> float:
    """Averagedness constant ``(2 + lam*L_f) / 4`` of the prox-grad map."""
    _check_lambda(lam, lipschitz)
    return (2.0 + lam * lipschitz) / 4.0


def _eta(gamma: float, sigma: float, lipschitz: float) -> float:
    # unchecked; clamps tiny negative rounding (and out-of-range canaries) to 0
    return math.sqrt(max(0.0, 1.0 - 2.0 * gamma * sigma * lipschitz / (sigma + lipschitz)))


def contraction_factor(gamma: float, sigma: float, lipschitz: float) -> float:
    """Contraction modulus ``sqrt(1 - 2*gamma*sigma*L_h/(sigma+L_h))`` of ``S_gamma``."""
    if not 0 < sigma <= lipschitz:
        raise ValueError(f"need 0 < sigma <= L_h, got sigma={sigma!r}, L_h={lipschitz!r}")
    _check_gamma(gamma, sigma, lipschitz)
    return _eta(gamma, sigma, lipschitz)


@dataclass(frozen=True)
class StepParameters:
    lam: float
    gamma: float
    beta: float
    eta: float


def step_parameters(problem: BilevelProblem, lam: float, gamma: float,
                    baseline: bool = False) -> StepParameters:
    """Validate ``(lam, gamma)`` against ``problem`` and derive ``beta``, ``eta``.

    With ``baseline=True`` the BiG-SAM range ``lam in (0, 1/L_f]`` is enforced
    instead of the wider ``(0, 2/L_f)``.
    """
    lf = problem.inner_smooth.lipschitz_grad
    h = problem.outer
    if baseline:
        _check_lambda(lam, lf, upper=1.0, closed=True)
    beta = averaged_beta(lam, lf)
    eta = contraction_factor(gamma, h.strong_convexity, h.lipschitz_grad)
    return StepParameters(lam=lam, gamma=gamma, beta=beta, eta=eta)
