"""Seeded benchmark generators, shipped oracles and instance files.

Random numbers come from ``numpy.random.default_rng`` (PCG64 bit generator,
ziggurat transform for normals). The matrix and the data (plant, noise) of an
instance are drawn from two independent streams derived from the seed, so a
given ``(parameters, seed)`` always yields bitwise-identical instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import sparse

from .operators import project_nonnegative, soft_threshold
from .problem_model import BilevelProblem, OuterOracle, ProxOracle, SmoothOracle

__all__ = [
    "IllConditionedSpec",
    "InverseInstance",
    "OuterQuadratic",
    "ConvergenceError",
    "least_squares",
    "quadratic_outer",
    "zero_function",
    "l1_norm",
    "nonnegative_indicator",
    "gen_ill_conditioned",
    "gen_outer_quadratic",
    "gen_nnls",
    "gen_lasso",
    "toy_bilevel",
    "spectral_norm",
    "problem_from_instance",
    "write_instance",
    "read_instance",
    "serialize_instance",
]

_MATRIX_STREAM = 0
_DATA_STREAM = 1


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream]))


# -- shipped oracles ---------------------------------------------------------
# module-level functions bound with partial keep oracles picklable


def _ls_value(A, b, x):
    r = A @ x - b
    return 0.5 * float(r @ r)


def _ls_grad(A, b, x):
    return A.T @ (A @ x - b)


def least_squares(A, b, lipschitz: Optional[float] = None) -> SmoothOracle:
    """``f(x) = 0.5*||Ax - b||^2`` with ``L_f = ||A||_2^2`` (exact, via SVD)."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if lipschitz is None:
        lipschitz = float(np.linalg.norm(A, 2)) ** 2
    return SmoothOracle(partial(_ls_value, A, b), partial(_ls_grad, A, b),
                        float(lipschitz), A.shape[1])


def _quad_value(Q, c, const, x):
    return 0.5 * float(x @ (Q @ x)) - float(c @ x) + const


def _quad_grad(Q, c, x):
    return Q @ x - c


def _quad_prox(Q, c, y, gamma):
    # argmin_u h(u) + ||u - y||^2 / (2 gamma)  <=>  (I + gamma Q) u = y + gamma c
    M = np.eye(len(y)) + gamma * (Q.toarray() if sparse.issparse(Q) else Q)
    return np.linalg.solve(M, y + gamma * c)


def quadratic_outer(Q, sigma: float, lipschitz: float, c=None, const: float = 0.0) -> OuterOracle:
    """``h(x) = 0.5 x'Qx - c'x + const`` with caller-supplied ``sigma``, ``L_h``.

    ``Q`` may be dense or a scipy sparse matrix.
    """
    n = Q.shape[0]
    c = np.zeros(n) if c is None else np.asarray(c, dtype=float)
    return OuterOracle(
        value=partial(_quad_value, Q, c, float(const)),
        gradient=partial(_quad_grad, Q, c),
        strong_convexity=float(sigma),
        lipschitz_grad=float(lipschitz),
        dimension=n,
        prox=partial(_quad_prox, Q, c),
    )


def _identity_prox(x, scale):
    return np.array(x, dtype=float)


def _zero_value(x):
    return 0.0


def zero_function(n: int) -> ProxOracle:
    return ProxOracle(_identity_prox, n, value=_zero_value, separable=True)


def _l1_prox(mu, x, scale):
    return soft_threshold(x, scale * mu)


def _l1_value(mu, x):
    return mu * float(np.sum(np.abs(x)))


def l1_norm(mu: float, n: int) -> ProxOracle:
    """``g(x) = mu*||x||_1``; prox is soft thresholding at ``scale*mu``."""
    return ProxOracle(partial(_l1_prox, mu), n, value=partial(_l1_value, mu), separable=True)


def _nonneg_prox(x, scale):
    return project_nonnegative(x)


def _nonneg_value(x):
    return 0.0 if np.all(np.asarray(x) >= 0) else math.inf


def nonnegative_indicator(n: int) -> ProxOracle:
    return ProxOracle(_nonneg_prox, n, value=_nonneg_value, separable=True, indicator=True)


# -- generators --------------------------------------------------------------


@dataclass(frozen=True)
class IllConditionedSpec:
    m: int
    n: int
    smallest_singular: float = 1e-6
    largest_singular: float = 1.0
    seed: int = 0


def gen_ill_conditioned(spec: IllConditionedSpec) -> np.ndarray:
    """``U diag(s) V'`` with geometrically spaced singular values.

    ``U`` and ``V`` are the Q factors of Gaussian matrices; ``s`` runs from
    ``largest_singular`` down to ``smallest_singular`` over ``min(m, n)``
    values.
    """
    if spec.m < 2 or spec.n < 2:
        raise ValueError(f"need m, n >= 2, got {spec.m}x{spec.n}")
    if not 0 < spec.smallest_singular <= spec.largest_singular:
        raise ValueError("need 0 < smallest_singular <= largest_singular")
    k = min(spec.m, spec.n)
    rng = _rng(spec.seed, _MATRIX_STREAM)
    U, _ = np.linalg.qr(rng.standard_normal((spec.m, k)))
    V, _ = np.linalg.qr(rng.standard_normal((spec.n, k)))
    s = np.geomspace(spec.largest_singular, spec.smallest_singular, k)
    return (U * s) @ V.T


@dataclass(frozen=True)
class OuterQuadratic:
    """``Q = D'D + I`` with ``D`` the (n-1) x n first-difference matrix."""

    Q: np.ndarray
    sigma: float
    lipschitz: float

    def oracle(self) -> OuterOracle:
        return quadratic_outer(sparse.csr_matrix(self.Q), self.sigma, self.lipschitz)


def first_difference(n: int) -> np.ndarray:
    D = np.zeros((n - 1, n))
    i = np.arange(n - 1)
    D[i, i] = 1.0
    D[i, i + 1] = -1.0
    return D


def gen_outer_quadratic(n: int) -> OuterQuadratic:
    """Smoothing outer objective ``h(x) = 0.5 x'Qx``.

    ``D'D`` is the path-graph Laplacian with eigenvalues ``2 - 2cos(k*pi/n)``,
    so ``sigma = 1`` and ``L_h = 3 + 2cos(pi/n)`` exactly.
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    D = first_difference(n)
    Q = D.T @ D + np.eye(n)
    return OuterQuadratic(Q=Q, sigma=1.0, lipschitz=3.0 + 2.0 * math.cos(math.pi / n))


@dataclass(frozen=True)
class InverseInstance:
    """Data of a generated linear inverse problem (``mu == 0`` for NNLS)."""

    kind: str
    A: np.ndarray
    b: np.ndarray
    x_true: np.ndarray
    mu: float
    noise_scale: float
    seed: int


def problem_from_instance(inst: InverseInstance) -> BilevelProblem:
    m, n = inst.A.shape
    f = least_squares(inst.A, inst.b)
    if inst.kind == "nnls":
        g = nonnegative_indicator(n)
    elif inst.kind == "lasso":
        g = l1_norm(inst.mu, n)
    else:
        raise ValueError(f"unknown instance kind {inst.kind!r}")
    h = gen_outer_quadratic(n).oracle()
    return BilevelProblem(f, g, h, name=f"{inst.kind}-{m}x{n}-s{inst.seed}", instance=inst)


def gen_nnls(spec: IllConditionedSpec, noise_scale: float = 0.01) -> BilevelProblem:
    """Nonnegative least squares over an ill-conditioned operator.

    The plant is ``|N(0,1)|`` entrywise and ``b = A x_true + noise_scale*e``.
    """
    if noise_scale < 0:
        raise ValueError("noise_scale must be nonnegative")
    A = gen_ill_conditioned(spec)
    rng = _rng(spec.seed, _DATA_STREAM)
    x_true = np.abs(rng.standard_normal(spec.n))
    b = A @ x_true + noise_scale * rng.standard_normal(spec.m)
    inst = InverseInstance("nnls", A, b, x_true, 0.0, float(noise_scale), spec.seed)
    return problem_from_instance(inst)


def gen_lasso(m: int, n: int, mu: float = 0.5, noise_scale: float = 0.01, seed: int = 0,
              density: float = 0.1) -> BilevelProblem:
    """LASSO ``0.5||Ax-b||^2 + mu||x||_1`` with Gaussian ``A`` and a sparse plant."""
    if m < 1 or n < 1:
        raise ValueError("need m, n >= 1")
    if not mu > 0:
        raise ValueError("mu must be positive")
    if noise_scale < 0:
        raise ValueError("noise_scale must be nonnegative")
    A = _rng(seed, _MATRIX_STREAM).standard_normal((m, n))
    rng = _rng(seed, _DATA_STREAM)
    k = max(1, int(round(density * n)))
    x_true = np.zeros(n)
    support = rng.choice(n, size=k, replace=False)
    x_true[support] = rng.standard_normal(k)
    b = A @ x_true + noise_scale * rng.standard_normal(m)
    inst = InverseInstance("lasso", A, b, x_true, float(mu), float(noise_scale), seed)
    return problem_from_instance(inst)


def _square(x):
    return float(x @ x)


def _square_grad(x):
    return 2.0 * x


def toy_bilevel() -> BilevelProblem:
    """Scalar problem: minimize ``(x-1)^2`` over ``argmin x^2 = {0}``.

    The bilevel solution is 0, while ``(x-1)^2 + lam*x^2`` is minimized by
    ``1/(1+lam)`` for every ``lam > 0``.
    """
    f = SmoothOracle(_square, _square_grad, 2.0, 1)
    g = zero_function(1)
    h = quadratic_outer(np.array([[2.0]]), sigma=2.0, lipschitz=2.0, c=np.array([2.0]), const=1.0)
    return BilevelProblem(f, g, h, reference_inner_optimum=0.0,
                          reference_solution=np.zeros(1), name="toy")


class ConvergenceError(RuntimeError):
    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


def spectral_norm(A, tolerance: float = 1e-8, max_iter: int = 10_000, seed: int = 0) -> float:
    """``||A||_2`` by power iteration on ``A'A`` from a seeded random start.

    Stops when the relative change of the estimate is at most ``tolerance``.
    Raises :class:`ConvergenceError` (carrying the last estimate) otherwise.
    Power iteration converges slowly when the top singular values cluster;
    the generators therefore compute their constants exactly and use this
    only as an independent check.
    """
    A = np.asarray(A, dtype=float)
    if not np.any(A):
        raise ValueError("spectral norm of a zero matrix requested")
    v = np.random.default_rng(seed).standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = A.T @ (A @ v)
        wn = np.linalg.norm(w)
        if wn == 0.0:
            # start vector in the null space; restart along a fresh direction
            v = np.random.default_rng(seed + 1).standard_normal(A.shape[1])
            v /= np.linalg.norm(v)
            continue
        new = math.sqrt(wn)
        v = w / wn
        if abs(new - est) <= tolerance * new:
            return new
        est = new
    raise ConvergenceError(f"power iteration did not converge in {max_iter} steps", est)


# -- instance files ----------------------------------------------------------
#
#   %%ibigsam-instance <kind>
#   % m n mu delta seed
#   <m> <n> <mu> <delta> <seed>
#   % A (row-major), b, x_true
#   one entry per line, repr precision


HEADER = "%%ibigsam-instance"


def serialize_instance(inst: InverseInstance) -> str:
    m, n = inst.A.shape
    lines = [
        f"{HEADER} {inst.kind}",
        "% m n mu delta seed",
        f"{m} {n} {inst.mu!r} {inst.noise_scale!r} {inst.seed}",
        "% A (row-major)",
    ]
    lines += [repr(float(v)) for v in inst.A.ravel()]
    lines.append("% b")
    lines += [repr(float(v)) for v in inst.b]
    lines.append("% x_true")
    lines += [repr(float(v)) for v in inst.x_true]
    return "\n".join(lines) + "\n"


def write_instance(path, inst: InverseInstance) -> None:
    Path(path).write_text(serialize_instance(inst), encoding="utf-8")


def read_instance(path) -> InverseInstance:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or not text[0].startswith(HEADER):
        raise ValueError(f"{path}: not an instance file")
    kind = text[0].split()[1]
    body = [ln for ln in text[1:] if ln.strip() and not ln.startswith("%")]
    m_s, n_s, mu_s, delta_s, seed_s = body[0].split()
    m, n = int(m_s), int(n_s)
    vals = np.array([float(v) for v in body[1:]])
    if vals.size != m * n + m + n:
        raise ValueError(f"{path}: expected {m * n + m + n} entries, found {vals.size}")
    A = vals[: m * n].reshape(m, n)
    b = vals[m * n: m * n + m]
    x_true = vals[m * n + m:]
    return InverseInstance(kind, A, b, x_true, float(mu_s), float(delta_s), int(seed_s))
