"""Instance generators, the power-iteration norm and instance files."""

import math

import numpy as np
import pytest
from scipy import optimize

from ibigsam import (
    IllConditionedSpec,
    StoppingRule,
    default_config,
    gen_ill_conditioned,
    gen_lasso,
    gen_nnls,
    gen_outer_quadratic,
    ibig_sam_run,
    big_sam_run,
    reference_run,
    spectral_norm,
    toy_bilevel,
    validate_problem,
)
from ibigsam.diagnostics import (
    averagedness_audit,
    contraction_audit,
    gradient_fd_check,
    prox_audit,
)
from ibigsam.problems import (
    ConvergenceError,
    read_instance,
    serialize_instance,
    write_instance,
)


def test_singular_values_geometric():
    A = gen_ill_conditioned(IllConditionedSpec(4, 4, smallest_singular=1e-3))
    np.testing.assert_allclose(np.linalg.svd(A, compute_uv=False), [1, 1e-1, 1e-2, 1e-3],
                               rtol=1e-10)


@pytest.mark.parametrize("shape", [(4, 4), (30, 20), (20, 30)])
def test_norm_equals_largest_singular(shape):
    A = gen_ill_conditioned(IllConditionedSpec(*shape, largest_singular=2.5, seed=4))
    assert spectral_norm(A) == pytest.approx(2.5, rel=1e-6)


def test_generators_are_bitwise_deterministic():
    spec = IllConditionedSpec(15, 12, seed=9)
    np.testing.assert_array_equal(gen_ill_conditioned(spec), gen_ill_conditioned(spec))
    a, b = gen_lasso(20, 40, seed=2), gen_lasso(20, 40, seed=2)
    np.testing.assert_array_equal(a.instance.A, b.instance.A)
    np.testing.assert_array_equal(a.instance.b, b.instance.b)
    c, d = gen_nnls(spec), gen_nnls(spec)
    np.testing.assert_array_equal(c.instance.b, d.instance.b)


def test_seeds_differ():
    a, b = gen_lasso(20, 40, seed=0), gen_lasso(20, 40, seed=1)
    assert not np.array_equal(a.instance.A, b.instance.A)


def test_too_small_rejected():
    with pytest.raises(ValueError):
        gen_ill_conditioned(IllConditionedSpec(1, 4))


def test_nnls_properties():
    spec = IllConditionedSpec(40, 30, largest_singular=1.7, seed=1)
    p = gen_nnls(spec)
    assert validate_problem(p) == []
    assert np.all(p.instance.x_true >= 0)
    assert p.inner_smooth.lipschitz_grad == pytest.approx(1.7**2, rel=1e-6)
    assert spectral_norm(p.instance.A) ** 2 == pytest.approx(p.inner_smooth.lipschitz_grad,
                                                             rel=1e-6)


def test_nnls_noiseless_optimum_is_zero():
    p = gen_nnls(IllConditionedSpec(10, 10, smallest_singular=0.1, seed=5), noise_scale=0.0)
    assert p.inner_value(p.instance.x_true) <= 1e-10
    x, rnorm = optimize.nnls(p.instance.A, p.instance.b)
    assert 0.5 * rnorm**2 <= 1e-10


def test_lasso_defaults():
    p = gen_lasso(10, 20)
    assert p.instance.mu == 0.5
    assert p.instance.noise_scale == 0.01
    assert np.count_nonzero(p.instance.x_true) == 2


def test_lasso_solves_within_bound():
    p = gen_lasso(100, 500, seed=11)
    assert validate_problem(p) == []
    x_star, _ = reference_run(p)
    cfg = default_config(p, max_iterations=10_000, stopping=StoppingRule.distance(x_star, 1e-3))
    assert big_sam_run(p, cfg).iterations_used <= 10_000


def test_lasso_large_mu_gives_zero():
    base = gen_lasso(30, 60, seed=3)
    inst = base.instance
    mu = float(np.max(np.abs(inst.A.T @ inst.b)))
    p = gen_lasso(30, 60, mu=mu, seed=3)
    res = ibig_sam_run(p, default_config(p, max_iterations=500))
    assert np.max(np.abs(res.solution)) <= 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_lasso_reference_below_plant(seed):
    # the reference phi* should never exceed phi at the planted vector
    p = gen_lasso(100, 500, seed=seed)
    _, phi_star = reference_run(p)
    phi_plant = p.inner_value(p.instance.x_true)
    assert phi_plant >= phi_star, f"phi(x_true)={phi_plant:.6g} < phi*={phi_star:.6g}"


def test_outer_quadratic_n2():
    oq = gen_outer_quadratic(2)
    np.testing.assert_array_equal(oq.Q, [[2.0, -1.0], [-1.0, 2.0]])
    assert oq.sigma == 1.0
    assert oq.lipschitz == pytest.approx(3.0, abs=1e-15)


@pytest.mark.parametrize("n", [2, 3, 10, 100])
def test_outer_quadratic_constants_match_eigenvalues(n):
    oq = gen_outer_quadratic(n)
    np.testing.assert_array_equal(oq.Q, oq.Q.T)
    ev = np.linalg.eigvalsh(oq.Q)
    assert ev[0] == pytest.approx(oq.sigma, abs=1e-12)
    assert ev[-1] == pytest.approx(oq.lipschitz, rel=1e-12)


def test_outer_quadratic_dominates_identity(rng):
    oq = gen_outer_quadratic(25)
    for x in rng.standard_normal((50, 25)):
        assert x @ oq.Q @ x >= x @ x * (1 - 1e-12)


def test_toy_problem():
    p = toy_bilevel()
    assert p.reference_solution[0] == 0.0
    assert p.inner_nonsmooth.prox(np.array([3.7]), 0.9)[0] == 3.7
    # (x-1)^2 + lam*x^2 is minimized at 1/(1+lam)
    for lam in (1.0, 0.1, 1e-3):
        x = 1 / (1 + lam)
        grad = p.outer.gradient(np.array([x])) + lam * p.inner_smooth.gradient(np.array([x]))
        assert abs(grad[0]) <= 1e-12


@pytest.mark.parametrize("name", ["nnls", "lasso"])
def test_generated_problems_pass_audits(shipped, name):
    p = shipped[name]
    lam = 1.0 / p.inner_smooth.lipschitz_grad
    gamma = 2.0 / (p.outer.lipschitz_grad + p.outer.strong_convexity)
    assert gradient_fd_check(p.inner_smooth).passed
    assert averagedness_audit(p, lam).passed
    assert contraction_audit(p.outer, gamma).passed
    assert prox_audit(p.inner_nonsmooth, lam).passed


def test_spectral_norm_examples():
    assert spectral_norm(np.diag([3.0, 1.0])) == pytest.approx(3.0, rel=1e-8)
    rng = np.random.default_rng(0)
    u, v = rng.standard_normal(6), rng.standard_normal(4)
    u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
    assert spectral_norm(np.outer(u, v)) == pytest.approx(1.0, rel=1e-8)


def test_spectral_norm_nonconvergence_reports_estimate():
    A = np.diag([1.0, 0.999999, 0.5])
    with pytest.raises(ConvergenceError) as info:
        spectral_norm(A, max_iter=3)
    assert 0.5 < info.value.estimate <= 1.0


def test_spectral_norm_zero_matrix():
    with pytest.raises(ValueError):
        spectral_norm(np.zeros((3, 3)))


@pytest.mark.parametrize("kind", ["nnls", "lasso"])
def test_instance_round_trip(tmp_path, kind):
    p = gen_nnls(IllConditionedSpec(6, 5, seed=2)) if kind == "nnls" else gen_lasso(6, 9, seed=2)
    path = tmp_path / "inst.txt"
    write_instance(path, p.instance)
    back = read_instance(path)
    for field in ("A", "b", "x_true"):
        np.testing.assert_array_equal(getattr(back, field), getattr(p.instance, field))
    assert (back.kind, back.mu, back.noise_scale, back.seed) == \
        (p.instance.kind, p.instance.mu, p.instance.noise_scale, p.instance.seed)
    text = serialize_instance(p.instance)
    assert text.splitlines()[0] == f"%%ibigsam-instance {kind}"


def test_read_rejects_truncated(tmp_path):
    p = gen_lasso(4, 5)
    path = tmp_path / "bad.txt"
    path.write_text("\n".join(serialize_instance(p.instance).splitlines()[:-2]) + "\n")
    with pytest.raises(ValueError):
        read_instance(path)


def test_lipschitz_closed_form_vs_power_iteration():
    # power iteration is only an approximate check on clustered spectra
    oq = gen_outer_quadratic(200)
    assert spectral_norm(oq.Q, tolerance=1e-12, max_iter=100_000) == \
        pytest.approx(oq.lipschitz, rel=1e-4)
    assert math.isclose(oq.lipschitz, 3 + 2 * math.cos(math.pi / 200))
