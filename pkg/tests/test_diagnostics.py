"""The audit suite, including canaries that must trip."""

import csv

import numpy as np
import pytest

from ibigsam import default_config, ibig_sam_run
from ibigsam.diagnostics import (
    REPORT_COLUMNS,
    AuditReport,
    averagedness_audit,
    brute_force_prox,
    contraction_audit,
    corrupt_gradient,
    gradient_fd_check,
    prox_audit,
    trace_audit,
    write_reports_csv,
)
from ibigsam.problems import gen_outer_quadratic, l1_norm, nonnegative_indicator, zero_function
from ibigsam.solvers import IterationTrace, TraceRecord

PROBLEMS = ["toy", "nnls", "lasso"]


@pytest.mark.parametrize("name", PROBLEMS)
def test_fd_check_passes_and_canary_fails(shipped, name):
    f = shipped[name].inner_smooth
    assert gradient_fd_check(f).passed
    bad = gradient_fd_check(corrupt_gradient(f))
    assert not bad.passed
    assert bad.worst_violation > 1e-3


def test_fd_check_on_quadratic_outer():
    oq = gen_outer_quadratic(8)
    h = oq.oracle()
    x = np.linspace(-1, 1, 8)
    np.testing.assert_allclose(h.gradient(x), oq.Q @ x, atol=1e-15)
    assert gradient_fd_check(h).passed


@pytest.mark.parametrize("name", PROBLEMS)
def test_averagedness(shipped, name):
    p = shipped[name]
    lf = p.inner_smooth.lipschitz_grad
    assert averagedness_audit(p, 1.0 / lf).passed
    assert averagedness_audit(p, 1.9 / lf).passed
    assert not averagedness_audit(p, 3.0 / lf, canary=True).passed


def test_averagedness_toy_is_exact(toy):
    # L_f = 2: T_lam(x) = 0.5x at lam=1/4, beta = 0.625, residual slope 0.2
    r = averagedness_audit(toy, 0.25)
    assert r.worst_violation == pytest.approx(-0.8, abs=1e-9)


@pytest.mark.parametrize("name", PROBLEMS)
def test_contraction(shipped, name):
    h = shipped[name].outer
    gamma = 2.0 / (h.lipschitz_grad + h.strong_convexity)
    assert contraction_audit(h, gamma).passed
    assert not contraction_audit(h, 2 * gamma, canary=True).passed


def test_contraction_quadratic_eigen_bound():
    oq = gen_outer_quadratic(12)
    gamma = 1.0 / oq.lipschitz
    ev = np.linalg.eigvalsh(oq.Q)
    spectral = np.max(np.abs(1 - gamma * ev))
    r = contraction_audit(oq.oracle(), gamma)
    assert r.passed
    # the sampled ratio never exceeds the exact operator norm of I - gamma Q
    eta = np.sqrt(1 - 2 * gamma * oq.sigma * oq.lipschitz / (oq.sigma + oq.lipschitz))
    assert r.worst_violation + eta <= spectral + 1e-12


@pytest.mark.parametrize("g", [l1_norm(0.7, 4), nonnegative_indicator(5), zero_function(3)],
                         ids=["l1", "nonneg", "zero"])
def test_prox_audit_passes(g):
    assert prox_audit(g, 0.8).passed


def test_prox_audit_catches_wrong_prox():
    from dataclasses import replace
    g = l1_norm(0.7, 3)
    bad = replace(g, prox=lambda x, s: 1.5 * x)
    assert not prox_audit(bad, 0.8).passed


def test_brute_force_prox_l1():
    g = l1_norm(0.5, 3)
    x = np.array([1.0, -0.2, 0.5])
    np.testing.assert_allclose(brute_force_prox(g, x, 1.0), [0.5, 0.0, 0.0], atol=1e-8)


def test_brute_force_prox_nonseparable():
    from ibigsam.problems import quadratic_outer
    from ibigsam import ProxOracle
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    h = quadratic_outer(Q, 0.8, 2.5)
    g = ProxOracle(h.prox, 2, value=h.value)
    y = np.array([1.0, -2.0])
    np.testing.assert_allclose(brute_force_prox(g, y, 0.6), h.prox(y, 0.6), atol=1e-6)


def test_trace_audit_on_run(lasso_small):
    cfg = default_config(lasso_small, max_iterations=100)
    assert trace_audit(ibig_sam_run(lasso_small, cfg).trace, cfg).passed


def test_trace_audit_zero_inertia(lasso_small):
    cfg = default_config(lasso_small, max_iterations=30, force_zero_inertia=True)
    tr = ibig_sam_run(lasso_small, cfg).trace
    r = trace_audit(tr, cfg)
    assert r.passed
    assert np.all(tr.column("inertia_mag") == 0)


def _rec(n, theta, eps, mag, alpha=0.5):
    return TraceRecord(n, theta, alpha, eps, 1.0, 1.0, None, mag, 0.0)


def test_trace_audit_catches_inertia_fault(toy):
    cfg = default_config(toy)
    tr = IterationTrace()
    tr.append(_rec(1, 0.0, 0.5, 0.0))
    tr.append(_rec(2, 0.2, 0.01, 0.02))
    r = trace_audit(tr, cfg)
    assert not r.passed
    assert r.worst_index == 1


def test_trace_audit_catches_alpha_and_cap(toy):
    cfg = default_config(toy)
    tr = IterationTrace([_rec(1, 0.0, 0.5, 0.0, alpha=1.0)])
    assert not trace_audit(tr, cfg).passed
    tr = IterationTrace([_rec(1, 0.1, 0.5, 0.0)])
    assert not trace_audit(tr, cfg).passed


def test_trace_audit_rejects_empty(toy):
    with pytest.raises(ValueError):
        trace_audit(IterationTrace(), default_config(toy))


def test_audits_deterministic(nnls_small):
    lam = 1.0 / nnls_small.inner_smooth.lipschitz_grad
    assert averagedness_audit(nnls_small, lam, seed=3) == averagedness_audit(nnls_small, lam, seed=3)


def test_report_csv(tmp_path):
    reports = [AuditReport("a", 10, 0.5, 1.0, 3), AuditReport("b", 5, 2.0, 1.0, 0, canary=True)]
    path = tmp_path / "r.csv"
    write_reports_csv(path, reports)
    rows = list(csv.reader(path.open()))
    assert tuple(rows[0]) == REPORT_COLUMNS
    assert rows[1] == ["a", "10", "0.5", "1.0", "3", "1", "0"]
    assert rows[2][-2:] == ["0", "1"]
