"""
Inertia on an ill-conditioned nonnegative least-squares problem
================================================================

The operator has singular values spread geometrically from 1 down to
1e-6, so the inner problem has a large, flat solution set. The outer
objective ``0.5 x'(D'D + I)x`` picks the smoothest nonnegative solution.

We count iterations until the inner objective is within 1% of a
reference value, for the inertial method and the plain one.
"""

import numpy as np

from ibigsam import (
    IllConditionedSpec,
    StoppingRule,
    big_sam_run,
    default_config,
    gen_nnls,
    ibig_sam_run,
    reference_run,
)
from ibigsam.diagnostics import trace_audit

counts = []
for seed in range(10):
    problem = gen_nnls(IllConditionedSpec(200, 200, seed=seed))
    _, phi_star = reference_run(problem)
    cfg = default_config(problem, max_iterations=10_000,
                         stopping=StoppingRule.relative_gap(phi_star, 1e-2))
    a = ibig_sam_run(problem, cfg)
    b = big_sam_run(problem, cfg)
    assert trace_audit(a.trace, cfg).passed
    counts.append((a.iterations_used, b.iterations_used))
    print(f"seed {seed}: ibigsam {a.iterations_used:5d}  bigsam {b.iterations_used:5d}")

counts = np.array(counts, dtype=float)
print(f"mean: ibigsam {counts[:, 0].mean():.1f}  bigsam {counts[:, 1].mean():.1f}")

# the inertial weight theta_n follows its cap (n-1)/(n+2) until the step
# length makes eps_n / ||x_n - x_{n-1}|| the binding term
problem = gen_nnls(IllConditionedSpec(200, 200, seed=0))
res = ibig_sam_run(problem, default_config(problem, max_iterations=400))
theta = res.trace.column("theta")
n = res.trace.column("n")
cap = (n - 1) / (n + 2)
binding = np.flatnonzero(theta < cap)
print(f"theta below its cap from iteration {int(n[binding[0]]) if binding.size else None}")
for k in (1, 10, 100, 400):
    print(f"  n={k:3d} theta={theta[k - 1]:.4f} cap={cap[k - 1]:.4f}")
