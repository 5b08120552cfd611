"""
How far is a 1000-step reference from the bilevel solution?
===========================================================

A common protocol measures progress as ``||x_n - x*||`` where ``x*`` is
the 1000th iterate of the plain method. With ``alpha_n = 0.8/n`` that
iterate still carries an outer-objective bias of order ``alpha_n``, so
only the plain method itself (which reproduces ``x*`` bit for bit at
n = 1000) can get within a tight tolerance of it.
"""

import numpy as np

from ibigsam import (
    StoppingRule,
    big_sam_run,
    default_config,
    gen_lasso,
    ibig_sam_run,
    reference_run,
)

problem = gen_lasso(100, 500, mu=0.5, noise_scale=0.01, seed=0)
x_ref, phi_ref = reference_run(problem)
x_long, phi_long = reference_run(problem, iterations=20_000)
print(f"||x_1000 - x_20000|| = {np.linalg.norm(x_ref - x_long):.3f}")
print(f"phi(x_1000) = {phi_ref:.4f}   phi(x_20000) = {phi_long:.4f}")

cfg = default_config(problem, max_iterations=5000,
                     stopping=StoppingRule.distance(x_ref, 1e-3))
a = ibig_sam_run(problem, cfg)
b = big_sam_run(problem, cfg)
d = a.trace.column("dist_ref")
print(f"bigsam stops at n={b.iterations_used}")
print(f"ibigsam closest approach {d.min():.3f} at n={int(np.argmin(d)) + 1}, "
      f"stop reason {a.stop_reason.value}")

# both methods are still far from a better-converged point after 5000 steps
cfg = default_config(problem, max_iterations=5000)
for run in (ibig_sam_run, big_sam_run):
    x = run(problem, cfg).solution
    print(f"{run.__name__:13s} ||x_5000 - x_20000|| = {np.linalg.norm(x - x_long):.3f}")
