"""
A scalar bilevel problem
========================

Minimize ``(x - 1)^2`` over the minimizers of ``x^2``. The inner problem
has the single solution 0, so that is the bilevel answer too. Penalizing
instead (``(x-1)^2 + lam*x^2``) gives ``1/(1+lam)``, which is never 0 for
finite ``lam``: the penalty approach only gets there in the limit.
"""

import numpy as np

from ibigsam import (
    StoppingRule,
    big_sam_run,
    default_config,
    ibig_sam_run,
    tikhonov_path,
    toy_bilevel,
)

problem = toy_bilevel()

# the penalized minimizers creep towards 0 as lam shrinks
grid = [1.0, 0.1, 0.01, 1e-3, 1e-4]
for pt in tikhonov_path(problem, grid, mode="penalty"):
    print(f"lam={pt.lam:<7g} x(lam)={pt.x[0]:.6f}  closed form {1 / (1 + pt.lam):.6f}")

# the sequential-averaging methods go straight for 0
stop = StoppingRule.distance(np.zeros(1), 1e-4)
cfg = default_config(problem, gamma=0.25, max_iterations=10_000, stopping=stop)
for run in (ibig_sam_run, big_sam_run):
    res = run(problem, cfg, np.array([5.0]))
    print(f"{run.__name__:13s} x={res.solution[0]:.3e} after {res.iterations_used} iterations")

# with the default gamma = 2/(L_h+sigma) the outer step lands exactly on the
# outer minimizer 1, and the iterates decay like 0.8/n
res = ibig_sam_run(problem, default_config(problem, max_iterations=10_000, stopping=stop))
h = res.trace.column("h")
print(f"default steps: {res.iterations_used} iterations, final h={h[-1]:.6f}")

# the Moreau-envelope variant replaces the gradient step with prox_{gamma h}
cfg = default_config(problem, max_iterations=10_000, stopping=stop, use_moreau_outer=True)
res = ibig_sam_run(problem, cfg)
print(f"moreau variant x={res.solution[0]:.3e} after {res.iterations_used} iterations")
