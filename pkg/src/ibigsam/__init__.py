"""Sequential-averaging solvers for simple convex bilevel optimization.

Minimize a strongly convex smooth ``h`` over the minimizers of ``f + g``
(``f`` smooth convex, ``g`` prox-friendly convex) with the inertial method
iBiG-SAM or the non-inertial BiG-SAM baseline.
"""

from .problem_model import (
    BilevelProblem,
    OuterOracle,
    ProxOracle,
    SmoothOracle,
    validate_problem,
)
from .operators import (
    StepParameters,
    averaged_beta,
    contraction_factor,
    moreau_outer_step,
    outer_step,
    project_nonnegative,
    prox_grad_map,
    soft_threshold,
    step_parameters,
)
from .solvers import (
    IterationTrace,
    NumericalFailure,
    SolverConfig,
    SolverResult,
    StopKind,
    StoppingRule,
    StopReason,
    alpha_schedule,
    big_sam_run,
    default_config,
    epsilon_schedule,
    ibig_sam_run,
    reference_run,
    theta_bar,
    tikhonov_path,
)
from .problems import (
    IllConditionedSpec,
    gen_ill_conditioned,
    gen_lasso,
    gen_nnls,
    gen_outer_quadratic,
    spectral_norm,
    toy_bilevel,
)

__version__ = "0.1.0"
