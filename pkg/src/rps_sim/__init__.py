"""Projected Milstein simulation of random periodic solutions of
semi-linear SDEs with multiplicative, time-periodic noise."""

__version__ = "0.1.0"

from ._backend import active_backend, compiled_available
from .noise import (
    BrownianGrid,
    PathView,
    aggregate,
    derive_seed,
    levy_product,
    load_grid,
    sample_grid,
    save_grid,
    theta_shift,
)
from .problems import (
    CoefficientField,
    DissipativityEstimate,
    LinearPart,
    SdeProblem,
    benchmark_problem,
    check_commutativity,
    check_periodicity,
    estimate_coercivity_constant,
    estimate_monotonicity_constant,
    eval_levy_coefficient,
    exact_linear_solution,
    gbm_problem,
    get_problem,
    ou_problem,
)
from .schemes import (
    BlowUpError,
    SchemeConfig,
    StepBoundParams,
    Trajectory,
    admissible_stepsize,
    em_step,
    estimate_beta,
    pem_step,
    pmm_step,
    project,
    simulate,
)
from .rps import (
    PullbackConfig,
    initial_condition_coupling,
    periodicity_check,
    pullback_limit,
    second_moment_watch,
)
from .msq import ConvergenceStudy, ErrorTable, mean_square_error, run_study, slope_fit
