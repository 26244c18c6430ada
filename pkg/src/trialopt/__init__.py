"""Surrogate-assisted, constrained, multi-objective optimization for
simulation-based trial design: Monte Carlo estimates of operating
characteristics feed Gaussian-process models driving a hypervolume-based
expected-improvement search over design parameters."""

from .acquisition import (
    PsoConfig,
    expected_improvement,
    feasibility_quantile,
    prob_feasible_after,
    pso_maximize,
    quantile_update,
)
from .domain import (
    Constraint,
    DesignPoint,
    DesignSpace,
    Dimension,
    EvaluationRecord,
    Hypothesis,
    ObjectiveSpec,
    Problem,
    ValidationReport,
    constraint_value,
    validate_problem,
)
from .engine import (
    BudgetConfig,
    RunAborted,
    RunState,
    fixed_design_search,
    load_checkpoint,
    recompute_feasible_set,
    resume_run,
    run,
    save_checkpoint,
    sobol_points,
)
from .gp import (
    GpConditioningError,
    GpModel,
    KernelParams,
    Prediction,
    build_model,
    fit_hyperparameters,
    gp_predict,
    kernel,
    log_marginal_likelihood,
)
from .montecarlo import McEstimate, SimulationError, derive_replicate_seed, mc_estimate
from .pareto import (
    ApproximationSet,
    dominates,
    hypervolume,
    hypervolume_improvement,
    pareto_filter,
)
from .simlib import Scenario, get_scenario, register_scenario

__version__ = "0.1.0"
