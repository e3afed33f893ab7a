"""Budgeted-violation contextual Bayesian optimization for set-point tuning."""

from .acquisition import (
    AcquisitionQuery,
    ProxyIncumbent,
    cpei,
    expected_improvement,
    feasibility_prob,
    proxy_min,
)
from .budget import (
    BudgetState,
    ViolationCostFn,
    chance_threshold,
    inverse_cost,
    record_violation,
    step_budget,
    violation_cost,
)
from .gp import GPModel, GPNumericsError, KernelSpec, add_observation, fit, kernel_eval, posterior
from .optimizer import (
    OptimizerConfig,
    OptimizerState,
    RunResult,
    StepRecord,
    initialize,
    propose,
    run,
    step,
)
from .problems import (
    ContextSource,
    TuningProblem,
    gp_prior_sample,
    make_problem,
    next_context,
    trap_benchmark,
    vcs_surrogate,
)

__version__ = "0.1.0"

__all__ = [
    "AcquisitionQuery", "ProxyIncumbent", "cpei", "expected_improvement",
    "feasibility_prob", "proxy_min",
    "BudgetState", "ViolationCostFn", "chance_threshold", "inverse_cost",
    "record_violation", "step_budget", "violation_cost",
    "GPModel", "GPNumericsError", "KernelSpec", "add_observation", "fit",
    "kernel_eval", "posterior",
    "OptimizerConfig", "OptimizerState", "RunResult", "StepRecord",
    "initialize", "propose", "run", "step",
    "ContextSource", "TuningProblem", "gp_prior_sample", "make_problem",
    "next_context", "trap_benchmark", "vcs_surrogate",
]
