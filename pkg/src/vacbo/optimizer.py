"""Closed-loop tuning under a prescribed violation-cost budget.

Each step observes the context, computes the per-constraint violation
allowance from the budget ledger, and maximizes the constrained proxy
expected improvement over a fixed set-point grid, restricted to candidates
whose predicted violation cost stays within the allowance with probability
at least 1 - epsilon. The two classical baselines fall out as budget
settings: an unlimited budget recovers generic constrained tuning, a zero
budget recovers a feasibility-only (safe-style) search.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import acquisition as acq
from .budget import BudgetState, record_violation, step_budget
from .gp import GPModel, fit_arrays
from .problems import ContextSource, PlantEvaluationError, TuningProblem, next_context

logger = logging.getLogger(__name__)

MODES = ("vacbo", "cbo_generic", "safe_style")


@dataclass(frozen=True, eq=False)
class OptimizerConfig:
    """Everything that parameterizes one run besides the problem itself.

    Budgets are given per constraint; scalars broadcast. Mode overrides
    them: 'cbo_generic' forces total budget and per-step cap to infinity,
    'safe_style' forces the total budget to zero.
    """

    horizon: int
    total_budget: tuple | float = math.inf
    per_step_cap: tuple | float = math.inf
    schedule_a: tuple | float = 0.0
    schedule_b: tuple | float = 1.0
    epsilon: float = 0.01
    grid_resolution: int = 25
    mode: str = "vacbo"
    rng_seed: int = 0
    multistart_refine: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; use one of {MODES}")
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if self.horizon < 0:
            raise ValueError(f"horizon must be >= 0, got {self.horizon}")
        if self.grid_resolution < 2:
            raise ValueError(f"grid_resolution must be >= 2, got {self.grid_resolution}")

    def resolved_budgets(self, n_constraints: int):
        """Per-constraint (total, cap, a, b) arrays after applying the mode."""
        def expand(v):
            return np.broadcast_to(np.asarray(v, dtype=float), (n_constraints,)).copy()

        total, cap = expand(self.total_budget), expand(self.per_step_cap)
        a, b = expand(self.schedule_a), expand(self.schedule_b)
        if self.mode == "cbo_generic":
            total = np.full(n_constraints, math.inf)
            cap = np.full(n_constraints, math.inf)
        elif self.mode == "safe_style":
            total = np.zeros(n_constraints)
        return total, cap, a, b


@dataclass(frozen=True)
class StepRecord:
    """Everything observed and decided in one optimization step."""

    t: int
    context: tuple
    theta: tuple
    objective: float
    constraints: tuple
    violation_costs: tuple
    step_budgets: tuple
    feasible_set_size: int
    fallback_used: bool


@dataclass(frozen=True, eq=False)
class OptimizerState:
    """Immutable snapshot between steps; ``step`` returns a new one."""

    problem: TuningProblem
    config: OptimizerConfig
    objective_model: GPModel
    constraint_models: tuple
    budget: BudgetState
    theta_grid: np.ndarray
    initial_safe_violations: int = 0


@dataclass(frozen=True)
class RunResult:
    """Full trace plus summary metrics; reproducible from the config echo."""

    config: dict
    records: tuple
    summary: dict
    wall_clock: float = field(compare=False, default=0.0)


def split_rng_streams(seed: int) -> dict:
    """Independent, deterministically derived generators for one run."""
    children = np.random.SeedSequence(seed).spawn(3)
    return {
        "context": np.random.default_rng(children[0]),
        "tie_break": np.random.default_rng(children[1]),  # reserved; ties use grid order
        "plant": np.random.default_rng(children[2]),
    }


def build_theta_grid(theta_box: np.ndarray, resolution: int) -> np.ndarray:
    """Uniform per-dimension grid, first dimension varying slowest."""
    axes = [np.linspace(lo, hi, resolution) for lo, hi in theta_box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _dedupe_rows(pairs):
    seen, out = set(), []
    for theta, z in pairs:
        key = (tuple(np.asarray(theta, dtype=float)), tuple(np.asarray(z, dtype=float)))
        if key not in seen:
            seen.add(key)
            out.append((np.asarray(theta, dtype=float), np.asarray(z, dtype=float)))
    return out


def initialize(problem: TuningProblem, config: OptimizerConfig) -> OptimizerState:
    """Evaluate the initial safe set and fit the surrogate models.

    A safe point that turns out to violate a constraint is kept (data is
    data) but counted, since the downstream budget guarantee assumes a
    genuinely feasible start.
    """
    safe_set = _dedupe_rows(problem.initial_safe_set)
    if not safe_set:
        raise ValueError("initial safe set must be non-empty")
    inputs, objectives, constraints = [], [], []
    violations = 0
    for theta, z in safe_set:
        obj, g = problem.evaluate(theta, z)
        g = np.asarray(g, dtype=float).ravel()
        if np.any(g > 0):
            violations += 1
            logger.warning(
                "initial safe-set point %s at context %s violates constraints (g=%s); "
                "budget guarantees no longer apply", theta, z, g,
            )
        inputs.append(acq.augment_input(theta, z))
        objectives.append(obj)
        constraints.append(g)
    X = np.stack(inputs)
    y = np.asarray(objectives, dtype=float)
    G = np.stack(constraints)

    objective_model = fit_arrays(problem.objective_kernel, float(np.mean(y)), X, y)
    constraint_models = tuple(
        fit_arrays(spec, 0.0, X, G[:, i])
        for i, spec in enumerate(problem.constraint_kernels)
    )
    total, cap, a, b = config.resolved_budgets(problem.n_constraints)
    budget = BudgetState(
        total_budget=total,
        per_step_cap=cap,
        schedule_a=a,
        schedule_b=b,
        horizon=config.horizon,
        spent=np.zeros(problem.n_constraints),
    )
    grid = build_theta_grid(problem.theta_box, config.grid_resolution)
    return OptimizerState(
        problem=problem,
        config=config,
        objective_model=objective_model,
        constraint_models=constraint_models,
        budget=budget,
        theta_grid=grid,
        initial_safe_violations=violations,
    )


def _grid_scores(state: OptimizerState, X: np.ndarray, thresholds):
    """CPEI scores and within-budget probabilities for a stack of inputs."""
    mu_l, sd_l = state.objective_model.posterior_grid(X)
    p_within = np.ones(X.shape[0])
    p_feasible = np.ones(X.shape[0])
    for model, tau in zip(state.constraint_models, thresholds):
        mu_g, sd_g = model.posterior_grid(X)
        p_within *= acq.prob_below_array(mu_g, sd_g, tau)
        p_feasible *= acq.prob_below_array(mu_g, sd_g, 0.0)
    return mu_l, sd_l, p_within, p_feasible


def _refine(state: OptimizerState, theta, context, incumbent_value, thresholds):
    """Deterministic coordinate refinement around the grid argmax."""
    box = state.problem.theta_box
    spacing = (box[:, 1] - box[:, 0]) / (state.config.grid_resolution - 1)
    theta = np.asarray(theta, dtype=float).copy()

    def score_at(cands):
        X = acq.augment_grid(cands, context)
        mu_l, sd_l, p_within, p_feasible = _grid_scores(state, X, thresholds)
        ei = acq.expected_improvement_array(mu_l, sd_l, incumbent_value)
        scores = np.where(p_within >= 1.0 - state.config.epsilon, p_feasible * ei, -np.inf)
        return scores

    for _ in range(2):
        for d in range(theta.shape[0]):
            lo = max(box[d, 0], theta[d] - spacing[d])
            hi = min(box[d, 1], theta[d] + spacing[d])
            cands = np.tile(theta, (9, 1))
            cands[:, d] = np.linspace(lo, hi, 9)
            scores = score_at(cands)
            j = int(np.argmax(scores))
            if scores[j] > -np.inf:
                theta = cands[j]
    return theta


def propose(state: OptimizerState, context) -> tuple[np.ndarray, dict]:
    """Solve the per-step acquisition problem at the observed context.

    Returns the chosen set-point and diagnostics: the step allowances, the
    number of grid candidates passing the chance constraint, and whether
    the fallback rule (no candidate passed; pick the most-probably-within-
    budget point) was used.
    """
    context = np.asarray(context, dtype=float).ravel()
    if context.shape[0] != state.problem.n_z:
        raise ValueError(
            f"context dimension mismatch: expected {state.problem.n_z}, got {context.shape[0]}"
        )
    allowances = [step_budget(state.budget, i) for i in range(state.problem.n_constraints)]
    thresholds = [fn.inverse(b) for fn, b in zip(state.problem.cost_fns, allowances)]
    X = acq.augment_grid(state.theta_grid, context)
    mu_l, sd_l, p_within, p_feasible = _grid_scores(state, X, thresholds)

    incumbent_idx = int(np.argmin(mu_l))
    incumbent_value = float(mu_l[incumbent_idx])
    ei = acq.expected_improvement_array(mu_l, sd_l, incumbent_value)
    cpei = p_feasible * ei

    passes = p_within >= 1.0 - state.config.epsilon
    feasible_count = int(np.count_nonzero(passes))
    if feasible_count > 0:
        j = int(np.argmax(np.where(passes, cpei, -np.inf)))
        fallback = False
    else:
        j = int(np.argmax(p_within))
        fallback = True
    theta = state.theta_grid[j].copy()

    if state.config.multistart_refine and not fallback:
        theta = _refine(state, theta, context, incumbent_value, thresholds)

    diagnostics = {
        "step_budgets": tuple(float(b) for b in allowances),
        "feasible_set_size": feasible_count,
        "fallback_used": fallback,
        "incumbent_value": incumbent_value,
    }
    return theta, diagnostics


def step(state: OptimizerState, context) -> tuple[OptimizerState, StepRecord]:
    """Propose, evaluate the plant, charge the ledger, update the models."""
    t = state.budget.step
    theta, diag = propose(state, context)
    context = np.asarray(context, dtype=float).ravel()
    try:
        objective, g = state.problem.evaluate(theta, context)
    except Exception as exc:
        partial = {
            "t": t,
            "theta": tuple(float(v) for v in theta),
            "context": tuple(float(v) for v in context),
            **diag,
        }
        raise PlantEvaluationError(
            f"plant evaluation failed at step {t} (theta={theta}, context={context}): {exc}",
            partial=partial,
        ) from exc
    g = np.asarray(g, dtype=float).ravel()
    costs = np.array([fn.cost(v) for fn, v in zip(state.problem.cost_fns, g)])

    x = acq.augment_input(theta, context)
    new_state = replace(
        state,
        objective_model=state.objective_model.add(x, objective),
        constraint_models=tuple(
            m.add(x, v) for m, v in zip(state.constraint_models, g)
        ),
        budget=record_violation(state.budget, costs),
    )
    record = StepRecord(
        t=t,
        context=tuple(float(v) for v in context),
        theta=tuple(float(v) for v in theta),
        objective=float(objective),
        constraints=tuple(float(v) for v in g),
        violation_costs=tuple(float(c) for c in costs),
        step_budgets=diag["step_budgets"],
        feasible_set_size=diag["feasible_set_size"],
        fallback_used=diag["fallback_used"],
    )
    return new_state, record


def summarize(records, config: OptimizerConfig, problem: TuningProblem,
              initial_safe_violations: int = 0) -> dict:
    """Summary metrics, all recomputable exactly from the step records."""
    n = problem.n_constraints
    summary = {
        "steps": len(records),
        "implied_delta": 1.0 - (1.0 - config.epsilon) ** config.horizon,
        "initial_safe_set_violations": initial_safe_violations,
        "fallback_steps": sum(1 for r in records if r.fallback_used),
    }
    if not records:
        summary.update(
            mean_objective=None,
            best_feasible_objective=None,
            max_violation=[None] * n,
            max_step_cost=[None] * n,
            cumulative_cost=[None] * n,
            metrics_defined=False,
        )
        return summary
    objectives = np.array([r.objective for r in records])
    G = np.array([r.constraints for r in records])
    C = np.array([r.violation_costs for r in records])
    feasible = np.all(G <= 0.0, axis=1)
    summary.update(
        mean_objective=float(np.mean(objectives)),
        best_feasible_objective=(
            float(np.min(objectives[feasible])) if np.any(feasible) else None
        ),
        max_violation=[float(v) for v in np.max(np.maximum(G, 0.0), axis=0)],
        max_step_cost=[float(v) for v in np.max(C, axis=0)],
        cumulative_cost=[float(v) for v in np.sum(C, axis=0)],
        metrics_defined=True,
    )
    return summary


def config_echo(problem: TuningProblem, config: OptimizerConfig,
                context_source: ContextSource) -> dict:
    """Every parameter affecting the run, sufficient to replay it."""
    total, cap, a, b = config.resolved_budgets(problem.n_constraints)
    source: dict = {"kind": context_source.kind}
    if context_source.kind == "recurring":
        source["base"] = context_source.base.tolist()
        source["noise_std"] = context_source.noise_std.tolist()
    elif context_source.kind == "trace":
        source["path"] = context_source.trace_path
    else:
        source["value"] = context_source.constant.tolist()
    return {
        "problem": problem.name,
        "mode": config.mode,
        "horizon": config.horizon,
        "epsilon": config.epsilon,
        "grid_resolution": config.grid_resolution,
        "seed": config.rng_seed,
        "multistart_refine": config.multistart_refine,
        "total_budget": total.tolist(),
        "per_step_cap": cap.tolist(),
        "schedule_a": a.tolist(),
        "schedule_b": b.tolist(),
        "context_source": source,
    }


def run(problem: TuningProblem, config: OptimizerConfig,
        context_source: ContextSource) -> RunResult:
    """Execute the full closed loop for ``config.horizon`` steps."""
    started = time.perf_counter()
    streams = split_rng_streams(config.rng_seed)
    state = initialize(problem, config)
    records = []
    for t in range(1, config.horizon + 1):
        z = next_context(context_source, t, streams["context"])
        state, record = step(state, z)
        records.append(record)
    summary = summarize(records, config, problem, state.initial_safe_violations)
    return RunResult(
        config=config_echo(problem, config, context_source),
        records=tuple(records),
        summary=summary,
        wall_clock=time.perf_counter() - started,
    )


def fixed_setpoint_trace(problem: TuningProblem, config: OptimizerConfig,
                         context_source: ContextSource, theta) -> list[float]:
    """Objective trajectory of holding one set-point over the same contexts.

    Uses the same context stream derivation as ``run`` so the comparison is
    paired step for step.
    """
    streams = split_rng_streams(config.rng_seed)
    theta = np.asarray(theta, dtype=float)
    values = []
    for t in range(1, config.horizon + 1):
        z = next_context(context_source, t, streams["context"])
        obj, _ = problem.evaluate(theta, z)
        values.append(float(obj))
    return values
