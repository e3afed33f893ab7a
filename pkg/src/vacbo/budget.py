"""Violation costs, their inverses, and the per-step budget allocator.

A violation cost function prices the positive part of a constraint value.
Each constraint carries a total budget over the horizon, an optional
per-step cap, and an affine schedule releasing the budget over time. The
per-step allowance is

    allocated_t = min(max(total * S_t - spent, 0), cap)

with S_t = a + b * t / T, so overspending in early steps locks the
allocator down and unspent allowance rolls forward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

_COST_KINDS = ("quadratic", "linear", "power")


@dataclass(frozen=True)
class ViolationCostFn:
    """Non-decreasing cost of a violation magnitude, with cost(0) = 0.

    Implemented families are all of the form scale * s**p: quadratic
    (p = 2), linear (p = 1), and a general power p >= 1.
    """

    kind: str
    scale: float = 1.0
    exponent: float = 2.0

    def __post_init__(self):
        if self.kind not in _COST_KINDS:
            raise ValueError(f"unknown cost kind {self.kind!r}; use one of {_COST_KINDS}")
        if not self.scale > 0:
            raise ValueError(f"cost scale must be > 0, got {self.scale}")
        if self.kind == "power" and not self.exponent >= 1:
            raise ValueError(f"power exponent must be >= 1, got {self.exponent}")

    @classmethod
    def quadratic(cls, scale: float = 1.0) -> "ViolationCostFn":
        return cls("quadratic", scale=scale)

    @classmethod
    def linear(cls, scale: float = 1.0) -> "ViolationCostFn":
        return cls("linear", scale=scale)

    @classmethod
    def power(cls, exponent: float, scale: float = 1.0) -> "ViolationCostFn":
        return cls("power", scale=scale, exponent=exponent)

    @property
    def _p(self) -> float:
        return {"quadratic": 2.0, "linear": 1.0}.get(self.kind, self.exponent)

    def cost(self, g_value: float) -> float:
        """Cost of the positive part of a constraint value."""
        s = max(0.0, float(g_value))
        return self.scale * s ** self._p

    def inverse(self, budget: float) -> float:
        """Largest violation magnitude whose cost stays within ``budget``."""
        if budget < 0:
            raise ValueError(f"budget must be >= 0, got {budget}")
        if math.isinf(budget):
            return math.inf
        return (budget / self.scale) ** (1.0 / self._p)


def violation_cost(fn: ViolationCostFn, g_value: float) -> float:
    return fn.cost(g_value)


def inverse_cost(fn: ViolationCostFn, budget: float) -> float:
    return fn.inverse(budget)


def validate_schedule(values) -> None:
    """Check a schedule sampled at t = 1..T: non-decreasing, ends at 1."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return
    if np.any(np.diff(values) < 0):
        raise ValueError("budget schedule must be non-decreasing in t")
    if not math.isclose(float(values[-1]), 1.0, abs_tol=1e-9):
        raise ValueError(f"budget schedule must end at 1, got {values[-1]}")


@dataclass(frozen=True, eq=False)
class BudgetState:
    """Per-constraint budget ledger for one run.

    ``step`` is the 1-based index of the *next* optimization step;
    ``spent`` accumulates realized violation costs of past steps.
    """

    total_budget: np.ndarray
    per_step_cap: np.ndarray
    schedule_a: np.ndarray
    schedule_b: np.ndarray
    horizon: int
    spent: np.ndarray
    step: int = 1

    def __post_init__(self):
        for name in ("total_budget", "per_step_cap", "schedule_a", "schedule_b", "spent"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).ravel())
        n = self.total_budget.shape[0]
        for name in ("per_step_cap", "schedule_a", "schedule_b", "spent"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"{name} must have one entry per constraint ({n})")
        if np.any(self.total_budget < 0) or np.any(self.per_step_cap < 0):
            raise ValueError("budgets and per-step caps must be >= 0")
        if np.any(self.spent < 0):
            raise ValueError("spent cost must be >= 0")
        if np.any(self.schedule_a < 0) or np.any(self.schedule_b < 0):
            raise ValueError("schedule coefficients must be >= 0")
        if not np.allclose(self.schedule_a + self.schedule_b, 1.0, atol=1e-9):
            raise ValueError("schedule coefficients must satisfy a + b = 1")
        # horizon 0 is the degenerate empty run; allocation then never happens
        if self.horizon < 0 or self.step < 1:
            raise ValueError("horizon must be >= 0 and step >= 1")
        if self.horizon >= 1:
            for i in range(n):
                validate_schedule(
                    [self.schedule_value(i, t) for t in range(1, self.horizon + 1)]
                )

    @property
    def n_constraints(self) -> int:
        return self.total_budget.shape[0]

    def schedule_value(self, i: int, t: int | None = None) -> float:
        t = self.step if t is None else t
        return float(self.schedule_a[i] + self.schedule_b[i] * t / self.horizon)


def step_budget(state: BudgetState, i: int) -> float:
    """Violation-cost allowance for constraint ``i`` at the current step."""
    if not 1 <= state.step <= state.horizon:
        raise ValueError(f"step {state.step} outside horizon [1, {state.horizon}]")
    total = float(state.total_budget[i])
    if math.isinf(total):
        allocated = math.inf
    else:
        allocated = total * state.schedule_value(i) - float(state.spent[i])
    return min(max(allocated, 0.0), float(state.per_step_cap[i]))


def record_violation(state: BudgetState, costs) -> BudgetState:
    """Charge realized step costs to the ledger and advance the step."""
    costs = np.asarray(costs, dtype=float).ravel()
    if costs.shape[0] != state.n_constraints:
        raise ValueError(f"expected {state.n_constraints} costs, got {costs.shape[0]}")
    if np.any(costs < 0):
        raise ValueError("violation costs must be >= 0")
    return replace(state, spent=state.spent + costs, step=state.step + 1)


def chance_threshold(fn: ViolationCostFn, state: BudgetState, i: int) -> float:
    """Constraint-space threshold whose cost equals the step allowance."""
    return fn.inverse(step_budget(state, i))
