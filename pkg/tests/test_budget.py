"""Violation cost, inverse, and budget allocator tests."""

import math

import numpy as np
import pytest

from vacbo.budget import (
    BudgetState,
    ViolationCostFn,
    chance_threshold,
    inverse_cost,
    record_violation,
    step_budget,
    validate_schedule,
    violation_cost,
)

ALL_FAMILIES = [
    ViolationCostFn.quadratic(),
    ViolationCostFn.quadratic(scale=3.0),
    ViolationCostFn.linear(),
    ViolationCostFn.linear(scale=2.0),
    ViolationCostFn.power(1.5),
    ViolationCostFn.power(3.0, scale=0.5),
]


def make_state(total, cap, a, b, horizon, spent=None, step=1):
    total = np.atleast_1d(np.asarray(total, dtype=float))
    n = total.shape[0]
    return BudgetState(
        total_budget=total,
        per_step_cap=np.broadcast_to(np.asarray(cap, dtype=float), (n,)),
        schedule_a=np.broadcast_to(np.asarray(a, dtype=float), (n,)),
        schedule_b=np.broadcast_to(np.asarray(b, dtype=float), (n,)),
        horizon=horizon,
        spent=np.zeros(n) if spent is None else np.atleast_1d(np.asarray(spent, dtype=float)),
        step=step,
    )


class TestViolationCost:
    def test_no_violation_no_cost(self):
        assert violation_cost(ViolationCostFn.quadratic(), -3.0) == 0.0

    def test_quadratic_penalty(self):
        assert violation_cost(ViolationCostFn.quadratic(), 2.0) == pytest.approx(4.0)

    def test_linear_scaled(self):
        assert violation_cost(ViolationCostFn.linear(scale=2.0), 1.5) == pytest.approx(3.0)

    def test_monotone_nondecreasing(self):
        rng = np.random.default_rng(0)
        for fn in ALL_FAMILIES:
            for _ in range(200):
                s2, s1 = np.sort(rng.uniform(0, 5, size=2))
                assert fn.cost(s1) >= fn.cost(s2)

    def test_validation(self):
        with pytest.raises(ValueError):
            ViolationCostFn("cubic")
        with pytest.raises(ValueError):
            ViolationCostFn.quadratic(scale=0.0)
        with pytest.raises(ValueError):
            ViolationCostFn.power(0.5)


class TestInverseCost:
    def test_quadratic_sqrt(self):
        assert inverse_cost(ViolationCostFn.quadratic(), 9.0) == pytest.approx(3.0)

    def test_zero_budget(self):
        for fn in ALL_FAMILIES:
            assert inverse_cost(fn, 0.0) == 0.0

    def test_infinite_budget(self):
        assert inverse_cost(ViolationCostFn.quadratic(), math.inf) == math.inf

    def test_round_trip(self):
        rng = np.random.default_rng(1)
        for fn in ALL_FAMILIES:
            for _ in range(100):
                b = rng.uniform(0, 20)
                r = fn.inverse(b)
                assert fn.cost(r) <= b + 1e-9
                # implemented families are continuous and strictly increasing
                assert fn.cost(r) == pytest.approx(b, rel=1e-9, abs=1e-12)

    def test_negative_budget_rejected(self):
        with pytest.raises(ValueError):
            inverse_cost(ViolationCostFn.quadratic(), -1.0)


class TestStepBudget:
    def test_formula_case(self):
        # total 10, schedule value 0.5 at step 5 of 10 (a=0, b=1), spent 2, cap 3
        state = make_state(10.0, 3.0, 0.0, 1.0, horizon=10, spent=2.0, step=5)
        assert step_budget(state, 0) == pytest.approx(3.0)

    def test_overspent_locks_down(self):
        state = make_state(10.0, 3.0, 0.0, 1.0, horizon=10, spent=9.0, step=5)
        assert step_budget(state, 0) == 0.0

    def test_infinite_total_gives_cap(self):
        state = make_state(math.inf, 3.0, 0.0, 1.0, horizon=10, spent=100.0, step=5)
        assert step_budget(state, 0) == 3.0

    def test_both_infinite(self):
        state = make_state(math.inf, math.inf, 0.0, 1.0, horizon=10, step=5)
        assert step_budget(state, 0) == math.inf

    def test_monotone_in_spent(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            s1, s2 = np.sort(rng.uniform(0, 10, size=2))
            b1 = step_budget(make_state(8.0, 5.0, 0.2, 0.8, 10, spent=s1, step=4), 0)
            b2 = step_budget(make_state(8.0, 5.0, 0.2, 0.8, 10, spent=s2, step=4), 0)
            assert b2 <= b1 + 1e-12

    def test_monotone_in_step(self):
        prev = -1.0
        for t in range(1, 11):
            b = step_budget(make_state(8.0, math.inf, 0.2, 0.8, 10, spent=1.0, step=t), 0)
            assert b >= prev - 1e-12
            prev = b

    def test_step_out_of_range(self):
        state = make_state(1.0, 1.0, 0.0, 1.0, horizon=5, step=6)
        with pytest.raises(ValueError, match="outside horizon"):
            step_budget(state, 0)


class TestRecordViolation:
    def test_zero_costs_keep_spent(self):
        state = make_state([1.0, 2.0], 1.0, 0.0, 1.0, horizon=5)
        new = record_violation(state, [0.0, 0.0])
        np.testing.assert_array_equal(new.spent, state.spent)
        assert new.step == state.step + 1

    def test_sequential_equals_batch(self):
        rng = np.random.default_rng(3)
        costs = rng.uniform(0, 1, size=(6, 2))
        state = make_state([5.0, 5.0], math.inf, 0.0, 1.0, horizon=10)
        for c in costs:
            state = record_violation(state, c)
        np.testing.assert_allclose(state.spent, costs.sum(axis=0), atol=1e-12)

    def test_negative_cost_rejected(self):
        state = make_state(1.0, 1.0, 0.0, 1.0, horizon=5)
        with pytest.raises(ValueError, match=">= 0"):
            record_violation(state, [-0.1])


class TestChanceThreshold:
    def test_quadratic_threshold(self):
        state = make_state(8.0, 4.0, 0.0, 1.0, horizon=2, step=1)
        # allowance = min(max(8*0.5 - 0, 0), 4) = 4 -> sqrt(4) = 2
        assert chance_threshold(ViolationCostFn.quadratic(), state, 0) == pytest.approx(2.0)

    def test_zero_budget_pure_feasibility(self):
        state = make_state(0.0, 4.0, 0.0, 1.0, horizon=2, step=1)
        assert chance_threshold(ViolationCostFn.quadratic(), state, 0) == 0.0

    def test_infinite_budget(self):
        state = make_state(math.inf, math.inf, 0.0, 1.0, horizon=2, step=1)
        assert chance_threshold(ViolationCostFn.quadratic(), state, 0) == math.inf


class TestScheduleValidation:
    def test_affine_schedule_accepted(self):
        make_state(1.0, 1.0, 0.3, 0.7, horizon=20)

    def test_coefficients_must_sum_to_one(self):
        with pytest.raises(ValueError, match="a \\+ b = 1"):
            make_state(1.0, 1.0, 0.5, 0.6, horizon=5)

    def test_negative_coefficients_rejected(self):
        with pytest.raises(ValueError):
            make_state(1.0, 1.0, -0.1, 1.1, horizon=5)

    def test_generic_hook(self):
        validate_schedule([0.1, 0.5, 1.0])
        with pytest.raises(ValueError, match="non-decreasing"):
            validate_schedule([0.5, 0.4, 1.0])
        with pytest.raises(ValueError, match="end at 1"):
            validate_schedule([0.1, 0.5, 0.9])


def test_conservation_skeleton():
    """If every realized step cost fits its allowance, total spend fits the budget."""
    rng = np.random.default_rng(4)
    for _ in range(300):
        T = int(rng.integers(1, 12))
        total = float(rng.uniform(0.5, 10.0))
        cap = float(rng.choice([math.inf, rng.uniform(0.1, 5.0)]))
        a = float(rng.uniform(0, 1))
        state = make_state(total, cap, a, 1.0 - a, horizon=T)
        for _ in range(T):
            allowance = step_budget(state, 0)
            state = record_violation(state, [rng.uniform(0.0, 1.0) * allowance])
        assert state.spent[0] <= total + 1e-9
