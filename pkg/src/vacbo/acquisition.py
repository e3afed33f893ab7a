"""Acquisition machinery: proxy incumbent, expected improvement, CPEI.

The incumbent is not the best observed objective (which can be misleading
when it was observed under a favorable context) but the minimum posterior
objective mean over the candidate grid at the *current* context. CPEI is
that proxy expected improvement times the probability that every
constraint is satisfied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .gp import GPModel

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Beyond +/- 8 standard deviations the normal CDF is clamped to {0, 1};
# the truncation error (< 1e-15) is far below every tolerance used here.
_CDF_CLIP = 8.0


def normal_cdf(x: float) -> float:
    if x < -_CDF_CLIP:
        return 0.0
    if x > _CDF_CLIP:
        return 1.0
    return 0.5 * (1.0 + math.erf(x / _SQRT2))


def normal_pdf(x: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


def normal_cdf_array(x: np.ndarray) -> np.ndarray:
    out = 0.5 * (1.0 + erf(np.asarray(x, dtype=float) / _SQRT2))
    return np.where(x < -_CDF_CLIP, 0.0, np.where(x > _CDF_CLIP, 1.0, out))


def normal_pdf_array(x: np.ndarray) -> np.ndarray:
    return _INV_SQRT_2PI * np.exp(-0.5 * np.square(x))


def augment_input(theta, context) -> np.ndarray:
    """Concatenate control parameters with the context into one GP input."""
    return np.concatenate(
        [np.asarray(theta, dtype=float).ravel(), np.asarray(context, dtype=float).ravel()]
    )


def augment_grid(grid: np.ndarray, context) -> np.ndarray:
    """Augment every grid row with the same context vector."""
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    context = np.asarray(context, dtype=float).ravel()
    return np.hstack([grid, np.tile(context, (grid.shape[0], 1))])


@dataclass(frozen=True, eq=False)
class ProxyIncumbent:
    """Minimum posterior objective mean over the grid at one context."""

    value: float
    argmin_theta: np.ndarray


@dataclass(frozen=True, eq=False)
class AcquisitionQuery:
    """One candidate (theta, context) together with the current models."""

    theta: np.ndarray
    context: np.ndarray
    objective_model: GPModel
    constraint_models: tuple


def proxy_min(objective_model: GPModel, context, grid) -> ProxyIncumbent:
    """Grid point minimizing the posterior objective mean at this context.

    Ties break to the lowest grid index so runs are reproducible.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[0] == 0:
        raise ValueError("candidate grid is empty")
    means, _ = objective_model.posterior_grid(augment_grid(grid, context))
    j = int(np.argmin(means))
    return ProxyIncumbent(value=float(means[j]), argmin_theta=grid[j].copy())


def expected_improvement(mean: float, std: float, incumbent: float) -> float:
    """Closed-form E[max(0, incumbent - Y)] for Y ~ Normal(mean, std**2).

    At std = 0 this is the deterministic improvement max(0, incumbent - mean).
    """
    if std < 0:
        raise ValueError(f"std must be >= 0, got {std}")
    gap = incumbent - mean
    if std == 0.0:
        return max(0.0, gap)
    w = gap / std
    return max(0.0, gap * normal_cdf(w) + std * normal_pdf(w))


def expected_improvement_array(
    means: np.ndarray, stds: np.ndarray, incumbent: float
) -> np.ndarray:
    """Vectorized expected improvement over a grid of posteriors."""
    gap = incumbent - np.asarray(means, dtype=float)
    stds = np.asarray(stds, dtype=float)
    safe = np.where(stds > 0.0, stds, 1.0)
    w = gap / safe
    ei = gap * normal_cdf_array(w) + stds * normal_pdf_array(w)
    ei = np.where(stds > 0.0, ei, np.maximum(0.0, gap))
    return np.maximum(0.0, ei)


def prob_below(mean: float, std: float, threshold: float) -> float:
    """P(Normal(mean, std**2) <= threshold), degenerate std handled."""
    if math.isinf(threshold) and threshold > 0:
        return 1.0
    if std == 0.0:
        return 1.0 if mean <= threshold else 0.0
    return normal_cdf((threshold - mean) / std)


def prob_below_array(
    means: np.ndarray, stds: np.ndarray, threshold: float
) -> np.ndarray:
    if math.isinf(threshold) and threshold > 0:
        return np.ones_like(np.asarray(means, dtype=float))
    means = np.asarray(means, dtype=float)
    stds = np.asarray(stds, dtype=float)
    safe = np.where(stds > 0.0, stds, 1.0)
    p = normal_cdf_array((threshold - means) / safe)
    return np.where(stds > 0.0, p, (means <= threshold).astype(float))


def feasibility_prob(constraint_model, x, threshold: float = 0.0) -> float:
    """Posterior probability that the constraint value at x is <= threshold."""
    mean, std = constraint_model.posterior(x)
    return prob_below(mean, std, threshold)


def cpei(query: AcquisitionQuery, incumbent: ProxyIncumbent) -> float:
    """Constrained proxy expected improvement at one candidate.

    Product of the per-constraint feasibility probabilities at threshold 0
    and the expected improvement over the proxy incumbent.
    """
    x = augment_input(query.theta, query.context)
    mean, std = query.objective_model.posterior(x)
    value = expected_improvement(mean, std, incumbent.value)
    for model in query.constraint_models:
        value *= feasibility_prob(model, x, 0.0)
    return value
