"""Exact Gaussian process regression with an ARD-RBF kernel.

Hyperparameters are fixed inputs: there is no marginal-likelihood fitting
here, only posterior conditioning on observed data. Models are immutable;
``add`` returns a new model, so posterior queries against one snapshot are
safe from multiple threads.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.spatial.distance import cdist

logger = logging.getLogger(__name__)

# Jitter escalation for a non-PD Gram matrix, relative to the kernel variance.
_JITTER_START = 1e-10
_JITTER_MAX = 1e-4

# Predictive variances in [-_NEG_VAR_TOL * variance, 0) clamp to zero; anything
# more negative is treated as a numerical failure rather than silently fixed.
_NEG_VAR_TOL = 1e-8


class GPNumericsError(RuntimeError):
    """Raised when Gram factorization or a posterior query breaks down."""


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """ARD-RBF kernel: variance * exp(-0.5 * sum(((a-b)/lengthscales)**2)).

    ``noise_variance`` defaults to 1e-6 * variance, a near-noiseless nugget
    that keeps the Gram matrix well conditioned for deterministic plants.
    """

    variance: float
    lengthscales: np.ndarray
    noise_variance: float | None = None

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "variance", float(self.variance))
        if not self.variance > 0:
            raise ValueError(f"kernel variance must be > 0, got {self.variance}")
        if ls.ndim != 1 or not np.all(ls > 0):
            raise ValueError("lengthscales must be a 1-D vector of positive reals")
        noise = self.noise_variance
        if noise is None:
            noise = 1e-6 * self.variance
        noise = float(noise)
        if noise < 0:
            raise ValueError(f"noise_variance must be >= 0, got {noise}")
        object.__setattr__(self, "noise_variance", noise)

    @property
    def dim(self) -> int:
        return self.lengthscales.shape[0]


def kernel_eval(spec: KernelSpec, a, b) -> float:
    """Kernel value between two single inputs."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != (spec.dim,) or b.shape != (spec.dim,):
        raise ValueError(
            f"input dimension mismatch: kernel expects {spec.dim}, "
            f"got {a.shape[0]} and {b.shape[0]}"
        )
    r = (a - b) / spec.lengthscales
    return spec.variance * float(np.exp(-0.5 * np.dot(r, r)))


def kernel_matrix(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Cross-covariance matrix between two stacks of inputs (rows)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != spec.dim or B.shape[1] != spec.dim:
        raise ValueError(
            f"input dimension mismatch: kernel expects {spec.dim} columns, "
            f"got {A.shape[1]} and {B.shape[1]}"
        )
    sq = cdist(A / spec.lengthscales, B / spec.lengthscales, "sqeuclidean")
    return spec.variance * np.exp(-0.5 * sq)


def _factorize(spec: KernelSpec, K: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of K + noise*I, escalating jitter if needed."""
    n = K.shape[0]
    base = K + spec.noise_variance * np.eye(n)
    jitter = 0.0
    while True:
        try:
            return np.linalg.cholesky(base + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            pass
        if jitter == 0.0:
            jitter = _JITTER_START * spec.variance
        else:
            jitter *= 10.0
        if jitter > _JITTER_MAX * spec.variance:
            raise GPNumericsError(
                "Gram matrix not positive definite after jitter escalation; "
                "training inputs are likely duplicated or degenerate"
            )
        logger.debug("gram factorization retry with jitter %.3e", jitter)


@dataclass(frozen=True, eq=False)
class GPModel:
    """A fitted GP: kernel, constant prior mean, data, and cached factors.

    ``gram_factor`` is the lower Cholesky factor of K + noise*I and ``alpha``
    solves that system against (targets - prior_mean).
    """

    kernel: KernelSpec
    prior_mean: float
    inputs: np.ndarray
    targets: np.ndarray
    gram_factor: np.ndarray
    alpha: np.ndarray

    @property
    def n_obs(self) -> int:
        return self.inputs.shape[0]

    def posterior(self, x) -> tuple[float, float]:
        """Posterior (mean, std) at a single query point."""
        x = np.asarray(x, dtype=float).ravel()
        mean, std = self.posterior_grid(x[None, :])
        return float(mean[0]), float(std[0])

    def posterior_grid(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior means and stds at a stack of query points (rows)."""
        k_star = kernel_matrix(self.kernel, X, self.inputs)
        mean = k_star @ self.alpha + self.prior_mean
        v = solve_triangular(self.gram_factor, k_star.T, lower=True)
        var = self.kernel.variance - np.sum(v * v, axis=0)
        floor = -_NEG_VAR_TOL * self.kernel.variance
        if np.any(var < floor):
            raise GPNumericsError(
                f"posterior variance {var.min():.3e} below clamp tolerance "
                f"{floor:.3e}; Gram factorization is unreliable"
            )
        if np.any(var < 0.0):
            logger.debug(
                "clamping %d slightly negative posterior variances (min %.3e)",
                int(np.sum(var < 0.0)), float(var.min()),
            )
            var = np.maximum(var, 0.0)
        return mean, np.sqrt(var)

    def add(self, x, y: float) -> "GPModel":
        """Return a new model conditioned on one more observation.

        Uses a rank-1 extension of the Cholesky factor; falls back to a full
        refit (with jitter policy) when the extension is not positive.
        """
        x = np.asarray(x, dtype=float).ravel()
        if x.shape != (self.kernel.dim,):
            raise ValueError(
                f"input dimension mismatch: expected {self.kernel.dim}, got {x.shape[0]}"
            )
        inputs = np.vstack([self.inputs, x[None, :]])
        targets = np.append(self.targets, float(y))
        k_vec = kernel_matrix(self.kernel, x[None, :], self.inputs)[0]
        l12 = solve_triangular(self.gram_factor, k_vec, lower=True)
        s = self.kernel.variance + self.kernel.noise_variance - float(l12 @ l12)
        if s <= 0.0:
            return fit_arrays(self.kernel, self.prior_mean, inputs, targets)
        n = self.n_obs
        L = np.zeros((n + 1, n + 1))
        L[:n, :n] = self.gram_factor
        L[n, :n] = l12
        L[n, n] = np.sqrt(s)
        alpha = cho_solve((L, True), targets - self.prior_mean)
        return GPModel(self.kernel, self.prior_mean, inputs, targets, L, alpha)


def fit_arrays(
    spec: KernelSpec, prior_mean: float, inputs: np.ndarray, targets: np.ndarray
) -> GPModel:
    """Fit from pre-stacked arrays of inputs (rows) and targets."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    targets = np.asarray(targets, dtype=float).ravel()
    if inputs.shape[0] == 0:
        raise ValueError("cannot fit a GP on empty data")
    if inputs.shape[0] != targets.shape[0]:
        raise ValueError("inputs and targets must have equal length")
    if inputs.shape[1] != spec.dim:
        raise ValueError(
            f"input dimension mismatch: kernel expects {spec.dim}, got {inputs.shape[1]}"
        )
    K = kernel_matrix(spec, inputs, inputs)
    L = _factorize(spec, K)
    alpha = cho_solve((L, True), targets - float(prior_mean))
    return GPModel(spec, float(prior_mean), inputs, targets, L, alpha)


def fit(spec: KernelSpec, prior_mean: float, data) -> GPModel:
    """Fit a GP on a sequence of (input, target) pairs."""
    data = list(data)
    if not data:
        raise ValueError("cannot fit a GP on empty data")
    inputs = np.stack([np.asarray(x, dtype=float).ravel() for x, _ in data])
    targets = np.array([float(y) for _, y in data])
    return fit_arrays(spec, prior_mean, inputs, targets)


def posterior(model: GPModel, x) -> tuple[float, float]:
    """Posterior (mean, std) of ``model`` at ``x``."""
    return model.posterior(x)


def add_observation(model: GPModel, x, y: float) -> GPModel:
    """New model equivalent to refitting on the augmented dataset."""
    return model.add(x, y)
