"""Synthetic contextual constrained plants and context sequence generators.

Each problem is a steady-state evaluator mapping (set-points, context) to an
objective value and constraint values, together with a box domain, an
initial safe set, violation cost functions, and fixed kernel
hyperparameters for the surrogate models. The functional forms are closed
form (sums of quadratics and smooth saturations) so every quantitative
claim about them can be checked against dense-grid oracles.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .budget import ViolationCostFn
from .gp import KernelSpec, kernel_matrix

__all__ = [
    "TuningProblem",
    "ContextSource",
    "PlantEvaluationError",
    "ContextExhaustedError",
    "next_context",
    "load_context_trace",
    "vcs_surrogate",
    "trap_benchmark",
    "gp_prior_sample",
    "make_problem",
    "PROBLEM_NAMES",
]


class PlantEvaluationError(RuntimeError):
    """A plant evaluation failed; the optimization step cannot complete.

    ``partial`` carries what was decided before the failure (step index,
    proposed set-point, context, proposal diagnostics) for post-mortems.
    """

    def __init__(self, message: str, partial: dict | None = None):
        super().__init__(message)
        self.partial = partial or {}


class ContextExhaustedError(RuntimeError):
    """A trace-driven context source ran out of rows."""


@dataclass(frozen=True, eq=False)
class TuningProblem:
    """A closed-loop tuning task behind a steady-state plant interface.

    ``evaluate`` maps a single (theta, z) to (objective, constraint values)
    and is deterministic given the problem instance. ``batch_evaluate`` is
    the vectorized form used by grid oracles. ``known_optimum`` maps a
    reference context (as a tuple) to the feasible grid-oracle minimum
    (value, argmin theta); it exists for benchmarking only.
    """

    name: str
    n_theta: int
    n_z: int
    theta_box: np.ndarray
    context_box: np.ndarray
    evaluate: Callable
    batch_evaluate: Callable
    initial_safe_set: tuple
    cost_fns: tuple
    objective_kernel: KernelSpec
    constraint_kernels: tuple
    known_optimum: dict | None = None

    @property
    def n_constraints(self) -> int:
        return len(self.cost_fns)


@dataclass(frozen=True, eq=False)
class ContextSource:
    """Produces the context vector observed at each step.

    kind 'recurring' cycles through a base list with additive Gaussian
    noise, 'trace' replays CSV rows one per step, and 'constant' repeats a
    fixed vector. Outputs are clamped to ``clamp_box`` when provided.
    """

    kind: str
    base: np.ndarray | None = None
    noise_std: np.ndarray | None = None
    trace: np.ndarray | None = None
    trace_path: str | None = None
    constant: np.ndarray | None = None
    clamp_box: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("recurring", "trace", "constant"):
            raise ValueError(f"unknown context source kind {self.kind!r}")
        if self.kind == "recurring":
            base = np.atleast_2d(np.asarray(self.base, dtype=float))
            if base.shape[0] == 0:
                raise ValueError("recurring context source needs a non-empty base list")
            noise = np.zeros(base.shape[1]) if self.noise_std is None \
                else np.broadcast_to(np.asarray(self.noise_std, dtype=float), (base.shape[1],)).copy()
            if np.any(noise < 0):
                raise ValueError("context noise_std must be >= 0")
            object.__setattr__(self, "base", base)
            object.__setattr__(self, "noise_std", noise)
        elif self.kind == "trace":
            if self.trace is None:
                raise ValueError("trace context source needs loaded trace rows")
            object.__setattr__(self, "trace", np.atleast_2d(np.asarray(self.trace, dtype=float)))
        else:
            object.__setattr__(self, "constant", np.asarray(self.constant, dtype=float).ravel())
        if self.clamp_box is not None:
            object.__setattr__(self, "clamp_box", np.asarray(self.clamp_box, dtype=float))

    @property
    def period(self) -> int | None:
        return None if self.base is None else self.base.shape[0]


def next_context(source: ContextSource, t: int, rng: np.random.Generator) -> np.ndarray:
    """Context vector for 1-based step ``t``."""
    if source.kind == "recurring":
        z = source.base[(t - 1) % source.period].copy()
        if np.any(source.noise_std > 0):
            z = z + rng.normal(0.0, source.noise_std)
    elif source.kind == "trace":
        if t > source.trace.shape[0]:
            raise ContextExhaustedError(
                f"context trace has {source.trace.shape[0]} rows but step {t} was "
                "requested; provide a longer trace or reduce the horizon"
            )
        z = source.trace[t - 1].copy()
    else:
        z = source.constant.copy()
    if source.clamp_box is not None:
        z = np.clip(z, source.clamp_box[:, 0], source.clamp_box[:, 1])
    return z


def load_context_trace(path, columns=("temp", "humidity")) -> np.ndarray:
    """Read a context trace CSV with a header row and a ``time`` column.

    Rows must be monotone in time; one row is consumed per step with no
    interpolation.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "time" not in reader.fieldnames:
            raise ValueError(f"{path}: context trace needs a header with a 'time' column")
        missing = [c for c in columns if c not in reader.fieldnames]
        if missing:
            raise ValueError(f"{path}: context trace is missing columns {missing}")
        times, rows = [], []
        for row in reader:
            times.append(float(row["time"]))
            rows.append([float(row[c]) for c in columns])
    if not rows:
        raise ValueError(f"{path}: context trace has no data rows")
    if np.any(np.diff(times) < 0):
        raise ValueError(f"{path}: context trace rows must be monotone in time")
    return np.asarray(rows, dtype=float)


def _scalar_wrap(batch_fn, noise_std: float = 0.0, noise_seed: int = 0):
    """Single-point evaluator; optional noise is a pure function of (theta, z).

    Noise is drawn from a generator keyed on the inputs and the problem's
    noise seed, so repeated evaluation of the same point returns identical
    values (steady-state reads are repeatable).
    """
    def evaluate(theta, z):
        theta = np.asarray(theta, dtype=float)
        z = np.asarray(z, dtype=float)
        obj, g = batch_fn(theta[None, :], z)
        obj, g = float(obj[0]), g[0].copy()
        if noise_std > 0.0:
            key = hash((noise_seed,) + tuple(theta.tolist()) + tuple(z.tolist()))
            rng = np.random.default_rng(key & 0xFFFFFFFF)
            obj += noise_std * rng.standard_normal()
            g = g + noise_std * rng.standard_normal(g.shape)
        return obj, g
    return evaluate


def _grid_points(box: np.ndarray, resolution: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, resolution) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _oracle_optimum(batch_fn, theta_box, z, resolution):
    grid = _grid_points(np.asarray(theta_box, dtype=float), resolution)
    obj, g = batch_fn(grid, np.asarray(z, dtype=float))
    feasible = np.all(g <= 0.0, axis=1)
    if not np.any(feasible):
        raise ValueError(f"no feasible grid point at context {z}")
    idx = np.flatnonzero(feasible)
    j = idx[np.argmin(obj[idx])]
    return float(obj[j]), tuple(float(v) for v in grid[j])


def grid_oracle_optimum(problem: TuningProblem, z, resolution: int = 41):
    """Feasible minimum of the true plant on a dense theta grid at context z."""
    return _oracle_optimum(problem.batch_evaluate, problem.theta_box, z, resolution)


# --- vapor-compression surrogate -------------------------------------------

VCS_THETA_BOX = np.array([[200.0, 350.0], [300.0, 450.0], [500.0, 850.0]])
VCS_CONTEXT_BOX = np.array([[295.0, 305.0], [0.3, 0.9]])
VCS_INITIAL_THETA = np.array([340.0, 440.0, 840.0])
VCS_DISCHARGE_LIMIT = 333.0
VCS_RECURRING_BASE = np.array([[298.0, 0.45], [300.0, 0.55], [302.0, 0.70]])
VCS_RECURRING_NOISE = np.array([0.3, 0.015])


def _vcs_batch(thetas: np.ndarray, z: np.ndarray):
    thetas = np.atleast_2d(thetas)
    lo, hi = VCS_THETA_BOX[:, 0], VCS_THETA_BOX[:, 1]
    u = (thetas - lo) / (hi - lo)
    dt = z[0] - 300.0
    dh = z[1] - 0.6
    m1 = 0.45 + 0.02 * dt + 0.30 * dh
    m2 = 0.50 + 0.015 * dt - 0.25 * dh
    m3 = 0.50 - 0.02 * dt + 0.20 * dh
    d1, d2, d3 = u[:, 0] - m1, u[:, 1] - m2, u[:, 2] - m3
    power = (
        30.0
        + 11.0 * d1 ** 2 + 9.0 * d2 ** 2 + 13.0 * d3 ** 2
        + 4.0 * np.tanh(1.5 * d1) * np.tanh(1.5 * d3)
        + 0.8 * dt + 6.0 * dh
    )
    discharge = (
        326.0
        + 8.0 * (1.0 - u[:, 0]) ** 2 + 4.0 * (1.0 - u[:, 2]) ** 2
        - 1.5 * u[:, 1]
        + 1.0 * dt + 6.0 * dh
    )
    g = (discharge - VCS_DISCHARGE_LIMIT)[:, None]
    return power, g


def vcs_surrogate(noise_std: float = 0.0) -> TuningProblem:
    """Smooth stand-in for a vapor-compression system set-point problem.

    Three set-points (expansion valve counts, indoor fan rpm, outdoor fan
    rpm), two contexts (ambient temperature in K, ambient humidity as a
    fraction). The "power" objective has a unique context-dependent
    interior minimum and the "discharge temperature" constraint tightens in
    the compressor-stress direction (valve closed, outdoor fan slow, hot
    humid ambient). The initial set-point is feasible for every context in
    the declared box.
    """
    evaluate = _scalar_wrap(_vcs_batch, noise_std=noise_std)
    nominal_context = np.array([300.0, 0.55])
    problem = TuningProblem(
        name="vcs-surrogate",
        n_theta=3,
        n_z=2,
        theta_box=VCS_THETA_BOX.copy(),
        context_box=VCS_CONTEXT_BOX.copy(),
        evaluate=evaluate,
        batch_evaluate=_vcs_batch,
        initial_safe_set=((VCS_INITIAL_THETA.copy(), nominal_context),),
        cost_fns=(ViolationCostFn.quadratic(),),
        objective_kernel=KernelSpec(15.0, [50.0, 60.0, 70.0, 1.0, 0.06]),
        constraint_kernels=(KernelSpec(2.0, [20.0, 24.0, 28.0, 1.0, 0.06]),),
        known_optimum={
            tuple(float(v) for v in z): _oracle_optimum(_vcs_batch, VCS_THETA_BOX, z, 41)
            for z in VCS_RECURRING_BASE
        },
    )
    return problem


# --- two-island trap benchmark -----------------------------------------------

TRAP_THETA_BOX = np.array([[0.0, 1.0], [0.0, 1.0]])
TRAP_CONTEXT_BOX = np.array([[-1.0, 1.0]])
TRAP_LOCAL_CENTER = np.array([0.20, 0.30])
TRAP_GLOBAL_CENTER = np.array([0.72, 0.68])
TRAP_RECURRING_BASE = np.array([[-0.5], [0.0], [0.5]])
TRAP_RECURRING_NOISE = np.array([0.1])


def _trap_batch(thetas: np.ndarray, z: np.ndarray):
    thetas = np.atleast_2d(thetas)
    zv = float(z[0])
    r_loc = np.sum((thetas - TRAP_LOCAL_CENTER) ** 2, axis=1)
    r_glb = np.sum((thetas - TRAP_GLOBAL_CENTER) ** 2, axis=1)
    obj = (
        3.0
        - 1.0 * np.exp(-r_loc / (2.0 * 0.18 ** 2))
        - 2.0 * np.exp(-r_glb / (2.0 * 0.15 ** 2))
        + 0.15 * zv * (thetas[:, 0] - 0.5)
    )
    island = 2.0 * 0.22 ** 2
    g = (
        2.5
        - 3.0 * np.exp(-r_loc / island)
        - 3.0 * np.exp(-r_glb / island)
        + 0.3 * zv
    )[:, None]
    return obj, g


def trap_benchmark(noise_std: float = 0.0) -> TuningProblem:
    """Two feasible islands in an infeasible sea, joined by a shallow strait.

    The initial safe point sits at the local minimum on one island; the
    strictly better global minimum sits on the other. Every feasible grid
    path between them is blocked, but the strait between the islands stays
    shallow (violation magnitude below ~0.75) while the open sea gets deep
    fast, so a blind jump is expensive and a careful crossing is cheap.
    Warm contexts (z > 0) shrink the islands and deepen the sea.
    """
    evaluate = _scalar_wrap(_trap_batch, noise_std=noise_std)
    problem = TuningProblem(
        name="trap-2d",
        n_theta=2,
        n_z=1,
        theta_box=TRAP_THETA_BOX.copy(),
        context_box=TRAP_CONTEXT_BOX.copy(),
        evaluate=evaluate,
        batch_evaluate=_trap_batch,
        initial_safe_set=((TRAP_LOCAL_CENTER.copy(), np.array([0.0])),),
        cost_fns=(ViolationCostFn.quadratic(),),
        objective_kernel=KernelSpec(1.0, [0.25, 0.25, 2.0]),
        constraint_kernels=(KernelSpec(1.0, [0.25, 0.25, 2.0]),),
        known_optimum={
            tuple(float(v) for v in z): _oracle_optimum(_trap_batch, TRAP_THETA_BOX, z, 201)
            for z in TRAP_RECURRING_BASE
        },
    )
    return problem


# --- plant drawn from the surrogate model's own prior -----------------------

GP_SAMPLE_THETA_BOX = np.array([[0.0, 1.0]])
GP_SAMPLE_CONTEXT_BOX = np.array([[-1.0, 1.0]])
GP_SAMPLE_SAFE_POINT = (np.array([0.5]), np.array([0.0]))
GP_SAMPLE_RECURRING_BASE = np.array([[-0.5], [0.0], [0.5]])
GP_SAMPLE_RECURRING_NOISE = np.array([0.15])
_GP_SAMPLE_NUGGET = 1e-8


def _draw_interpolant(spec: KernelSpec, knots: np.ndarray, values: np.ndarray):
    K = kernel_matrix(spec, knots, knots) + _GP_SAMPLE_NUGGET * spec.variance * np.eye(len(knots))
    alpha = np.linalg.solve(K, values)

    def f(X: np.ndarray) -> np.ndarray:
        return kernel_matrix(spec, np.atleast_2d(X), knots) @ alpha

    return f


def gp_prior_sample(rng: np.random.Generator | int | None = 0) -> TuningProblem:
    """Plant whose objective and constraint are drawn from the model prior.

    The constraint draw is conditioned on the safe point having value -1,
    so the initial safe set is feasible by construction and the surrogate
    models are well specified from the first observation onward. Used to
    check the budget guarantee empirically.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    obj_spec = KernelSpec(4.0, [0.25, 0.5])
    con_spec = KernelSpec(2.0, [0.25, 0.5])

    t_knots = np.linspace(0.0, 1.0, 12)
    z_knots = np.linspace(-1.0, 1.0, 9)
    grid = np.stack([m.ravel() for m in np.meshgrid(t_knots, z_knots, indexing="ij")], axis=1)
    safe = np.concatenate(GP_SAMPLE_SAFE_POINT)[None, :]
    knots = np.vstack([safe, grid])

    # objective: unconditioned prior draw at the knots
    K_obj = kernel_matrix(obj_spec, knots, knots) + _GP_SAMPLE_NUGGET * obj_spec.variance * np.eye(len(knots))
    y_obj = np.linalg.cholesky(K_obj) @ rng.standard_normal(len(knots))
    obj_fn = _draw_interpolant(obj_spec, knots, y_obj)

    # constraint: prior draw conditioned on g(safe point) = -1
    pinned = -1.0
    K_con = kernel_matrix(con_spec, knots, knots)
    k_rp = K_con[1:, 0]
    k_pp = K_con[0, 0]
    mean_rest = k_rp * (pinned / k_pp)
    cov_rest = K_con[1:, 1:] - np.outer(k_rp, k_rp) / k_pp
    cov_rest += _GP_SAMPLE_NUGGET * con_spec.variance * np.eye(len(knots) - 1)
    y_rest = mean_rest + np.linalg.cholesky(cov_rest) @ rng.standard_normal(len(knots) - 1)
    y_con = np.concatenate([[pinned], y_rest])
    con_fn = _draw_interpolant(con_spec, knots, y_con)

    def batch(thetas: np.ndarray, z: np.ndarray):
        thetas = np.atleast_2d(thetas)
        X = np.hstack([thetas, np.tile(np.asarray(z, dtype=float), (thetas.shape[0], 1))])
        return obj_fn(X), con_fn(X)[:, None]

    return TuningProblem(
        name="gp-prior-sample",
        n_theta=1,
        n_z=1,
        theta_box=GP_SAMPLE_THETA_BOX.copy(),
        context_box=GP_SAMPLE_CONTEXT_BOX.copy(),
        evaluate=_scalar_wrap(batch),
        batch_evaluate=batch,
        initial_safe_set=((GP_SAMPLE_SAFE_POINT[0].copy(), GP_SAMPLE_SAFE_POINT[1].copy()),),
        cost_fns=(ViolationCostFn.quadratic(),),
        objective_kernel=obj_spec,
        constraint_kernels=(con_spec,),
    )


_REGISTRY = {
    "vcs-surrogate": lambda rng: vcs_surrogate(),
    "trap-2d": lambda rng: trap_benchmark(),
    "gp-prior-sample": gp_prior_sample,
}

PROBLEM_NAMES = tuple(sorted(_REGISTRY))


def make_problem(name: str, rng: np.random.Generator | int | None = 0) -> TuningProblem:
    """Instantiate a registered problem; ``rng`` seeds stochastic plants."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; registered: {PROBLEM_NAMES}") from None
    return factory(rng)
