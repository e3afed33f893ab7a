"""Run configuration files, output artifacts, sweeps, and comparisons.

Configs are flat JSON documents. A run writes ``trace.csv`` (one row per
step) and ``summary.json`` (config echo plus summary metrics; enough to
replay the run exactly). A sweep writes ``sweep.json`` with per-seed
summaries and the empirical budget-coverage fraction. A comparison aligns
several configs on the same problem, horizon, and context stream and
writes ``compare.csv`` plus a small summary table.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .optimizer import MODES, OptimizerConfig, RunResult, run, split_rng_streams
from .problems import (
    ContextSource,
    PROBLEM_NAMES,
    TuningProblem,
    load_context_trace,
    make_problem,
)

ENV_SEED = "VACBO_SEED"
ENV_OUT_DIR = "VACBO_OUT_DIR"


class ConfigError(Exception):
    """Invalid run configuration; maps to exit code 2 in the CLI."""


@dataclass(frozen=True)
class RunConfig:
    """Validated contents of a run configuration file."""

    problem: str
    horizon: int
    mode: str = "vacbo"
    total_budget: tuple | float = math.inf
    per_step_cap: tuple | float = math.inf
    schedule_a: tuple | float = 0.0
    schedule_b: tuple | float = 1.0
    epsilon: float = 0.01
    grid_resolution: int = 25
    seed: int = 0
    multistart_refine: bool = False
    context: dict | None = None
    out_dir: str = "runs"
    base_dir: str = "."


def _parse_number(value, key):
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity"):
            return math.inf
        raise ConfigError(f"config key {key!r}: expected a number, got {value!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"config key {key!r}: expected a number, got {value!r}")
    return float(value)


def _parse_budget(value, key):
    if isinstance(value, list):
        return tuple(_parse_number(v, key) for v in value)
    return _parse_number(value, key)


def load_config(path) -> RunConfig:
    """Load and validate a config file, with line-level JSON diagnostics."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")

    known = {
        "problem", "mode", "T", "budget", "budget_max", "schedule",
        "epsilon", "grid_resolution", "seed", "multistart_refine",
        "context", "out_dir",
    }
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {unknown}")
    for key in ("problem", "T", "context"):
        if key not in raw:
            raise ConfigError(f"{path}: missing required config key {key!r}")

    problem = raw["problem"]
    if problem not in PROBLEM_NAMES:
        raise ConfigError(
            f"{path}: unknown problem {problem!r}; registered: {list(PROBLEM_NAMES)}"
        )
    horizon = raw["T"]
    if not isinstance(horizon, int) or horizon < 1:
        raise ConfigError(f"{path}: T must be an integer >= 1, got {horizon!r}")
    mode = raw.get("mode", "vacbo")
    if mode not in MODES:
        raise ConfigError(f"{path}: unknown mode {mode!r}; use one of {MODES}")
    epsilon = _parse_number(raw.get("epsilon", 0.01), "epsilon")
    if not 0 < epsilon < 1:
        raise ConfigError(f"{path}: epsilon must be in (0, 1), got {epsilon}")

    budget = _parse_budget(raw.get("budget", math.inf), "budget")
    budget_max = _parse_budget(raw.get("budget_max", math.inf), "budget_max")
    for key, value in (("budget", budget), ("budget_max", budget_max)):
        values = value if isinstance(value, tuple) else (value,)
        if any(v < 0 for v in values):
            raise ConfigError(f"{path}: {key} entries must be >= 0")

    schedule = raw.get("schedule", {"a": 0.0, "b": 1.0})
    if not isinstance(schedule, dict) or set(schedule) - {"a", "b"}:
        raise ConfigError(f"{path}: schedule must be an object with keys 'a' and 'b'")
    schedule_a = _parse_budget(schedule.get("a", 0.0), "schedule.a")
    schedule_b = _parse_budget(schedule.get("b", 1.0), "schedule.b")

    grid_resolution = raw.get("grid_resolution", 25)
    if not isinstance(grid_resolution, int) or grid_resolution < 2:
        raise ConfigError(f"{path}: grid_resolution must be an integer >= 2")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError(f"{path}: seed must be an integer, got {seed!r}")
    context = raw["context"]
    if not isinstance(context, dict) or "kind" not in context:
        raise ConfigError(f"{path}: context must be an object with a 'kind' key")
    if context["kind"] == "trace":
        trace_path = path.parent / context.get("path", "")
        if not trace_path.is_file():
            raise ConfigError(f"{path}: context trace file not found: {trace_path}")

    return RunConfig(
        problem=problem,
        horizon=horizon,
        mode=mode,
        total_budget=budget,
        per_step_cap=budget_max,
        schedule_a=schedule_a,
        schedule_b=schedule_b,
        epsilon=epsilon,
        grid_resolution=grid_resolution,
        seed=seed,
        multistart_refine=bool(raw.get("multistart_refine", False)),
        context=context,
        out_dir=str(raw.get("out_dir", "runs")),
        base_dir=str(path.parent),
    )


def apply_overrides(cfg: RunConfig, seed=None, out=None, mode=None, budget=None) -> RunConfig:
    """Apply CLI/environment overrides; environment wins over the file only."""
    env_seed = os.environ.get(ENV_SEED)
    env_out = os.environ.get(ENV_OUT_DIR)
    if seed is None and env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"{ENV_SEED} must be an integer, got {env_seed!r}") from None
    if out is None and env_out is not None:
        out = env_out
    updates = {}
    if seed is not None:
        updates["seed"] = int(seed)
    if out is not None:
        updates["out_dir"] = str(out)
    if mode is not None:
        if mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}; use one of {MODES}")
        updates["mode"] = mode
    if budget is not None:
        updates["total_budget"] = _parse_budget(budget, "budget")
    return replace(cfg, **updates) if updates else cfg


def build_context_source(cfg: RunConfig, problem: TuningProblem) -> ContextSource:
    spec = cfg.context
    kind = spec["kind"]
    if kind == "recurring":
        if "base" not in spec:
            raise ConfigError("recurring context needs a 'base' list of vectors")
        return ContextSource(
            kind="recurring",
            base=spec["base"],
            noise_std=spec.get("noise_std"),
            clamp_box=problem.context_box,
        )
    if kind == "trace":
        if "path" not in spec:
            raise ConfigError("trace context needs a 'path' to a CSV file")
        trace_path = Path(cfg.base_dir) / spec["path"]
        columns = tuple(spec.get("columns", ("temp", "humidity")))
        try:
            rows = load_context_trace(trace_path, columns)
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if rows.shape[1] != problem.n_z:
            raise ConfigError(
                f"trace provides {rows.shape[1]} context columns, problem needs {problem.n_z}"
            )
        return ContextSource(
            kind="trace", trace=rows, trace_path=str(trace_path),
            clamp_box=problem.context_box,
        )
    if kind == "constant":
        if "value" not in spec:
            raise ConfigError("constant context needs a 'value' vector")
        return ContextSource(
            kind="constant", constant=spec["value"], clamp_box=problem.context_box
        )
    raise ConfigError(f"unknown context kind {kind!r}")


def optimizer_config(cfg: RunConfig) -> OptimizerConfig:
    return OptimizerConfig(
        horizon=cfg.horizon,
        total_budget=cfg.total_budget,
        per_step_cap=cfg.per_step_cap,
        schedule_a=cfg.schedule_a,
        schedule_b=cfg.schedule_b,
        epsilon=cfg.epsilon,
        grid_resolution=cfg.grid_resolution,
        mode=cfg.mode,
        rng_seed=cfg.seed,
        multistart_refine=cfg.multistart_refine,
    )


def execute_run(cfg: RunConfig) -> tuple[RunResult, TuningProblem]:
    """Build the problem and context source for ``cfg`` and run the loop."""
    streams = split_rng_streams(cfg.seed)
    problem = make_problem(cfg.problem, rng=streams["plant"])
    source = build_context_source(cfg, problem)
    result = run(problem, optimizer_config(cfg), source)
    return result, problem


def run_from_echo(echo: dict) -> RunResult:
    """Replay a run from the config echo stored in summary.json."""
    cfg = RunConfig(
        problem=echo["problem"],
        horizon=echo["horizon"],
        mode=echo["mode"],
        total_budget=tuple(echo["total_budget"]),
        per_step_cap=tuple(echo["per_step_cap"]),
        schedule_a=tuple(echo["schedule_a"]),
        schedule_b=tuple(echo["schedule_b"]),
        epsilon=echo["epsilon"],
        grid_resolution=echo["grid_resolution"],
        seed=echo["seed"],
        multistart_refine=echo["multistart_refine"],
        context=_context_spec_from_echo(echo["context_source"]),
    )
    result, _ = execute_run(cfg)
    return result


def _context_spec_from_echo(source: dict) -> dict:
    spec = {"kind": source["kind"]}
    if source["kind"] == "recurring":
        spec["base"] = source["base"]
        spec["noise_std"] = source["noise_std"]
    elif source["kind"] == "trace":
        spec["path"] = source["path"]
    else:
        spec["value"] = source["value"]
    return spec


# --- output files -----------------------------------------------------------

def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def trace_header(n_z: int, n_theta: int, n_constraints: int) -> list[str]:
    cols = ["t"]
    cols += [f"z{i}" for i in range(n_z)]
    cols += [f"theta{i}" for i in range(n_theta)]
    cols += ["objective"]
    cols += [f"g{i}" for i in range(n_constraints)]
    cols += [f"cost{i}" for i in range(n_constraints)]
    cols += [f"budget{i}" for i in range(n_constraints)]
    cols += ["fallback"]
    return cols


def write_trace_csv(path, result: RunResult, problem: TuningProblem) -> None:
    header = trace_header(problem.n_z, problem.n_theta, problem.n_constraints)
    lines = [",".join(header)]
    for r in result.records:
        row = [str(r.t)]
        row += [repr(v) for v in r.context]
        row += [repr(v) for v in r.theta]
        row += [repr(r.objective)]
        row += [repr(v) for v in r.constraints]
        row += [repr(v) for v in r.violation_costs]
        row += [repr(v) for v in r.step_budgets]
        row += [str(int(r.fallback_used))]
        lines.append(",".join(row))
    _atomic_write(Path(path), "\n".join(lines) + "\n")


def read_trace_csv(path) -> tuple[list[str], np.ndarray]:
    """Parse a trace file back into its header and a float matrix."""
    text = Path(path).read_text().strip().splitlines()
    header = text[0].split(",")
    rows = [[float(v) for v in line.split(",")] for line in text[1:]]
    return header, np.asarray(rows, dtype=float)


def write_summary_json(path, result: RunResult) -> None:
    payload = {
        "config": result.config,
        "summary": result.summary,
        "wall_clock_seconds": result.wall_clock,
    }
    _atomic_write(Path(path), json.dumps(payload, indent=2) + "\n")


def write_run_outputs(out_dir, result: RunResult, problem: TuningProblem) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "trace.csv"
    summary_path = out / "summary.json"
    write_trace_csv(trace_path, result, problem)
    write_summary_json(summary_path, result)
    return {"trace": trace_path, "summary": summary_path}


# --- sweeps ------------------------------------------------------------------

def coverage_event(result: RunResult) -> bool:
    """Did this run keep every constraint within cap and total budget?"""
    summary, echo = result.summary, result.config
    if not summary["metrics_defined"]:
        return True
    caps = echo["per_step_cap"]
    totals = echo["total_budget"]
    return all(
        ms <= cap and cum <= total
        for ms, cum, cap, total in zip(
            summary["max_step_cost"], summary["cumulative_cost"], caps, totals
        )
    )


def wilson_interval(successes: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def run_sweep(cfg: RunConfig, seeds) -> dict:
    """Run each seed and aggregate budget-coverage statistics."""
    seeds = list(seeds)
    if len(set(seeds)) != len(seeds):
        raise ConfigError("sweep seeds must be distinct (duplicates make the statistics ambiguous)")
    if not seeds:
        raise ConfigError("sweep needs at least one seed")
    started = time.perf_counter()
    entries = []
    hits = 0
    implied_delta = None
    for seed in seeds:
        result, _ = execute_run(replace(cfg, seed=int(seed)))
        event = coverage_event(result)
        hits += int(event)
        implied_delta = result.summary["implied_delta"]
        entries.append({"seed": int(seed), "coverage": event, "summary": result.summary})
    n = len(seeds)
    fraction = hits / n
    lo, hi = wilson_interval(hits, n)
    return {
        "config": {
            "problem": cfg.problem, "mode": cfg.mode, "T": cfg.horizon,
            "epsilon": cfg.epsilon, "seeds": [int(s) for s in seeds],
        },
        "runs": entries,
        "coverage_fraction": fraction,
        "coverage_target": 1.0 - implied_delta,
        "coverage_interval_95": [lo, hi],
        "interval_degenerate": n == 1,
        "wall_clock_seconds": time.perf_counter() - started,
    }


def write_sweep_json(path, sweep: dict) -> None:
    _atomic_write(Path(path), json.dumps(sweep, indent=2) + "\n")


def parse_seed_spec(spec: str) -> list[int]:
    """'8' means seeds 0..7; '3,5,9' is an explicit list."""
    spec = spec.strip()
    try:
        if "," in spec:
            return [int(s) for s in spec.split(",")]
        return list(range(int(spec)))
    except ValueError:
        raise ConfigError(f"cannot parse seed spec {spec!r}; use a count or a comma list") from None


# --- comparisons -------------------------------------------------------------

def run_compare(cfgs: list[RunConfig], labels: list[str]) -> dict:
    """Run aligned configs and collect per-step and summary comparisons."""
    first = cfgs[0]
    for cfg in cfgs[1:]:
        if cfg.problem != first.problem:
            raise ConfigError("compare configs must share the same problem")
        if cfg.horizon != first.horizon:
            raise ConfigError("compare configs must share the same horizon T")
        if cfg.context != first.context:
            raise ConfigError("compare configs must share the same context source")
        if cfg.seed != first.seed:
            raise ConfigError("compare configs must share the same seed for aligned contexts")
    results = []
    for cfg in cfgs:
        result, _ = execute_run(cfg)
        results.append(result)
    table = []
    for label, result in zip(labels, results):
        table.append({
            "label": label,
            "mode": result.config["mode"],
            "mean_objective": result.summary["mean_objective"],
            "max_violation": max(result.summary["max_violation"]),
            "cumulative_cost": result.summary["cumulative_cost"],
        })
    return {"labels": labels, "results": results, "table": table}


def write_compare_csv(path, comparison: dict) -> None:
    labels = comparison["labels"]
    results = comparison["results"]
    n_z = len(results[0].records[0].context) if results[0].records else 0
    header = ["t"] + [f"z{i}" for i in range(n_z)]
    for label in labels:
        header += [f"objective_{label}", f"violation_{label}"]
    lines = [",".join(header)]
    horizon = len(results[0].records)
    for k in range(horizon):
        base = results[0].records[k]
        row = [str(base.t)] + [repr(v) for v in base.context]
        for result in results:
            r = result.records[k]
            row.append(repr(r.objective))
            row.append(repr(max(0.0, max(r.constraints))))
        lines.append(",".join(row))
    _atomic_write(Path(path), "\n".join(lines) + "\n")


def write_compare_summary(path, comparison: dict) -> None:
    _atomic_write(Path(path), json.dumps({"modes": comparison["table"]}, indent=2) + "\n")


def unique_labels(paths) -> list[str]:
    labels, seen = [], {}
    for p in paths:
        stem = Path(p).stem
        seen[stem] = seen.get(stem, 0) + 1
        labels.append(stem if seen[stem] == 1 else f"{stem}_{seen[stem]}")
    return labels
