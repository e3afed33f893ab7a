"""Figure rendering for run, sweep, and comparison outputs.

Figures are written next to the delimited output files and are entirely
derived from them; nothing here feeds back into the optimization.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .optimizer import RunResult


def render_run_figures(result: RunResult, out_dir) -> list[Path]:
    """Objective/constraint trajectories and the budget ledger for one run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = result.records
    if not records:
        return []
    t = np.array([r.t for r in records])
    objective = np.array([r.objective for r in records])
    G = np.array([r.constraints for r in records])
    C = np.array([r.violation_costs for r in records])
    budgets = np.array([r.step_budgets for r in records])
    n_constraints = G.shape[1]

    fig, axes = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    axes[0].plot(t, objective, "o-", ms=3, label="objective")
    axes[0].plot(t, np.minimum.accumulate(objective), "--", label="best so far")
    axes[0].set_ylabel("objective")
    axes[0].legend(loc="best", fontsize=8)
    axes[0].grid(alpha=0.3)
    for i in range(n_constraints):
        axes[1].plot(t, G[:, i], "o-", ms=3, label=f"g{i}")
    axes[1].axhline(0.0, color="k", lw=0.8)
    axes[1].set_xlabel("step")
    axes[1].set_ylabel("constraint value")
    axes[1].legend(loc="best", fontsize=8)
    axes[1].grid(alpha=0.3)
    fig.suptitle(f"{result.config['problem']} — {result.config['mode']}")
    fig.tight_layout()
    trace_fig = out / "run_trace.png"
    fig.savefig(trace_fig, dpi=150)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(7, 4))
    for i in range(n_constraints):
        ax.plot(t, np.cumsum(C[:, i]), "o-", ms=3, label=f"spent cost {i}")
        ax.plot(t, budgets[:, i], ":", label=f"step allowance {i}")
        total = result.config["total_budget"][i]
        if np.isfinite(total):
            ax.axhline(total, color="k", lw=0.8, ls="--")
    ax.set_xlabel("step")
    ax.set_ylabel("violation cost")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    budget_fig = out / "run_budget.png"
    fig.savefig(budget_fig, dpi=150)
    plt.close(fig)
    return [trace_fig, budget_fig]


def render_sweep_figures(sweep: dict, out_dir) -> list[Path]:
    """Histogram of per-seed cumulative violation cost with the target line."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    costs = [
        entry["summary"]["cumulative_cost"][0]
        for entry in sweep["runs"]
        if entry["summary"]["metrics_defined"]
    ]
    if not costs:
        return []
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(costs, bins=20, alpha=0.8)
    ax.set_xlabel("cumulative violation cost (constraint 0)")
    ax.set_ylabel("runs")
    ax.set_title(
        f"coverage {sweep['coverage_fraction']:.3f} "
        f"(target {sweep['coverage_target']:.3f}, n={len(sweep['runs'])})"
    )
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = out / "sweep_coverage.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return [path]


def render_compare_figures(comparison: dict, out_dir) -> list[Path]:
    """Per-step objective/violation curves plus the mean/max summary bars."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels = comparison["labels"]
    results = comparison["results"]
    if not results[0].records:
        return []
    t = np.array([r.t for r in results[0].records])

    fig, axes = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for label, result in zip(labels, results):
        objective = [r.objective for r in result.records]
        violation = [max(0.0, max(r.constraints)) for r in result.records]
        axes[0].plot(t, objective, "-", label=label)
        axes[1].plot(t, violation, "-", label=label)
    axes[0].set_ylabel("objective")
    axes[0].legend(loc="best", fontsize=8)
    axes[0].grid(alpha=0.3)
    axes[1].set_xlabel("step")
    axes[1].set_ylabel("violation magnitude")
    axes[1].legend(loc="best", fontsize=8)
    axes[1].grid(alpha=0.3)
    fig.tight_layout()
    curves = out / "compare_steps.png"
    fig.savefig(curves, dpi=150)
    plt.close(fig)

    table = comparison["table"]
    x = np.arange(len(table))
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.5))
    axes[0].bar(x, [row["mean_objective"] for row in table])
    axes[0].set_xticks(x, [row["label"] for row in table], rotation=20, fontsize=8)
    axes[0].set_title("mean objective")
    axes[1].bar(x, [row["max_violation"] for row in table], color="firebrick")
    axes[1].set_xticks(x, [row["label"] for row in table], rotation=20, fontsize=8)
    axes[1].set_title("max violation magnitude")
    for ax in axes:
        ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    bars = out / "compare_stats.png"
    fig.savefig(bars, dpi=150)
    plt.close(fig)
    return [curves, bars]
