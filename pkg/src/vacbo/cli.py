"""Command-line interface: run, sweep, and compare subcommands."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness
from .harness import ConfigError
from .problems import PlantEvaluationError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PLANT = 3


def _add_common_overrides(parser):
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument("--plot", action="store_true", help="also render figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vacbo",
        description="Budgeted-violation contextual Bayesian optimization harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one run and write trace.csv/summary.json")
    p_run.add_argument("--config", required=True, help="path to a run config JSON file")
    p_run.add_argument("--mode", default=None, help="override the optimization mode")
    p_run.add_argument("--budget", default=None, help="override the total budget (number or 'inf')")
    _add_common_overrides(p_run)

    p_sweep = sub.add_parser("sweep", help="run many seeds and write sweep.json")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument(
        "--seeds", required=True,
        help="seed count ('100' means 0..99) or explicit comma list ('3,5,9')",
    )
    p_sweep.add_argument("--mode", default=None)
    p_sweep.add_argument("--budget", default=None)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--plot", action="store_true")
    _ = p_sweep

    p_cmp = sub.add_parser("compare", help="run aligned configs and write compare.csv")
    p_cmp.add_argument("configs", nargs="+", help="config files sharing problem, T, and context")
    p_cmp.add_argument("--seed", type=int, default=None, help="shared seed override")
    p_cmp.add_argument("--out", default=None)
    p_cmp.add_argument("--plot", action="store_true")

    return parser


def _cmd_run(args) -> int:
    cfg = harness.load_config(args.config)
    cfg = harness.apply_overrides(
        cfg, seed=args.seed, out=args.out, mode=args.mode, budget=args.budget
    )
    result, problem = harness.execute_run(cfg)
    paths = harness.write_run_outputs(cfg.out_dir, result, problem)
    if args.plot:
        from . import report
        paths["figures"] = report.render_run_figures(result, cfg.out_dir)
    summary = result.summary
    print(f"run: problem={cfg.problem} mode={cfg.mode} T={cfg.horizon} seed={cfg.seed}")
    if summary["metrics_defined"]:
        print(
            f"  mean objective {summary['mean_objective']:.6g}; "
            f"max violation {max(summary['max_violation']):.6g}; "
            f"cumulative cost {summary['cumulative_cost']}"
        )
    print(f"  wrote {paths['trace']} and {paths['summary']}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = harness.load_config(args.config)
    cfg = harness.apply_overrides(cfg, out=args.out, mode=args.mode, budget=args.budget)
    seeds = harness.parse_seed_spec(args.seeds)
    sweep = harness.run_sweep(cfg, seeds)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "sweep.json"
    harness.write_sweep_json(path, sweep)
    if args.plot:
        from . import report
        report.render_sweep_figures(sweep, out)
    lo, hi = sweep["coverage_interval_95"]
    print(
        f"sweep: {len(seeds)} seeds; coverage {sweep['coverage_fraction']:.4f} "
        f"(target {sweep['coverage_target']:.4f}; 95% CI [{lo:.4f}, {hi:.4f}])"
    )
    print(f"  wrote {path}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    cfgs = [harness.load_config(p) for p in args.configs]
    cfgs = [harness.apply_overrides(c, seed=args.seed, out=args.out) for c in cfgs]
    labels = harness.unique_labels(args.configs)
    comparison = harness.run_compare(cfgs, labels)
    out = Path(cfgs[0].out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "compare.csv"
    harness.write_compare_csv(csv_path, comparison)
    harness.write_compare_summary(out / "compare_summary.json", comparison)
    if args.plot:
        from . import report
        report.render_compare_figures(comparison, out)
    print(f"compare: {len(cfgs)} configs on {cfgs[0].problem} (T={cfgs[0].horizon})")
    for row in comparison["table"]:
        print(
            f"  {row['label']:>20s} mode={row['mode']:<12s} "
            f"mean objective {row['mean_objective']:.6g}  "
            f"max violation {row['max_violation']:.6g}"
        )
    print(f"  wrote {csv_path}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_compare(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PlantEvaluationError as exc:
        print(f"plant error: {exc}", file=sys.stderr)
        return EXIT_PLANT


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
