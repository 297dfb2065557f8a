"""Command line entry point: ``anytime-pomdp plan ...``."""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .domains import parse_domain
from .errors import ConfigError, InvalidLayout
from .harness import ExperimentPlan, run_experiment
from .planners import STRATEGIES, PlannerConfig, load_config

# CLI flag -> PlannerConfig field
FLAG_FIELDS = {
    "planner": "strategy",
    "heuristic": "heuristic",
    "lower": "lower",
    "upper": "upper",
    "budget_ms": "time_budget_ms",
    "max_expansions": "max_expansions",
    "epsilon": "epsilon",
    "depth": "depth",
    "obs_samples": "num_obs_samples",
    "trajectories": "num_trajectories",
    "disc_k": "discretization",
    "pbvi_beliefs": "pbvi_beliefs",
    "pbvi_iters": "pbvi_iters",
    "seed": "seed",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="anytime-pomdp", description="Anytime online POMDP planning experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("plan", help="run seeded planning episodes and write CSV metrics")
    p.add_argument("--domain", required=True, help="tag | rocksample:<n>,<k> | fvrs:<n>,<k>")
    p.add_argument("--layout", help="rock layout file, one 'x y' pair per line")
    p.add_argument("--config", help="key = value file with planner settings (flags override it)")
    p.add_argument("--planner", choices=STRATEGIES)
    p.add_argument("--heuristic", help="satia | bipomdp | aems1 | aems2 | hsvi-bfs")
    p.add_argument("--lower", help="blind | pbvi")
    p.add_argument("--upper", help="mdp | qmdp | fib")
    p.add_argument("--budget-ms", type=int, help="planning time per action in milliseconds")
    p.add_argument("--max-expansions", type=int,
                   help="deterministic budget: node expansions per action (replaces the time budget)")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--depth", type=int)
    p.add_argument("--obs-samples", type=int)
    p.add_argument("--trajectories", type=int)
    p.add_argument("--disc-k", type=int)
    p.add_argument("--pbvi-beliefs", type=int)
    p.add_argument("--pbvi-iters", type=int)
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="per-episode CSV path; a *_summary.csv is written beside it")
    p.add_argument("--trace-bounds", help="write time-stamped root bounds for heuristic search")
    return parser


def config_from_args(args) -> PlannerConfig:
    cfg = load_config(args.config) if args.config else PlannerConfig()
    changes = {f: getattr(args, flag) for flag, f in FLAG_FIELDS.items() if getattr(args, flag) is not None}
    return dataclasses.replace(cfg, **changes).validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        domain = parse_domain(args.domain, args.layout)
        if args.episodes < 1:
            raise ConfigError("--episodes must be >= 1")
        if args.max_steps is not None and args.max_steps < 1:
            raise ConfigError("--max-steps must be >= 1")
        for path in (args.out, args.trace_bounds):
            if path is not None and not Path(path).resolve().parent.is_dir():
                raise ConfigError(f"output directory for {path} does not exist")
        plan = ExperimentPlan(domain, cfg, args.episodes, args.max_steps, cfg.seed, args.out, args.trace_bounds,
                              args.domain)
    except (ConfigError, InvalidLayout, OSError) as exc:
        print(f"anytime-pomdp: config error: {exc}", file=sys.stderr)
        return 2
    metrics, _, _ = run_experiment(plan)
    print(
        f"{args.domain} {cfg.strategy} episodes={metrics.episodes} "
        f"return={metrics.return_mean:.4f} +/- {metrics.return_ci:.4f}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
