"""Experiment runner: seeded episodes, search-efficiency metrics and CSV output."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Environment
from .planners import Bounds, EpisodeLog, PlannerConfig, RtdpValueStore, make_planner, run_online_episode

EPISODE_COLUMNS = [
    "domain", "planner", "heuristic", "lower", "upper", "budget_ms", "seed", "episode",
    "return", "ebr", "lbi", "nodes", "reuse_pct", "online_ms",
]
SUMMARY_COLUMNS = [
    "domain", "planner", "heuristic", "lower", "upper", "budget_ms", "episodes",
    "return_mean", "return_ci", "ebr_mean", "ebr_ci", "lbi_mean", "lbi_ci",
    "nodes_mean", "reuse_pct_mean", "online_ms_mean",
]
TIMING_COLUMNS = ("online_ms", "online_ms_mean")
GAP_TOL = 1e-12


def compute_step_metrics(tree_lower, tree_upper, lower, upper):
    """Error bound reduction and lower bound improvement at the current belief."""
    if tree_lower is None or tree_upper is None:
        return None, None
    width = upper - lower
    ebr = 1.0 if width <= GAP_TOL else 1.0 - (tree_upper - tree_lower) / width
    return ebr, tree_lower - lower


def mean_ci(values):
    """Mean and 95% half-width (1.96 standard errors); ``(nan, nan)`` when empty."""
    v = np.asarray([x for x in values if x is not None], dtype=float)
    if len(v) == 0:
        return math.nan, math.nan
    if len(v) == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(1.96 * v.std(ddof=1) / math.sqrt(len(v)))


@dataclass
class EpisodeRecord:
    domain: str
    planner: str
    heuristic: str
    lower: str
    upper: str
    budget_ms: int
    seed: int
    episode: int
    ret: float
    ebr: float | None
    lbi: float | None
    nodes: float
    reuse_pct: float
    online_ms: float

    def row(self):
        return [self.domain, self.planner, self.heuristic, self.lower, self.upper, self.budget_ms, self.seed,
                self.episode, self.ret, self.ebr, self.lbi, self.nodes, self.reuse_pct, self.online_ms]


@dataclass
class MetricsRecord:
    episodes: int
    return_mean: float
    return_ci: float
    ebr_mean: float
    ebr_ci: float
    lbi_mean: float
    lbi_ci: float
    nodes_mean: float
    reuse_pct_mean: float
    online_ms_mean: float


def episode_metrics(log: EpisodeLog):
    """Per-episode averages over steps: ebr, lbi, nodes, reuse %, online ms."""
    ebrs, lbis = [], []
    for s in log.steps:
        e, l = compute_step_metrics(s.tree_lower, s.tree_upper, s.offline_lower, s.offline_upper)
        if e is not None:
            ebrs.append(e)
            lbis.append(l)
    reuse = [100.0 * s.reused_count / s.prev_node_count for s in log.steps[1:] if s.prev_node_count > 0]
    mean = lambda xs: float(np.mean(xs)) if xs else None  # noqa: E731
    return {
        "ebr": mean(ebrs),
        "lbi": mean(lbis),
        "nodes": mean([s.node_count for s in log.steps]) or 0.0,
        "reuse_pct": mean(reuse) or 0.0,
        "online_ms": mean([s.planning_ms for s in log.steps]) or 0.0,
    }


def aggregate(records) -> MetricsRecord:
    r_m, r_ci = mean_ci([r.ret for r in records])
    e_m, e_ci = mean_ci([r.ebr for r in records])
    l_m, l_ci = mean_ci([r.lbi for r in records])
    return MetricsRecord(
        len(records), r_m, r_ci, e_m, e_ci, l_m, l_ci,
        mean_ci([r.nodes for r in records])[0],
        mean_ci([r.reuse_pct for r in records])[0],
        mean_ci([r.online_ms for r in records])[0],
    )


@dataclass
class ExperimentPlan:
    domain: object  # a Domain
    config: PlannerConfig
    episodes: int = 1
    max_steps: int | None = None
    seed: int = 0
    out: str | Path | None = None
    trace_bounds: str | Path | None = None
    domain_name: str = field(default="")

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


def choose_starts(start_states, episodes: int, seed: int):
    """Seeded subsample (without replacement while possible) of start configurations."""
    rng = np.random.default_rng([seed, 7])
    order = []
    while len(order) < episodes:
        order.extend(rng.permutation(len(start_states)).tolist())
    return [start_states[i] for i in order[:episodes]]


def run_experiment(plan: ExperimentPlan, bounds: Bounds | None = None):
    """Run all episodes; returns ``(MetricsRecord, [EpisodeRecord], [EpisodeLog])`` and writes CSV."""
    domain, cfg = plan.domain, plan.config
    dyn = domain.dynamics
    if bounds is None:
        bounds = Bounds(domain.model, cfg, dyn)
    max_steps = plan.max_steps or domain.max_steps
    store = None
    if cfg.strategy == "rtdp-bel":
        store = RtdpValueStore(bounds.get("mdp"), cfg.discretization)
    trace_rows = []
    records, logs = [], []
    heuristic = cfg.heuristic if cfg.strategy == "heuristic-search" else ""
    budget = cfg.time_budget_ms
    for i, s0 in enumerate(choose_starts(domain.start_states, plan.episodes, plan.seed)):
        env = Environment(domain.model, state=s0, seed=[plan.seed, i])
        planner = make_planner(dyn, cfg, bounds, np.random.default_rng([plan.seed, i, 1]), store)
        if plan.trace_bounds is not None and hasattr(planner, "trace"):
            step_box = [0]

            def trace(elapsed, lo, hi, ep=i, box=step_box):
                trace_rows.append((ep, box[0], elapsed * 1000.0, lo, hi))

            planner.trace = trace
            log = _run_traced(dyn, cfg, env, max_steps, planner, step_box)
        else:
            log = run_online_episode(dyn, cfg, env, max_steps, bounds, planner=planner)
        m = episode_metrics(log)
        records.append(EpisodeRecord(
            plan.domain_name or domain.name, cfg.strategy, heuristic, cfg.lower, cfg.upper, budget,
            plan.seed, i, log.discounted_return, m["ebr"], m["lbi"], m["nodes"], m["reuse_pct"], m["online_ms"],
        ))
        logs.append(log)
    metrics = aggregate(records)
    if plan.out is not None:
        write_csv(records, plan.out)
        write_summary(records, metrics, summary_path(plan.out))
    if plan.trace_bounds is not None:
        _write_trace(trace_rows, plan.trace_bounds)
    return metrics, records, logs


def _run_traced(dyn, cfg, env, max_steps, planner, step_box):
    """Episode loop that tells the trace callback which step it is in."""
    original = planner.plan

    def plan():
        out = original()
        step_box[0] += 1
        return out

    planner.plan = plan
    return run_online_episode(dyn, cfg, env, max_steps, planner=planner)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            return ""
        return format(float(v), ".6g")
    return str(v)


def write_csv(records, path) -> None:
    """One row per episode, numbers at 6 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EPISODE_COLUMNS)
        for r in records:
            w.writerow([_fmt(v) for v in r.row()])


def summary_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + "_summary" + (p.suffix or ".csv"))


def write_summary(records, metrics: MetricsRecord, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        if records:
            r = records[0]
            w.writerow([_fmt(v) for v in [
                r.domain, r.planner, r.heuristic, r.lower, r.upper, r.budget_ms, metrics.episodes,
                metrics.return_mean, metrics.return_ci, metrics.ebr_mean, metrics.ebr_ci,
                metrics.lbi_mean, metrics.lbi_ci, metrics.nodes_mean, metrics.reuse_pct_mean,
                metrics.online_ms_mean,
            ]])


def read_csv(path):
    """Parse an episode CSV back into :class:`EpisodeRecord` objects."""
    out = []
    num = lambda s: None if s == "" else float(s)  # noqa: E731
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != EPISODE_COLUMNS:
            raise ValueError("unexpected CSV header")
        for row in reader:
            out.append(EpisodeRecord(
                row[0], row[1], row[2], row[3], row[4], int(row[5]), int(row[6]), int(row[7]),
                float(row[8]), num(row[9]), num(row[10]), float(row[11]), float(row[12]), float(row[13]),
            ))
    return out


def _write_trace(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", "step", "elapsed_ms", "lower", "upper"])
        for ep, step, ms, lo, hi in rows:
            w.writerow([ep, step, _fmt(ms), _fmt(lo), _fmt(hi)])
