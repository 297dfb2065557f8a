"""Online planning strategies and the generic plan/act loop.

Strategies: ``heuristic-search`` (best-first AND-OR search with a pluggable
heuristic), ``rtbss`` (depth-first branch and bound), ``mcallester``
(sparse observation sampling), ``rollout`` (parallel rollout of offline
policies) and ``rtdp-bel`` (learned values over discretized beliefs).
"""
from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import bounds as _bounds
from .errors import ConfigError
from .heuristics import HEURISTICS, make_heuristic
from .tree import SearchTree

STRATEGIES = ("heuristic-search", "rtbss", "mcallester", "rollout", "rtdp-bel")


@dataclass
class PlannerConfig:
    strategy: str = "heuristic-search"
    heuristic: str = "aems2"
    lower: str = "blind"
    upper: str = "fib"
    epsilon: float = 0.01
    depth: int = 2
    num_obs_samples: int = 3
    num_trajectories: int = 20
    policies: tuple = ()
    discretization: int = 10
    time_budget_ms: int = 1000
    max_expansions: int | None = None
    seed: int = 0
    pbvi_beliefs: int = 64
    pbvi_iters: int = 20

    def validate(self) -> "PlannerConfig":
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; choose from {', '.join(STRATEGIES)}")
        if self.strategy == "heuristic-search" and self.heuristic not in HEURISTICS:
            raise ConfigError(f"unknown heuristic {self.heuristic!r}; choose from {', '.join(HEURISTICS)}")
        if self.lower not in _bounds.LOWER_BOUNDS:
            raise ConfigError(f"lower bound must be one of {', '.join(_bounds.LOWER_BOUNDS)}")
        if self.upper not in _bounds.UPPER_BOUNDS:
            raise ConfigError(f"upper bound must be one of {', '.join(_bounds.UPPER_BOUNDS)}")
        for p in self.policies:
            if p not in _bounds.LOWER_BOUNDS:
                raise ConfigError(f"rollout policy {p!r} must be one of {', '.join(_bounds.LOWER_BOUNDS)}")
        if not (self.epsilon >= 0):
            raise ConfigError("epsilon must be >= 0")
        positive = ["depth", "num_obs_samples", "num_trajectories", "discretization", "time_budget_ms",
                    "pbvi_beliefs"]
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.pbvi_iters < 0:
            raise ConfigError("pbvi_iters must be >= 0")
        if self.max_expansions is not None and self.max_expansions < 0:
            raise ConfigError("max_expansions must be >= 0")
        return self

    def replace(self, **changes) -> "PlannerConfig":
        return dataclasses.replace(self, **changes).validate()


def _convert(name: str, text: str):
    f = {f.name: f for f in dataclasses.fields(PlannerConfig)}[name]
    kind = str(f.type)
    text = text.strip()
    try:
        if name == "policies":
            return tuple(p.strip() for p in text.split(",") if p.strip())
        if name == "max_expansions":
            return None if text.lower() in ("", "none") else int(text)
        if "float" in kind:
            return math.inf if text.lower() in ("inf", "infinity") else float(text)
        if "int" in kind:
            return int(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value {text!r} for {name}") from None


def parse_config(text: str, base: PlannerConfig | None = None) -> PlannerConfig:
    """Read ``key = value`` lines (``#`` comments, dashes or underscores in keys)."""
    names = {f.name for f in dataclasses.fields(PlannerConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in names:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, value)
    return dataclasses.replace(base or PlannerConfig(), **values).validate()


def load_config(path, base: PlannerConfig | None = None) -> PlannerConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base)


# -- records ---------------------------------------------------------------
@dataclass
class StepRecord:
    action: int
    observation: int
    reward: float
    planning_ms: float
    tree_lower: float | None
    tree_upper: float | None
    offline_lower: float
    offline_upper: float
    node_count: int
    reused_count: int
    prev_node_count: int = 0
    expansions: int = 0


@dataclass
class EpisodeLog:
    discount: float
    steps: list = field(default_factory=list)
    start_state: int | None = None

    @property
    def rewards(self):
        return [s.reward for s in self.steps]

    @property
    def discounted_return(self) -> float:
        total, factor = 0.0, 1.0
        for s in self.steps:
            total += factor * s.reward
            factor *= self.discount
        return total


@dataclass
class StepPlan:
    action: int
    tree_lower: float | None
    tree_upper: float | None
    node_count: int
    reused_count: int
    expansions: int = 0


# -- bound construction ----------------------------------------------------
class Bounds:
    """Offline bounds for one model, built lazily and cached by name."""

    def __init__(self, domain_model, config: PlannerConfig | None = None, dynamics=None):
        self.model = domain_model
        self.dynamics = dynamics
        self.config = config or PlannerConfig()
        self._cache = {}

    def get(self, name: str):
        if name not in self._cache:
            if name == "fib" and "qmdp" in self._cache:
                self._cache[name] = _bounds.fib_bound(self.model, qmdp=self._cache["qmdp"])
            else:
                self._cache[name] = _bounds.build_bound(
                    name, self.model,
                    num_beliefs=self.config.pbvi_beliefs,
                    num_iterations=self.config.pbvi_iters,
                    seed=self.config.seed,
                    dynamics=self.dynamics,
                )
        return self._cache[name]


# -- planners ---------------------------------------------------------------
class _Planner:
    uses_bounds = True

    def __init__(self, dynamics, lower, upper, config: PlannerConfig, rng):
        self.dynamics = dynamics
        self.lower = lower
        self.upper = upper
        self.config = config
        self.rng = rng
        self.discount = dynamics.model.discount
        self.belief = None

    def start(self, belief):
        self.belief = belief

    def advance(self, a, z):
        self.belief = self.dynamics.belief_update(self.belief, a, z)

    def offline_bounds(self):
        return self.lower.value(self.belief), self.upper.value(self.belief)


class HeuristicSearchPlanner(_Planner):
    """Best-first AND-OR search that keeps the subtree under the new belief."""

    def __init__(self, dynamics, lower, upper, config, rng, heuristic=None):
        super().__init__(dynamics, lower, upper, config, rng)
        self.heuristic = heuristic or make_heuristic(config.heuristic)
        self.tree = None
        self.trace = None  # optional callback(elapsed_s, lower, upper)

    def start(self, belief):
        super().start(belief)
        self.tree = SearchTree(self.dynamics, self.lower, self.upper, self.heuristic, belief)

    def plan(self) -> StepPlan:
        tree = self.tree
        cfg = self.config
        reused = tree.reused_count
        deterministic = cfg.max_expansions is not None
        limit = cfg.max_expansions if deterministic else math.inf
        deadline = math.inf if deterministic else time.perf_counter() + cfg.time_budget_ms / 1000.0
        start = time.perf_counter()
        done = 0
        while done < limit and not tree.is_epsilon_optimal(cfg.epsilon):
            if time.perf_counter() >= deadline:
                break
            if not tree.expand_next():
                break
            done += 1
            if self.trace is not None:
                self.trace(time.perf_counter() - start, tree.root.lower, tree.root.upper)
        root = tree.root
        return StepPlan(tree.best_action(), root.lower, root.upper, tree.node_count, reused, done)

    def offline_bounds(self):
        root = self.tree.root
        return root.offline_lower, root.offline_upper

    def advance(self, a, z):
        self.tree.reuse_subtree(a, z)
        self.belief = self.tree.root.belief


def _one_step(dynamics, b, a, value_fn, discount):
    reward, succ = dynamics.successors(b, a)
    return reward + discount * sum(p * value_fn.value(child) for _, p, child in succ), reward, succ


def _rtbss(dynamics, b, d, lower, upper, discount, counter):
    """Returns ``(L_T(b), U_T(b), best_action)`` for a depth-``d`` branch-and-bound search."""
    if d == 0:
        return lower.value(b), upper.value(b), -1
    num_actions = dynamics.model.num_actions
    scored = []
    for a in range(num_actions):
        u, reward, succ = _one_step(dynamics, b, a, upper, discount)
        counter[0] += len(succ)
        scored.append((u, a, reward, succ))
    scored.sort(key=lambda item: -item[0])  # stable: lowest id first on ties
    best_l, best_a = -math.inf, scored[0][1]
    best_u = -math.inf
    for u_a, a, reward, succ in scored:
        if not u_a > best_l:
            best_u = max(best_u, u_a)
            continue
        lo = hi = 0.0
        for _, p, child in succ:
            cl, cu, _ = _rtbss(dynamics, child, d - 1, lower, upper, discount, counter)
            lo += p * cl
            hi += p * cu
        l_a = reward + discount * lo
        best_u = max(best_u, min(u_a, reward + discount * hi))
        if l_a > best_l or (l_a == best_l and a < best_a):
            best_l, best_a = l_a, a
    return best_l, min(best_u, upper.value(b)), best_a


def rtbss_expand(b, d: int, lower, upper, dynamics) -> float:
    """Lower bound at ``b`` from a depth-``d`` branch-and-bound lookahead."""
    if d < 0:
        raise ValueError("depth must be >= 0")
    return _rtbss(dynamics, b, d, lower, upper, dynamics.model.discount, [0])[0]


class RtbssPlanner(_Planner):
    def plan(self) -> StepPlan:
        counter = [1]
        lo, hi, a = _rtbss(self.dynamics, self.belief, self.config.depth, self.lower, self.upper,
                           self.discount, counter)
        off_l = self.lower.value(self.belief)
        lo = max(lo, off_l)
        return StepPlan(a, lo, max(hi, lo), counter[0], 0)


class RewardBound:
    """Fringe evaluator ``max_a R_B(b, a)`` used by default in sparse sampling."""

    def __init__(self, dynamics):
        self.dynamics = dynamics

    def value(self, b) -> float:
        return max(self.dynamics.belief_reward(b, a) for a in range(self.dynamics.model.num_actions))


def _sample_counts(rng, succ, C):
    probs = np.array([p for _, p, _ in succ])
    return rng.multinomial(C, probs / probs.sum())


def _mcallester(dynamics, b, d, C, rng, fringe, discount, counter):
    if d == 0:
        return fringe.value(b), -1
    best, best_a = -math.inf, 0
    for a in range(dynamics.model.num_actions):
        reward, succ = dynamics.successors(b, a)
        counts = _sample_counts(rng, succ, C)
        total = 0.0
        for n_z, (_, _, child) in zip(counts, succ):
            if n_z > 0:
                counter[0] += 1
                total += n_z / C * _mcallester(dynamics, child, d - 1, C, rng, fringe, discount, counter)[0]
        q = reward + discount * total
        if q > best:
            best, best_a = q, a
    return best, best_a


def mcallester_expand(b, d: int, C: int, seed, dynamics, fringe=None) -> float:
    """Sparse-sampling estimate of the depth-``d`` lookahead value at ``b``."""
    if d < 0 or C < 1:
        raise ValueError("need d >= 0 and C >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    fringe = fringe or RewardBound(dynamics)
    return _mcallester(dynamics, b, d, C, rng, fringe, dynamics.model.discount, [0])[0]


class McAllesterPlanner(_Planner):
    def __init__(self, dynamics, lower, upper, config, rng, fringe=None):
        super().__init__(dynamics, lower, upper, config, rng)
        self.fringe = fringe or RewardBound(dynamics)

    def plan(self) -> StepPlan:
        counter = [1]
        _, a = _mcallester(self.dynamics, self.belief, self.config.depth, self.config.num_obs_samples,
                           self.rng, self.fringe, self.discount, counter)
        return StepPlan(a, None, None, counter[0], 0)


def greedy_action(policy, b) -> int:
    a = policy.evaluate(b)[1]
    return a if a >= 0 else 0


def _sample_child(rng, succ):
    probs = np.array([p for _, p, _ in succ])
    cdf = np.cumsum(probs)
    i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return succ[min(i, len(succ) - 1)]


def parallel_rollout_plan(b, policies, M: int, d: int, seed, dynamics, counter=None):
    """Best first action when following each policy afterwards; returns ``(action, values)``."""
    if not policies:
        raise ValueError("need at least one rollout policy")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    g = dynamics.model.discount
    A = dynamics.model.num_actions
    values = np.full(A, -math.inf)
    for a in range(A):
        for pi in policies:
            q = 0.0
            for _ in range(M):
                bt, at, factor = b, a, 1.0
                for _ in range(d + 1):
                    reward, succ = dynamics.successors(bt, at)
                    q += factor * reward / M
                    factor *= g
                    bt = _sample_child(rng, succ)[2]
                    if counter is not None:
                        counter[0] += 1
                    if dynamics.is_terminal(bt):
                        break
                    at = greedy_action(pi, bt)
            values[a] = max(values[a], q)
    return int(np.argmax(values)), values


class RolloutPlanner(_Planner):
    def __init__(self, dynamics, lower, upper, config, rng, policies):
        super().__init__(dynamics, lower, upper, config, rng)
        self.policies = policies

    def plan(self) -> StepPlan:
        counter = [1]
        a, _ = parallel_rollout_plan(self.belief, self.policies, self.config.num_trajectories,
                                     self.config.depth, self.rng, self.dynamics, counter)
        return StepPlan(a, None, None, counter[0], 0)


class RtdpValueStore:
    """Learned values keyed by discretized belief, falling back to ``V0``."""

    def __init__(self, fallback, k: int = 10):
        if k < 1:
            raise ValueError("discretization resolution must be >= 1")
        self.fallback = fallback
        self.k = k
        self.values = {}

    def __len__(self):
        return len(self.values)

    def lookup(self, dynamics, b) -> float:
        key = dynamics.discretize(b, self.k)
        v = self.values.get(key)
        return self.fallback.value(b) if v is None else v

    def store(self, dynamics, b, value: float) -> None:
        if not math.isfinite(value):
            raise ValueError("stored values must be finite")
        self.values[dynamics.discretize(b, self.k)] = float(value)


def discretize(b, k: int, dynamics=None):
    """Key of ``b`` on the 1/k probability grid."""
    if dynamics is not None:
        return dynamics.discretize(b, k)
    from .core import discretize_entries

    return discretize_entries(*b.support(), k)


def rtdp_q_values(b, store: RtdpValueStore, dynamics) -> np.ndarray:
    g = dynamics.model.discount
    A = dynamics.model.num_actions
    if dynamics.is_terminal(b):
        return np.zeros(A)
    q = np.empty(A)
    for a in range(A):
        reward, succ = dynamics.successors(b, a)
        q[a] = reward + g * sum(p * store.lookup(dynamics, child) for _, p, child in succ)
    return q


def rtdp_bel_step(b, store: RtdpValueStore, dynamics) -> int:
    """Evaluate Q at ``b`` from stored values, store the best Q and return its action."""
    q = rtdp_q_values(b, store, dynamics)
    a = int(np.argmax(q))
    store.store(dynamics, b, q[a])
    return a


class RtdpBelPlanner(_Planner):
    def __init__(self, dynamics, lower, upper, config, rng, store: RtdpValueStore):
        super().__init__(dynamics, lower, upper, config, rng)
        self.store = store

    def plan(self) -> StepPlan:
        a = rtdp_bel_step(self.belief, self.store, self.dynamics)
        return StepPlan(a, None, None, 1 + self.dynamics.model.num_actions, 0)


def make_planner(dynamics, config: PlannerConfig, bounds: Bounds, rng, rtdp_store=None):
    lower, upper = bounds.get(config.lower), bounds.get(config.upper)
    s = config.strategy
    if s == "heuristic-search":
        return HeuristicSearchPlanner(dynamics, lower, upper, config, rng)
    if s == "rtbss":
        return RtbssPlanner(dynamics, lower, upper, config, rng)
    if s == "mcallester":
        return McAllesterPlanner(dynamics, lower, upper, config, rng)
    if s == "rollout":
        names = config.policies or (config.lower,)
        return RolloutPlanner(dynamics, lower, upper, config, rng, [bounds.get(n) for n in names])
    if s == "rtdp-bel":
        if rtdp_store is None:
            rtdp_store = RtdpValueStore(bounds.get("mdp"), config.discretization)
        return RtdpBelPlanner(dynamics, lower, upper, config, rng, rtdp_store)
    raise ConfigError(f"unknown strategy {s!r}")


def run_online_episode(dynamics, config: PlannerConfig, env, max_steps: int, bounds: Bounds | None = None,
                       rtdp_store=None, planner=None, seed=None) -> EpisodeLog:
    """Alternate planning and acting until a terminal belief or ``max_steps``."""
    if bounds is None:
        bounds = Bounds(dynamics.model, config, dynamics)
    if planner is None:
        rng = np.random.default_rng(config.seed if seed is None else seed)
        planner = make_planner(dynamics, config, bounds, rng, rtdp_store)
    log = EpisodeLog(dynamics.model.discount, start_state=env.true_state)
    planner.start(dynamics.initial_belief)
    prev_nodes = 0
    for _ in range(max_steps):
        if env.is_terminal or dynamics.is_terminal(planner.belief):
            break
        t0 = time.perf_counter()
        step = planner.plan()
        elapsed = (time.perf_counter() - t0) * 1000.0
        off_l, off_u = planner.offline_bounds()
        z, r = env.step(step.action)
        log.steps.append(StepRecord(
            step.action, z, r, elapsed, step.tree_lower, step.tree_upper, off_l, off_u,
            step.node_count, step.reused_count, prev_nodes, step.expansions,
        ))
        prev_nodes = step.node_count
        planner.advance(step.action, z)
    return log
