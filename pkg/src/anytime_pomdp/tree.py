"""AND-OR search tree over beliefs with incremental bound propagation.

OR-nodes hold beliefs and choose actions; AND-nodes hold actions and weigh
observations.  Every node keeps its tree bounds (L_T, U_T), the best value
of the heuristic product in its subtree (H*) and a reference to the fringe
node achieving it, so the next node to expand is read off the root.
"""
from __future__ import annotations

import logging

from .errors import ExpandNonFringe, InternalConsistencyError, ZeroProbabilityObservation

log = logging.getLogger(__name__)

CLAMP_TOL = 1e-7
CLAMP_QUIET = 1e-12  # crossings below this are rounding noise, logged at debug level


def clamp_bounds(lower: float, upper: float):
    """Return ``(lower, upper)``, merging tiny crossings caused by rounding."""
    if lower <= upper:
        return lower, upper
    gap = lower - upper
    if gap > CLAMP_TOL:
        raise InternalConsistencyError(f"lower bound {lower!r} exceeds upper bound {upper!r} by {gap:.3g}")
    log.log(logging.WARNING if gap > CLAMP_QUIET else logging.DEBUG, "bounds crossed by %.3g; clamping to midpoint", gap)
    mid = 0.5 * (lower + upper)
    return mid, mid


class OrNode:
    __slots__ = (
        "belief", "lower", "upper", "offline_lower", "offline_upper", "h_star", "best_fringe",
        "parent", "obs", "children", "depth", "best_action_index",
    )

    def __init__(self, belief, lower, upper, parent=None, obs=None, depth=0):
        self.belief = belief
        self.offline_lower = lower
        self.offline_upper = upper
        self.lower, self.upper = clamp_bounds(lower, upper)
        self.parent = parent  # AndNode or None
        self.obs = obs
        self.children = None  # list of AndNode once expanded
        self.depth = depth
        self.h_star = 0.0
        self.best_fringe = self
        self.best_action_index = -1

    @property
    def is_fringe(self) -> bool:
        return self.children is None

    def __repr__(self):
        return f"OrNode(depth={self.depth}, L={self.lower:.4g}, U={self.upper:.4g})"


class AndNode:
    __slots__ = (
        "action", "reward", "lower", "upper", "h_star", "best_fringe", "parent",
        "observations", "probs", "nodes", "obs_weights", "best_obs_index",
    )

    def __init__(self, action, reward, parent):
        self.action = action
        self.reward = reward
        self.parent = parent
        self.observations = []
        self.probs = []
        self.nodes = []
        self.obs_weights = []
        self.lower = self.upper = 0.0
        self.h_star = 0.0
        self.best_fringe = None
        self.best_obs_index = -1

    @property
    def children(self):
        return list(zip(self.observations, self.probs, self.nodes))

    def __repr__(self):
        return f"AndNode(a={self.action}, L={self.lower:.4g}, U={self.upper:.4g})"


class SearchTree:
    """Anytime AND-OR tree rooted at the current belief.

    ``lower`` and ``upper`` are bound functions exposing ``value(b)``; the
    lower bound may also expose ``evaluate(b) -> (value, action)`` which is
    used to act before any expansion.
    """

    def __init__(self, dynamics, lower, upper, heuristic, root_belief=None):
        self.dynamics = dynamics
        self.lower_bound = lower
        self.upper_bound = upper
        self.heuristic = heuristic
        self.discount = dynamics.model.discount
        self.num_actions = dynamics.model.num_actions
        if root_belief is None:
            root_belief = dynamics.initial_belief
        self.root = self._new_node(root_belief, None, None, 0)
        self.node_count = 1
        self.reused_count = 0
        self.expansions = 0

    # -- node creation and local updates --------------------------------
    def _new_node(self, belief, parent, obs, depth):
        if self.dynamics.is_terminal(belief):
            # absorbing with zero reward: the value is exactly 0
            node = OrNode(belief, 0.0, 0.0, parent, obs, depth)
        else:
            node = OrNode(belief, self.lower_bound.value(belief), self.upper_bound.value(belief), parent, obs, depth)
        node.h_star = self.heuristic.fringe_weight(node)
        return node

    def _refresh_and(self, act: AndNode):
        g = self.discount
        lo = hi = 0.0
        best_i, best_h = -1, -1.0
        weights = act.obs_weights
        for i, (p, child) in enumerate(zip(act.probs, act.nodes)):
            lo += p * child.lower
            hi += p * child.upper
            h = weights[i] * child.h_star
            if h > best_h:
                best_i, best_h = i, h
        act.lower = act.reward + g * lo
        act.upper = act.reward + g * hi
        act.best_obs_index = best_i
        if best_i >= 0:
            act.h_star = best_h
            act.best_fringe = act.nodes[best_i].best_fringe
        else:
            act.h_star = 0.0
            act.best_fringe = None

    def _refresh_or(self, node: OrNode):
        acts = node.children
        best_l = max(a.lower for a in acts)
        best_u = max(a.upper for a in acts)
        node.lower, node.upper = clamp_bounds(max(node.lower, best_l), min(node.upper, best_u))
        weights = self.heuristic.action_weights(node)
        best_i, best_h = 0, -1.0
        for i, (w, act) in enumerate(zip(weights, acts)):
            h = w * act.h_star
            if h > best_h:
                best_i, best_h = i, h
        node.best_action_index = best_i
        node.h_star = best_h
        fringe = acts[best_i].best_fringe
        node.best_fringe = fringe if fringe is not None else node

    # -- public operations ------------------------------------------------
    def expand(self, node: OrNode) -> None:
        """One-step lookahead below a fringe node."""
        if node.children is not None:
            raise ExpandNonFringe("node is already expanded")
        g = self.discount
        depth = node.depth + 1
        acts = []
        added = 0
        for a in range(self.num_actions):
            reward, succ = self.dynamics.successors(node.belief, a)
            act = AndNode(a, reward, node)
            for z, p, b in succ:
                act.observations.append(z)
                act.probs.append(p)
                act.nodes.append(self._new_node(b, act, z, depth))
                act.obs_weights.append(self.heuristic.observation_weight(p, g))
            added += len(succ)
            self._refresh_and(act)
            acts.append(act)
        node.children = acts
        self._refresh_or(node)
        self.node_count += added
        self.expansions += 1

    def update_ancestors(self, node: OrNode) -> None:
        """Propagate bounds and best-fringe references from ``node`` up to the root."""
        while node.parent is not None:
            act = node.parent
            self._refresh_and(act)
            node = act.parent
            self._refresh_or(node)

    def choose_next_node(self):
        select = getattr(self.heuristic, "select", None)
        if select is not None:
            return select(self)
        if not self.root.h_star > 0:
            return None
        return self.root.best_fringe

    def expand_next(self) -> bool:
        """Expand the selected fringe node and update its ancestors; False when nothing is left."""
        node = self.choose_next_node()
        if node is None:
            return False
        self.expand(node)
        self.update_ancestors(node)
        return True

    def best_action(self) -> int:
        """Action with the highest tree lower bound (lowest id on ties)."""
        root = self.root
        if root.children is None:
            evaluate = getattr(self.lower_bound, "evaluate", None)
            if evaluate is not None:
                a = evaluate(root.belief)[1]
                if a >= 0:
                    return a
            return 0
        best, best_l = 0, -float("inf")
        for act in root.children:
            if act.lower > best_l:
                best, best_l = act.action, act.lower
        return best

    def is_epsilon_optimal(self, epsilon: float) -> bool:
        root = self.root
        if root.upper - root.lower <= epsilon:
            return True
        if root.children is None:
            return False
        best = self.best_action()
        return all(root.lower >= act.upper for act in root.children if act.action != best)

    def reuse_subtree(self, a: int, z: int) -> "SearchTree":
        """Make the child reached by ``(a, z)`` the new root, keeping its subtree."""
        root = self.root
        child = None
        if root.children is not None:
            act = root.children[a]
            if z not in act.observations:
                raise ZeroProbabilityObservation(f"observation {z} impossible after action {a}")
            child = act.nodes[act.observations.index(z)]
        if child is None:
            belief = self.dynamics.belief_update(root.belief, a, z)
            self.root = self._new_node(belief, None, None, root.depth + 1)
            self.node_count = 1
            self.reused_count = 0
        else:
            child.parent = None
            child.obs = None
            self.root = child
            self.node_count = subtree_size(child)
            self.reused_count = self.node_count
        return self

    def depth_of(self, node: OrNode) -> int:
        return node.depth - self.root.depth

    def dump(self) -> str:
        """Indented text rendering, one node per line."""
        lines = []
        base = self.root.depth
        stack = [(self.root, 0)]
        while stack:
            item, indent = stack.pop()
            pad = "  " * indent
            if isinstance(item, OrNode):
                lines.append(
                    f"{pad}OR d={item.depth - base} L={item.lower:.6f} U={item.upper:.6f} H*={item.h_star:.6f}"
                )
                if item.children is not None:
                    stack.extend((act, indent + 1) for act in reversed(item.children))
            else:
                act = item
                probs = " ".join(f"{p:.6f}" for p in act.probs)
                lines.append(f"{pad}AND a={act.action} p(z)={probs}")
                stack.extend((n, indent + 1) for n in reversed(act.nodes))
        return "\n".join(lines) + "\n"


def subtree_size(node: OrNode) -> int:
    count = 0
    stack = [node]
    while stack:
        n = stack.pop()
        count += 1
        if n.children is not None:
            for act in n.children:
                stack.extend(act.nodes)
    return count


def iter_or_nodes(node: OrNode):
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        if n.children is not None:
            for act in n.children:
                stack.extend(act.nodes)
