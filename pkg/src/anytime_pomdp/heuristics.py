"""Node-selection heuristics for the AND-OR search tree.

A heuristic supplies three weights: ``fringe_weight`` H(b) for an OR-node,
``action_weights`` H(b, a) for every action under an expanded OR-node, and
``observation_weight`` H(b, a, z).  The tree expands the fringe node that
maximizes the product of weights along its path.
"""
from __future__ import annotations

import numpy as np

AEMS1_SMALL_WIDTH = 1e-12
AEMS1_LARGE_TERM = 1e12


def _argmax_upper(and_nodes) -> int:
    best, best_u = 0, -np.inf
    for i, n in enumerate(and_nodes):
        if n.upper > best_u:
            best, best_u = i, n.upper
    return best


class Heuristic:
    name = "base"
    weights_depend_on_bounds = True

    def fringe_weight(self, node) -> float:
        return max(node.upper - node.lower, 0.0)

    def action_weights(self, node) -> list:
        raise NotImplementedError

    def observation_weight(self, prob: float, discount: float) -> float:
        return discount * prob

    def __repr__(self):
        return f"{type(self).__name__}()"


class SatiaLave(Heuristic):
    """Every action that is not dominated, observations weighted by gamma * Pr(z)."""

    name = "satia"

    def action_weights(self, node):
        return [1.0 if c.upper > node.lower else 0.0 for c in node.children]


class BiPomdp(Heuristic):
    """Only the best upper-bound action, all observations weighted equally."""

    name = "bipomdp"

    def action_weights(self, node):
        w = [0.0] * len(node.children)
        w[_argmax_upper(node.children)] = 1.0
        return w

    def observation_weight(self, prob, discount):
        return 1.0


def aems1_policy(node) -> list:
    """Probability that each action is optimal, assuming uniform Q-values within bounds."""
    terms = []
    for c in node.children:
        if c.upper > node.lower:
            width = c.upper - c.lower
            if width < AEMS1_SMALL_WIDTH:
                terms.append(AEMS1_LARGE_TERM)
            else:
                terms.append((c.upper - node.lower) ** 2 / width)
        else:
            terms.append(0.0)
    total = sum(terms)
    if total <= 0:
        return [0.0] * len(terms)
    return [t / total for t in terms]


class Aems1(Heuristic):
    name = "aems1"

    def action_weights(self, node):
        return aems1_policy(node)


class Aems2(Heuristic):
    name = "aems2"

    def action_weights(self, node):
        w = [0.0] * len(node.children)
        w[_argmax_upper(node.children)] = 1.0
        return w


class HsviBfs(Aems2):
    """Greedy descent: best upper-bound action, then the observation with the largest Pr(z) * gap.

    Keeps AEMS2 bookkeeping in the tree but overrides node selection.
    """

    name = "hsvi-bfs"

    def select(self, tree):
        node = tree.root
        if node.upper - node.lower <= 0:
            return None
        while node.children is not None:
            act = node.children[_argmax_upper(node.children)]
            best, best_score = None, -np.inf
            for p, child in zip(act.probs, act.nodes):
                score = p * (child.upper - child.lower)
                if score > best_score:
                    best, best_score = child, score
            if best_score <= 0:
                return None
            node = best
        return node


HEURISTICS = {cls.name: cls for cls in (SatiaLave, BiPomdp, Aems1, Aems2, HsviBfs)}


def make_heuristic(token: str) -> Heuristic:
    try:
        return HEURISTICS[token]()
    except KeyError:
        raise ValueError(f"unknown heuristic {token!r}; choose from {', '.join(HEURISTICS)}") from None


def hsvi_bfs_select(tree):
    return HsviBfs().select(tree)
