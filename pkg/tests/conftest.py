import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from anytime_pomdp.core import Belief, PomdpModel  # noqa: E402

# PASS/FAIL lines collected by the acceptance suite, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)


def static_model(accuracy=0.85, discount=0.95):
    """Two states that never change, one sensing action with the given accuracy."""
    T = [np.eye(2)]
    O = [np.array([[accuracy, 1 - accuracy], [1 - accuracy, accuracy]])]
    return PomdpModel(T, O, np.zeros((2, 1)), discount)


def tiger(discount=0.95):
    """Listen (0), open left (1), open right (2); the tiger is behind door 0 or 1."""
    listen = np.eye(2)
    reset = np.full((2, 2), 0.5)
    T = [listen, reset, reset]
    O = [np.array([[0.85, 0.15], [0.15, 0.85]]), np.full((2, 2), 0.5), np.full((2, 2), 0.5)]
    R = np.array([[-1.0, -100.0, 10.0], [-1.0, 10.0, -100.0]])
    return PomdpModel(T, O, R, discount, initial_belief=Belief([0, 1], [0.5, 0.5]))


def tie_model(rng, num_states=3, discount=0.9):
    """Random model whose last action copies action 0 and whose last two
    observations split one column evenly, so argmax ties occur naturally."""
    T = [rng.dirichlet(np.ones(num_states), size=num_states) for _ in range(2)]
    O = []
    for _ in range(2):
        base = rng.dirichlet(np.ones(2), size=num_states)
        O.append(np.column_stack([base[:, 0], base[:, 1] / 2, base[:, 1] / 2]))
    R = rng.integers(-2, 3, size=(num_states, 2)).astype(float)
    T.append(T[0])
    O.append(O[0])
    R = np.column_stack([R, R[:, 0]])
    b0 = Belief(np.arange(num_states), rng.dirichlet(np.ones(num_states)))
    return PomdpModel(T, O, R, discount, initial_belief=b0)


def random_search_tree(rng, heuristic, max_nodes=50):
    """Search tree of at most ``max_nodes`` OR-nodes over a tie model, grown by a
    mix of heuristic-driven and arbitrary fringe expansions."""
    from anytime_pomdp.bounds import blind_bound, fib_bound, mdp_bound, state_value_bound
    from anytime_pomdp.heuristics import make_heuristic
    from anytime_pomdp.tree import SearchTree, iter_or_nodes

    m = tie_model(rng)
    upper = fib_bound(m) if rng.random() < 0.5 else state_value_bound(mdp_bound(m), "upper")
    tree = SearchTree(m, blind_bound(m), upper, make_heuristic(heuristic))
    per_expansion = m.num_actions * m.num_observations
    while tree.node_count + per_expansion <= max_nodes:
        node = tree.choose_next_node() if rng.random() < 0.5 else None
        if node is None:
            fringe = [n for n in iter_or_nodes(tree.root) if n.is_fringe]
            node = fringe[int(rng.integers(len(fringe)))]
        tree.expand(node)
        tree.update_ancestors(node)
        if rng.random() < 0.15:
            break
    return tree


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
