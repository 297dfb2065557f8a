import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anytime_pomdp.core import Belief, Environment, PomdpModel, discounted_return, random_model
from anytime_pomdp.errors import TerminalState, ValidationError, ZeroProbabilityObservation
from conftest import static_model
from oracles import dense_parts, dense_successors


def test_belief_canonical_form():
    b = Belief([3, 1, 3], [0.2, 0.5, 0.3])
    assert b.states.tolist() == [1, 3]
    assert np.allclose(b.probs, [0.5, 0.5])
    assert b == Belief([1, 3], [0.5, 0.5])
    assert hash(b) == hash(Belief([3, 1], [1.0, 1.0]))


def test_belief_drops_tiny_entries():
    b = Belief([0, 1, 2], [1.0, 1e-14, 1.0])
    assert b.states.tolist() == [0, 2]
    assert abs(b.probs.sum() - 1) < 1e-12


def test_belief_rejects_bad_input():
    with pytest.raises(ValueError):
        Belief([0, 1], [0.5, -0.1])
    with pytest.raises(ValueError):
        Belief([0], [0.0])


def test_permutation_transports_belief():
    P = np.eye(3)[[2, 0, 1]]
    m = PomdpModel([P], [np.ones((3, 1))], np.zeros((3, 1)), 0.9)
    b = Belief([0, 1, 2], [0.2, 0.3, 0.5])
    out = m.belief_update(b, 0, 0)
    assert np.allclose(out.to_dense(3), b.to_dense(3) @ P)


def test_static_model_bayes_update():
    m = static_model()
    b = Belief([0, 1], [0.5, 0.5])
    assert m.observation_probability(b, 0, 0) == pytest.approx(0.5)
    assert np.allclose(m.belief_update(b, 0, 0).to_dense(2), [0.85, 0.15])


def test_zero_probability_observation():
    m = PomdpModel([np.eye(2)], [np.eye(2)], np.zeros((2, 1)), 0.9)
    with pytest.raises(ZeroProbabilityObservation):
        m.belief_update(Belief.point(0), 0, 1)
    assert m.observation_probability(Belief.point(0), 0, 1) == 0.0


def test_uniform_observation_probability():
    m = PomdpModel([np.eye(3)], [np.full((3, 4), 0.25)], np.zeros((3, 1)), 0.9)
    b = Belief([0, 2], [0.3, 0.7])
    assert np.allclose(m.observation_distribution(b, 0), 0.25)


def test_deterministic_observation_probability():
    m = PomdpModel([np.eye(2)[[1, 0]]], [np.eye(2)], np.zeros((2, 1)), 0.9)
    assert m.observation_distribution(Belief.point(0), 0).tolist() == [0.0, 1.0]


def test_belief_reward():
    R = np.array([[10.0, 3.0], [-10.0, 3.0]])
    m = PomdpModel([np.eye(2)] * 2, [np.ones((2, 1))] * 2, R, 0.9)
    b = Belief([0, 1], [0.3, 0.7])
    assert m.belief_reward(b, 0) == pytest.approx(-4.0)
    assert m.belief_reward(b, 1) == pytest.approx(3.0)
    assert m.belief_reward(Belief.point(0), 0) == 10.0


def test_validation_errors():
    with pytest.raises(ValidationError):
        PomdpModel([np.array([[0.9]])], [np.ones((1, 1))], np.zeros((1, 1)), 0.9)
    with pytest.raises(ValidationError):
        PomdpModel([np.eye(1)], [np.ones((1, 1))], np.zeros((1, 1)), 1.0)
    with pytest.raises(ValidationError):
        PomdpModel([np.eye(1)], [np.ones((1, 1))], np.array([[np.inf]]), 0.5)
    with pytest.raises(ValidationError):
        PomdpModel([np.eye(2)], [np.ones((2, 1))], np.ones((2, 1)), 0.5, terminal_states=[1])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), S=st.integers(1, 6), A=st.integers(1, 3), Z=st.integers(1, 4),
       sparsity=st.sampled_from([0.0, 0.5]))
def test_belief_primitives_match_dense_oracle(seed, S, A, Z, sparsity):
    rng = np.random.default_rng(seed)
    m = random_model(rng, S, A, Z, 0.9, sparsity=sparsity)
    parts = dense_parts(m)
    b = m.initial_belief
    for _ in range(10):
        a = int(rng.integers(A))
        pz = m.observation_distribution(b, a)
        assert abs(pz.sum() - 1) <= 1e-9
        r, succ = m.successors(b, a)
        r2, succ2 = dense_successors(parts, b.to_dense(S), a)
        assert r == pytest.approx(r2, abs=1e-12)
        assert [z for z, _, _ in succ] == [z for z, _, _ in succ2]
        pred = b.to_dense(S) @ parts[0][a]
        for (z, p, child), (_, p2, child2) in zip(succ, succ2):
            assert p == pytest.approx(p2, abs=1e-12)
            assert abs(child.probs.sum() - 1) <= 1e-9
            # Bayes identity
            assert np.allclose(p * child.to_dense(S), parts[1][a][:, z] * pred, atol=1e-9)
            assert np.allclose(m.belief_update(b, a, z).to_dense(S), child2, atol=1e-9)
        z = succ[int(rng.integers(len(succ)))][0]
        b = m.belief_update(b, a, z)


def test_environment_deterministic_model():
    P = np.eye(3)[[1, 2, 0]]
    m = PomdpModel([P], [np.eye(3)], np.array([[1.0], [2.0], [3.0]]), 0.9)
    for seed in range(3):
        env = Environment(m, state=0, seed=seed)
        assert [env.step(0) for _ in range(3)] == [(1, 1.0), (2, 2.0), (0, 3.0)]


def test_environment_repeatable(rng):
    m = random_model(rng, 5, 2, 3, 0.9)
    runs = []
    for _ in range(2):
        env = Environment(m, seed=99)
        runs.append([env.step(i % 2) for i in range(50)])
    assert runs[0] == runs[1]


def test_environment_observation_frequencies():
    O = np.array([[0.2, 0.5, 0.3]])
    m = PomdpModel([np.eye(1)], [O], np.zeros((1, 1)), 0.9)
    env = Environment(m, state=0, seed=7)
    n = 100_000
    counts = np.bincount([env.step(0)[0] for _ in range(n)], minlength=3)
    sigma = np.sqrt(n * O[0] * (1 - O[0]))
    assert np.all(np.abs(counts - n * O[0]) <= 3 * sigma)


def test_environment_terminal():
    m = PomdpModel([np.eye(2)], [np.ones((2, 1))], np.array([[1.0], [0.0]]), 0.9, terminal_states=[1])
    env = Environment(m, state=1, seed=0)
    with pytest.raises(TerminalState):
        env.step(0)


def test_discounted_return():
    assert discounted_return([1, 1, 1], 0.5) == pytest.approx(1.75)
