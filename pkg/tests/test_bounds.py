import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anytime_pomdp.bounds import (
    AlphaVectorSet,
    blind_bound,
    evaluate_alpha_set,
    fib_bound,
    format_alpha_set,
    mdp_bound,
    mdp_bound_with_trace,
    parse_alpha_set,
    pbvi_bound,
    qmdp_bound,
    state_value_bound,
)
from anytime_pomdp.core import Belief, PomdpModel, random_model
from anytime_pomdp.domains import build_tag
from oracles import exact_value_sets


def dense_belief(vec):
    return Belief.from_dense(vec)


def test_constant_reward_fixed_point():
    m = PomdpModel([np.eye(3)] * 2, [np.ones((3, 1))] * 2, np.full((3, 2), 2.0), 0.9)
    out = blind_bound(m)
    assert np.allclose(out.matrix, 20.0)


def test_myopic_case(rng):
    m = random_model(rng, 4, 3, 2, 0.0)
    for solver in (blind_bound, qmdp_bound, fib_bound):
        assert np.allclose(solver(m).matrix, m.rewards.T)
    assert np.allclose(mdp_bound(m), m.rewards.max(axis=1))


def test_geometric_series():
    m = PomdpModel([np.eye(1)], [np.ones((1, 1))], np.ones((1, 1)), 0.95)
    assert mdp_bound(m)[0] == pytest.approx(20.0)


def test_single_action_qmdp_equals_mdp(rng):
    m = random_model(rng, 5, 1, 2, 0.9)
    V = mdp_bound(m)
    q = qmdp_bound(m)
    for b in rng.dirichlet(np.ones(5), 20):
        assert q.value(dense_belief(b)) == pytest.approx(b @ V, abs=1e-6)


def test_fully_observable_fib_equals_qmdp(rng):
    # with O = I each observation pins s', so max over vectors commutes with the sum
    m = random_model(rng, 5, 3, 5, 0.9)
    eye = [np.eye(5) for _ in range(3)]
    full = PomdpModel(m.transitions, eye, m.rewards, m.discount)
    assert np.allclose(fib_bound(full).matrix, qmdp_bound(full).matrix, atol=1e-6)


def test_single_observation_fib_is_no_looser_than_qmdp(rng):
    m = random_model(rng, 5, 3, 1, 0.9)
    fib, qmdp = fib_bound(m), qmdp_bound(m)
    assert np.all(fib.matrix <= qmdp.matrix + 1e-6)


def test_evaluate_alpha_set_examples():
    s = AlphaVectorSet([[1.0, 0.0], [0.0, 1.0]], [4, 7], "upper")
    assert evaluate_alpha_set(s, Belief([0, 1], [0.4, 0.6])) == (pytest.approx(0.6), 7)
    single = AlphaVectorSet([[2.0, 3.0]], [1], "lower")
    assert evaluate_alpha_set(single, Belief([0, 1], [0.5, 0.5])) == (pytest.approx(2.5), 1)
    tied = AlphaVectorSet([[1.0, 1.0], [1.0, 1.0]], [3, 0], "lower")
    assert evaluate_alpha_set(tied, Belief.point(0))[1] == 3


def test_alpha_set_rejects_bad_input():
    with pytest.raises(ValueError):
        AlphaVectorSet(np.zeros((0, 2)), [], "lower")
    with pytest.raises(ValueError):
        AlphaVectorSet([[np.nan]], [0], "lower")
    with pytest.raises(ValueError):
        AlphaVectorSet([[1.0]], [0], "middle")


def test_serialization_round_trip(rng):
    s = AlphaVectorSet(rng.normal(size=(4, 6)) * 1e3, [0, 2, 1, 2], "upper")
    text = format_alpha_set(s)
    assert text.splitlines()[0] == "alpha-set upper 4 6"
    back = parse_alpha_set(text)
    assert back.kind == "upper"
    assert np.array_equal(back.matrix, s.matrix)
    assert back.actions.tolist() == s.actions.tolist()


def test_pbvi_without_iterations():
    m = PomdpModel([np.eye(2)], [np.ones((2, 1))], np.array([[1.0], [-3.0]]), 0.5)
    out = pbvi_bound(m, num_beliefs=1, num_iterations=0, seed=0)
    assert len(out) == 1
    assert np.allclose(out.matrix, -6.0)


def test_pbvi_on_tag_reaches_blind_from_below():
    d = build_tag()
    b0 = d.dynamics.initial_belief
    blind = blind_bound(d.model).value(b0)
    floor = d.model.rewards.min() / (1 - d.model.discount)
    short = pbvi_bound(d.model, num_beliefs=32, num_iterations=20, seed=0, dynamics=d.dynamics)
    assert len(short) <= 32
    # twenty backups cannot lift the -200 initial vector past Blind's -20
    assert floor <= short.value(b0) < blind
    long = pbvi_bound(d.model, num_beliefs=32, num_iterations=400, seed=0, dynamics=d.dynamics)
    assert long.value(b0) >= blind - 1e-6


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_sandwich_and_residuals(seed):
    rng = np.random.default_rng(seed)
    S, A, Z = int(rng.integers(2, 7)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
    m = random_model(rng, S, A, Z, 0.9)
    g = m.discount
    bl, q, f = blind_bound(m), qmdp_bound(m), fib_bound(m)
    V, mres = mdp_bound_with_trace(m)
    p = pbvi_bound(m, num_beliefs=10, num_iterations=15, seed=seed)
    B = rng.dirichlet(np.ones(S), 100)
    vb, vf, vq, vm, vp = bl.evaluate_dense(B), f.evaluate_dense(B), q.evaluate_dense(B), B @ V, p.evaluate_dense(B)
    assert np.all(vb <= vf + 1e-6)
    assert np.all(vf <= vq + 1e-6)
    assert np.all(vq <= vm + 1e-6)
    assert np.all(vp <= vm + 1e-6)
    for res in (bl.residuals, mres, f.residuals):
        for r0, r1 in zip(res[1:], res[2:]):
            assert r1 <= g * r0 + 1e-12
    # convexity of the max-of-linear form
    lam = rng.random()
    mix = lam * B[0] + (1 - lam) * B[1]
    for s in (bl, f, p):
        assert s.evaluate_dense(mix)[0] <= lam * s.evaluate_dense(B[0])[0] + (1 - lam) * s.evaluate_dense(B[1])[0] + 1e-9


def test_bounds_bracket_exact_values(rng):
    D = 14
    for _ in range(10):
        S, A, Z = int(rng.integers(2, 6)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
        m = random_model(rng, S, A, Z, 0.9)
        Vd = exact_value_sets(m, D)[-1]
        lo, hi = m.reward_range()
        slack = 0.9**D * (hi - lo) / 0.1
        B = rng.dirichlet(np.ones(S), 50)
        exact = (B @ Vd.T).max(axis=1)
        assert np.all(blind_bound(m).evaluate_dense(B) <= exact + slack)
        assert np.all(exact <= fib_bound(m).evaluate_dense(B) + slack)
        assert np.all(exact <= B @ mdp_bound(m) + slack)


def test_state_value_wrapper():
    s = state_value_bound([1.0, 3.0], "upper")
    assert s.evaluate(Belief([0, 1], [0.5, 0.5])) == (pytest.approx(2.0), -1)
