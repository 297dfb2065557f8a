import math

import numpy as np
import pytest

from anytime_pomdp.core import Belief, Environment, discounted_return, validate_model
from anytime_pomdp.domains import (
    build_fvrs,
    build_rocksample,
    build_tag,
    canonical_layout,
    parse_domain,
    random_layout,
    rock_sensor_accuracy,
)
from anytime_pomdp.domains.rocksample import EAST, RockSampleSpec
from anytime_pomdp.domains.tag import CELLS, SAME, TAG, TAGGED, opponent_moves
from anytime_pomdp.errors import ConfigError, InvalidLayout


def dense(b, S):
    states, probs = b.support()
    out = np.zeros(S)
    out[states] = probs
    return out


@pytest.fixture(scope="module")
def rs44():
    return build_rocksample(4, 4, [(0, 0), (1, 3), (2, 1), (3, 2)])


@pytest.fixture(scope="module")
def fv32():
    return build_fvrs(3, 2, [(0, 0), (2, 2)])


@pytest.fixture(scope="module")
def tag():
    return build_tag()


@pytest.mark.parametrize(
    "build, dims",
    [
        (lambda: build_rocksample(7, 8), (12545, 13, 2)),
        (lambda: build_rocksample(10, 10), (102401, 15, 2)),
        (lambda: build_fvrs(5, 5), (801, 5, 32)),
        (lambda: build_fvrs(5, 7), (3201, 5, 128)),
        (build_tag, (870, 5, 30)),
    ],
    ids=["rs7_8", "rs10_10", "fvrs5_5", "fvrs5_7", "tag"],
)
def test_dimensions(build, dims):
    m = build().model
    assert (m.num_states, m.num_actions, m.num_observations) == dims
    assert m.discount == 0.95


def test_generated_models_validate(rs44, fv32, tag):
    for d in (rs44, fv32, tag):
        validate_model(d.model)


def test_sensor_accuracy():
    assert rock_sensor_accuracy((2, 2), (2, 2), 3.0) == 1.0
    assert rock_sensor_accuracy((0, 0), (3, 4), 5.0) == pytest.approx(0.75)
    assert rock_sensor_accuracy((0, 0), (0, 50), 5.0) <= 0.5005
    accs = [rock_sensor_accuracy((0, 0), (0, d), 2.0) for d in range(10)]
    assert all(a > b for a, b in zip(accs, accs[1:]))
    with pytest.raises(ValueError):
        rock_sensor_accuracy((0, 0), (1, 1), 0.0)


def test_fvrs_default_half_efficiency_distance(fv32):
    assert fv32.spec.half_efficiency_distance == pytest.approx(2 * math.sqrt(2) / 4)


def test_blind_east_return_on_rs7_8():
    d = build_rocksample(7, 8)
    env = Environment(d.model, state=d.start_states[0], seed=0)
    rewards = []
    while not env.is_terminal:
        rewards.append(env.step(EAST)[1])
    assert len(rewards) == 7
    assert discounted_return(rewards, 0.95) == pytest.approx(10 * 0.95**6)
    assert discounted_return(rewards, 0.95) == pytest.approx(7.351, abs=1e-3)


def _check_equivalence(domain, rng, sequences, length):
    dyn, m = domain.dynamics, domain.model
    S = m.num_states
    for _ in range(sequences):
        b = dyn.initial_belief
        for _ in range(length):
            if dyn.is_terminal(b):
                break
            a = int(rng.integers(m.num_actions))
            flat = b.to_flat()
            assert dyn.belief_reward(b, a) == pytest.approx(m.belief_reward(flat, a), abs=1e-9)
            r_f, kids_f = dyn.successors(b, a)
            r_m, kids_m = m.successors(flat, a)
            assert r_f == pytest.approx(r_m, abs=1e-9)
            probs_m = {z: p for z, p, _ in kids_m}
            assert {z for z, _, _ in kids_f} == set(probs_m)
            for z, p, child in kids_f:
                assert p == pytest.approx(probs_m[z], abs=1e-9)
                assert np.abs(dense(child, S) - dense(m.belief_update(flat, a, z), S)).max() < 1e-9
            i = int(rng.integers(len(kids_f)))
            b = kids_f[i][2]


def test_rocksample_factored_matches_flat(rs44):
    _check_equivalence(rs44, np.random.default_rng(0), 1000, 4)


def test_fvrs_factored_matches_flat(fv32):
    _check_equivalence(fv32, np.random.default_rng(1), 1000, 4)


def test_tag_factored_matches_flat(tag):
    _check_equivalence(tag, np.random.default_rng(2), 40, 4)


def test_tag_update_after_move_not_same_cell(tag):
    dyn, m = tag.dynamics, tag.model
    r = CELLS.index((3, 0))
    joint = np.zeros((1, 30))
    joint[0, :29] = 1 / 29
    b = type(dyn.initial_belief)(np.array([r]), joint)
    z = CELLS.index((3, 1))
    child = dyn.belief_update(b, 0, z)
    flat = m.belief_update(b.to_flat(), 0, z)
    assert np.abs(dense(child, m.num_states) - dense(flat, m.num_states)).max() < 1e-9
    assert child.robots.tolist() == [z]


def test_fvrs_all_correct_observation_factorizes(fv32):
    m, dyn = fv32.model, fv32.dynamics
    for x, y, mask in [(0, 1, 0b00), (1, 1, 0b01), (2, 0, 0b11), (1, 2, 0b10)]:
        s = dyn.state_for(x, y, mask)
        accs = [rock_sensor_accuracy((x, y), r, fv32.spec.half_efficiency_distance) for r in fv32.spec.rock_positions]
        row = m.observation_matrix(0)[s]
        assert row[mask] == pytest.approx(np.prod(accs), abs=1e-12)
        # joint probability is the product of per-bit marginals
        for z in range(4):
            bits = [(z >> i) & 1 == (mask >> i) & 1 for i in range(2)]
            expect = np.prod([a if ok else 1 - a for a, ok in zip(accs, bits)])
            assert row[z] == pytest.approx(expect, abs=1e-12)


def test_rocksample_sample_and_exit(rs44):
    m, dyn = rs44.model, rs44.dynamics
    s = dyn.state_for(1, 3, 0b0010)
    assert m.rewards[s, 4] == 10.0
    assert m.transitions[4][s].nonzero()[1].tolist() == [dyn.state_for(1, 3, 0)]
    assert m.rewards[dyn.state_for(1, 3, 0), 4] == -10.0
    assert m.rewards[dyn.state_for(0, 1, 0), 4] == -100.0
    assert m.rewards[dyn.state_for(3, 1, 0), EAST] == 10.0
    assert m.transitions[EAST][dyn.state_for(3, 1, 0)].nonzero()[1].tolist() == [m.num_states - 1]


def test_rocksample_initial_belief(rs44):
    b0 = rs44.dynamics.initial_belief
    assert b0.pos == 0 * 4 + 2
    assert np.allclose(b0.probs, 0.5)
    states, probs = b0.support()
    assert len(states) == 16 and np.allclose(probs, 1 / 16)


def test_tag_colocated_tag_is_terminal(tag):
    m = tag.model
    r = CELLS.index((6, 3))
    s = r * 30 + r
    assert m.rewards[s, TAG] == 10.0
    nxt = m.transitions[TAG][s].nonzero()[1].tolist()
    assert nxt == [r * 30 + TAGGED]
    assert m.is_terminal_state(nxt[0])
    assert m.observation_matrix(TAG)[nxt[0], SAME] == 1.0
    assert m.rewards[r * 30 + (r + 1) % 29, TAG] == -10.0


def test_tag_initial_belief_uniform(tag):
    states, probs = tag.model.initial_belief.support()
    assert len(states) == 841 and np.allclose(probs, 1 / 841)
    assert np.abs(dense(tag.dynamics.initial_belief, 870) - dense(tag.model.initial_belief, 870)).max() < 1e-12


def test_opponent_moves_away():
    r, o = CELLS.index((0, 0)), CELLS.index((2, 0))
    dist = opponent_moves(r, o)
    assert sum(dist.values()) == pytest.approx(1.0)
    assert dist[o] == pytest.approx(0.2)
    # east, north and south(blocked): east and north share the 0.8
    assert dist[CELLS.index((3, 0))] == pytest.approx(0.4)
    assert dist[CELLS.index((2, 1))] == pytest.approx(0.4)


def test_invalid_layouts():
    with pytest.raises(InvalidLayout):
        RockSampleSpec(4, ((4, 0),))
    with pytest.raises(InvalidLayout):
        RockSampleSpec(4, ((1, 1), (1, 1)))
    with pytest.raises(InvalidLayout):
        RockSampleSpec(4, ())
    with pytest.raises(InvalidLayout):
        RockSampleSpec(4, ((1, 1),), half_efficiency_distance=0)
    with pytest.raises(InvalidLayout):
        build_rocksample(4, 2, [(1, 1)])
    with pytest.raises(InvalidLayout):
        canonical_layout("rocksample", 9, 3)


def test_parse_domain_selectors(tmp_path):
    assert parse_domain("tag").name == "tag"
    assert parse_domain("rocksample:5,5").model.num_states == 25 * 32 + 1
    path = tmp_path / "rocks.txt"
    path.write_text("# two rocks\n0 0\n2 1\n")
    d = parse_domain("rocksample:3,2", path)
    assert d.spec.rock_positions == ((0, 0), (2, 1))
    for bad in ["grid", "rocksample:3", "rocksample:a,b", "fvrs:0,1", "rocksample:9,3"]:
        with pytest.raises(ConfigError):
            parse_domain(bad)
    path.write_text("0 0\n9 9\n")
    with pytest.raises(ConfigError):
        parse_domain("rocksample:3,2", path)


def test_random_layout_is_seeded_and_valid():
    a = random_layout(5, 6, seed=3)
    assert a == random_layout(5, 6, seed=3)
    assert len(set(a)) == 6 and (0, 2) not in a
    RockSampleSpec(5, tuple(a))


def test_start_states_enumerate_rock_masks(rs44, tag):
    assert len(rs44.start_states) == 16
    assert len(tag.start_states) == 841
    b0 = Belief(rs44.start_states, np.ones(16))
    assert b0 == rs44.model.initial_belief
