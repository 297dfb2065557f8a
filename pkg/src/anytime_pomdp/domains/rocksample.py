"""RockSample[n, k] and FieldVisionRockSample[n, k].

States are ``pos * 2**k + mask`` with ``pos = x * n + y`` and bit ``i`` of
``mask`` set when rock ``i`` is good; the single absorbing exit state is
``n * n * 2**k``.  Actions are North (y+1), South, East, West, Sample and,
for RockSample only, ``Check_i`` for each rock.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..core import DROP_TOL, Belief, PomdpModel
from ..errors import InvalidLayout, ZeroProbabilityObservation

NORTH, SOUTH, EAST, WEST, SAMPLE = range(5)
MOVES = {NORTH: (0, 1), SOUTH: (0, -1), EAST: (1, 0), WEST: (-1, 0)}
GOOD, BAD = 0, 1


def rock_sensor_accuracy(agent_pos, rock_pos, d0: float) -> float:
    """Probability that a rock reading is correct: ``(1 + 2**(-d/d0)) / 2``."""
    if not d0 > 0:
        raise ValueError("half efficiency distance must be positive")
    d = math.dist(agent_pos, rock_pos)
    return (1.0 + 2.0 ** (-d / d0)) / 2.0


def fvrs_half_efficiency_distance(n: int) -> float:
    return (n - 1) * math.sqrt(2.0) / 4.0


@dataclass(frozen=True)
class RockSampleSpec:
    grid_size: int
    rock_positions: tuple
    half_efficiency_distance: float = 20.0
    sample_good: float = 10.0
    sample_bad: float = -10.0
    exit_reward: float = 10.0
    illegal_sample: float = -100.0
    discount: float = 0.95
    start: tuple | None = None
    field_vision: bool = False

    def __post_init__(self):
        n = self.grid_size
        rocks = tuple(tuple(int(c) for c in r) for r in self.rock_positions)
        object.__setattr__(self, "rock_positions", rocks)
        if n < 1:
            raise InvalidLayout("grid size must be >= 1")
        if len(rocks) < 1:
            raise InvalidLayout("need at least one rock")
        for x, y in rocks:
            if not (0 <= x < n and 0 <= y < n):
                raise InvalidLayout(f"rock ({x}, {y}) lies outside the {n}x{n} grid")
        if len(set(rocks)) != len(rocks):
            raise InvalidLayout("two rocks share a cell")
        if not self.half_efficiency_distance > 0:
            raise InvalidLayout("half efficiency distance must be positive")
        if self.start is None:
            object.__setattr__(self, "start", (0, n // 2))

    @property
    def num_rocks(self) -> int:
        return len(self.rock_positions)


class RockBelief:
    """Known robot position plus independent good-probabilities per rock."""

    __slots__ = ("pos", "probs", "_key", "_support", "_base")
    realization = "rocksample"

    def __init__(self, pos: int, probs, base: int):
        self.pos = int(pos)
        probs = np.asarray(probs, dtype=float)
        probs.flags.writeable = False
        self.probs = probs
        self._base = base  # id of the exit state, i.e. n*n*2**k
        self._key = None
        self._support = None

    @property
    def terminal(self) -> bool:
        return self.pos < 0

    def support(self):
        if self._support is None:
            self._support = self._flat_support()
        return self._support

    def _flat_support(self):
        if self.terminal:
            return np.array([self._base], dtype=np.int64), np.array([1.0])
        p = self.probs
        k = len(p)
        uncertain = np.flatnonzero((p > 0) & (p < 1))
        fixed = int(sum(1 << i for i in range(k) if p[i] >= 1))
        m = len(uncertain)
        combos = np.arange(1 << m, dtype=np.int64)
        bits = (combos[:, None] >> np.arange(m)) & 1
        pu = p[uncertain]
        w = np.prod(np.where(bits == 1, pu, 1.0 - pu), axis=1) if m else np.ones(1)
        masks = fixed + (bits << uncertain).sum(axis=1) if m else np.array([fixed], dtype=np.int64)
        states = self.pos * (1 << k) + masks
        order = np.argsort(states)
        states, w = states[order], w[order]
        keep = w >= DROP_TOL
        if not keep.all():
            states, w = states[keep], w[keep]
        return states, w / w.sum()

    def to_flat(self) -> Belief:
        return Belief._raw(*self.support())

    def key(self):
        if self._key is None:
            self._key = ("rock", self.pos, tuple(self.probs.tolist()))
        return self._key

    def __eq__(self, other):
        if not hasattr(other, "key"):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        if self.terminal:
            return "RockBelief(exit)"
        return f"RockBelief(pos={self.pos}, probs={np.round(self.probs, 4).tolist()})"


def _geometry(spec: RockSampleSpec):
    n = spec.grid_size
    cells = np.arange(n * n)
    xs, ys = cells // n, cells % n
    rocks = np.array(spec.rock_positions)
    dist = np.hypot(xs[:, None] - rocks[None, :, 0], ys[:, None] - rocks[None, :, 1])
    acc = (1.0 + 2.0 ** (-dist / spec.half_efficiency_distance)) / 2.0
    rock_at = np.full(n * n, -1)
    for i, (x, y) in enumerate(spec.rock_positions):
        rock_at[x * n + y] = i
    return xs, ys, acc, rock_at


def _move(spec: RockSampleSpec, pos: np.ndarray, a: int):
    """Next cell for move ``a``; ``-1`` marks leaving through the east edge."""
    n = spec.grid_size
    x, y = pos // n, pos % n
    dx, dy = MOVES[a]
    nx, ny = x + dx, y + dy
    exited = nx >= n
    inside = (nx >= 0) & (nx < n) & (ny >= 0) & (ny < n)
    out = np.where(inside, nx * n + ny, pos)
    return np.where(exited, -1, out)


def build_model(spec: RockSampleSpec) -> PomdpModel:
    n, k = spec.grid_size, spec.num_rocks
    M = 1 << k
    N = n * n * M
    S = N + 1
    term = N
    fv = spec.field_vision
    A = 5 if fv else 5 + k
    Z = M if fv else 2
    _, _, acc, rock_at = _geometry(spec)

    s = np.arange(N, dtype=np.int64)
    pos, mask = s // M, s % M
    rewards = np.zeros((S, A))
    transitions = []
    for a in range(A):
        if a in MOVES:
            np_ = _move(spec, pos, a)
            nxt = np.where(np_ < 0, term, np_ * M + mask)
            if a == EAST:
                rewards[:N, a] = np.where(np_ < 0, spec.exit_reward, 0.0)
        elif a == SAMPLE:
            r = rock_at[pos]
            on_rock = r >= 0
            bit = np.where(on_rock, 1 << np.maximum(r, 0), 0)
            good = (mask & bit) != 0
            nxt = np.where(on_rock, pos * M + (mask & ~bit), s)
            rewards[:N, a] = np.where(on_rock, np.where(good, spec.sample_good, spec.sample_bad), spec.illegal_sample)
        else:
            nxt = s
        rows = np.append(s, term)
        cols = np.append(nxt, term)
        transitions.append(sp.csr_matrix((np.ones(S), (rows, cols)), shape=(S, S)))

    observations = []
    if fv:
        zs = np.arange(M)
        zbits = (zs[None, :] >> np.arange(k)[:, None]) & 1  # k x Z
        sbits = (mask[:, None] >> np.arange(k)) & 1  # N x k
        O = np.ones((N, M))
        for i in range(k):
            a_i = acc[pos, i][:, None]
            match = zbits[i][None, :] == sbits[:, i][:, None]
            O *= np.where(match, a_i, 1.0 - a_i)
        O = np.vstack([O, np.eye(1, M)])
        Om = sp.csr_matrix(O)
        observations = [Om] * A
    else:
        base = np.zeros((S, 2))
        base[:, GOOD] = 1.0
        base_m = sp.csr_matrix(base)
        for a in range(A):
            if a < 5:
                observations.append(base_m)
                continue
            i = a - 5
            a_i = acc[pos, i]
            good = ((mask >> i) & 1) == 1
            p_good = np.where(good, a_i, 1.0 - a_i)
            O = np.zeros((S, 2))
            O[:N, GOOD] = p_good
            O[:N, BAD] = 1.0 - p_good
            O[term, GOOD] = 1.0
            observations.append(sp.csr_matrix(O))

    x0, y0 = spec.start
    start_pos = x0 * n + y0
    b0 = Belief._raw(start_pos * M + np.arange(M, dtype=np.int64), np.full(M, 1.0 / M))
    names = ["north", "south", "east", "west", "sample"] + ([] if fv else [f"check{i}" for i in range(k)])
    return PomdpModel(
        transitions,
        observations,
        rewards,
        spec.discount,
        initial_belief=b0,
        terminal_states=[term],
        action_names=names,
        validate=True,
    )


class RockSampleDynamics:
    """Exact factored belief dynamics for RockSample and FieldVisionRockSample."""

    def __init__(self, spec: RockSampleSpec, model: PomdpModel):
        self.spec = spec
        self.model = model
        self.n = spec.grid_size
        self.k = spec.num_rocks
        self.discount = spec.discount
        self.num_actions = model.num_actions
        self.num_observations = model.num_observations
        self.base = self.n * self.n * (1 << self.k)
        _, _, self.acc, self.rock_at = _geometry(spec)
        x0, y0 = spec.start
        self._initial = RockBelief(x0 * self.n + y0, np.full(self.k, 0.5), self.base)
        self._terminal = RockBelief(-1, np.zeros(self.k), self.base)
        if spec.field_vision:
            zs = np.arange(1 << self.k)
            self._zbits = ((zs[:, None] >> np.arange(self.k)) & 1).astype(bool)  # Z x k

    @property
    def initial_belief(self) -> RockBelief:
        return self._initial

    def belief_at(self, x: int, y: int, probs) -> RockBelief:
        return RockBelief(x * self.n + y, probs, self.base)

    def is_terminal(self, b) -> bool:
        return b.terminal

    def _act(self, b, a):
        """Reward, next position and prior rock probabilities after ``a``."""
        if a in MOVES:
            nxt = int(_move(self.spec, np.array([b.pos]), a)[0])
            reward = self.spec.exit_reward if nxt < 0 else 0.0
            return reward, nxt, b.probs
        if a == SAMPLE:
            r = self.rock_at[b.pos]
            if r < 0:
                return self.spec.illegal_sample, b.pos, b.probs
            p = b.probs[r]
            reward = p * self.spec.sample_good + (1.0 - p) * self.spec.sample_bad
            probs = b.probs.copy()
            probs[r] = 0.0
            return reward, b.pos, probs
        return 0.0, b.pos, b.probs

    def belief_reward(self, b, a: int) -> float:
        if b.terminal:
            return 0.0
        return float(self._act(b, a)[0])

    def successors(self, b, a: int):
        if b.terminal:
            return 0.0, [(0, 1.0, b)]
        reward, pos, probs = self._act(b, a)
        if pos < 0:
            return float(reward), [(0, 1.0, self._terminal)]
        if self.spec.field_vision:
            return float(reward), self._field_children(pos, probs)
        if a < 5:
            child = b if (pos == b.pos and probs is b.probs) else RockBelief(pos, probs, self.base)
            return float(reward), [(GOOD, 1.0, child)]
        i = a - 5
        acc, p = self.acc[pos, i], probs[i]
        out = []
        for z, like_good, like_bad in ((GOOD, acc, 1.0 - acc), (BAD, 1.0 - acc, acc)):
            pz = p * like_good + (1.0 - p) * like_bad
            if pz > 0:
                post = probs.copy()
                post[i] = p * like_good / pz
                out.append((z, float(pz), RockBelief(pos, post, self.base)))
        return float(reward), out

    def _field_children(self, pos, probs):
        acc = self.acc[pos]
        q1 = probs * acc + (1.0 - probs) * (1.0 - acc)  # chance each bit reads good
        like = np.where(self._zbits, q1, 1.0 - q1)  # Z x k
        pz = np.prod(like, axis=1)
        post_good = probs * acc / np.where(q1 > 0, q1, 1.0)
        post_bad = probs * (1.0 - acc) / np.where(q1 < 1, 1.0 - q1, 1.0)
        out = []
        for z in np.flatnonzero(pz > 0).tolist():
            post = np.where(self._zbits[z], post_good, post_bad)
            out.append((z, float(pz[z]), RockBelief(pos, post, self.base)))
        return out

    def observation_distribution(self, b, a: int) -> np.ndarray:
        out = np.zeros(self.num_observations)
        for z, p, _ in self.successors(b, a)[1]:
            out[z] = p
        return out

    def observation_probability(self, b, a: int, z: int) -> float:
        return float(self.observation_distribution(b, a)[z])

    def belief_update(self, b, a: int, z: int):
        for zz, _, child in self.successors(b, a)[1]:
            if zz == z:
                return child
        raise ZeroProbabilityObservation(f"Pr(z={z} | b, a={a}) = 0")

    def discretize(self, b, k: int):
        """Per-rock rounding to the 1/k grid; the position is kept exactly."""
        if k < 1:
            raise ValueError("discretization resolution must be >= 1")
        return ("rock", b.pos, tuple((np.floor(b.probs * k + 0.5) / k).tolist()))

    def state_for(self, x: int, y: int, mask: int) -> int:
        return (x * self.n + y) * (1 << self.k) + mask
