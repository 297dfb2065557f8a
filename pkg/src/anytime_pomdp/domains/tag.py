"""Tag: catch an opponent that moves away in a 29-cell grid.

Cells are the 10x2 strip ``y in {0, 1}`` plus the 3x3 block ``x in {5, 6, 7}``,
``y in {2, 3, 4}``, numbered in ``(y, x)`` order.  State ``r * 30 + o`` puts
the robot in cell ``r`` and the opponent in cell ``o``; ``o = 29`` means the
opponent has been tagged (absorbing).  Observation ``z < 29`` reports the
robot's own cell, ``z = 29`` that both agents share a cell.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..core import DROP_TOL, Belief, PomdpModel
from ..errors import ZeroProbabilityObservation

NORTH, SOUTH, EAST, WEST, TAG = range(5)
MOVES = {NORTH: (0, 1), SOUTH: (0, -1), EAST: (1, 0), WEST: (-1, 0)}
TAGGED = 29
SAME = 29
NUM_CELLS = 29
NUM_POSITIONS = 30

CELLS = sorted(
    [(x, y) for y in (0, 1) for x in range(10)] + [(x, y) for y in (2, 3, 4) for x in (5, 6, 7)],
    key=lambda c: (c[1], c[0]),
)
CELL_INDEX = {c: i for i, c in enumerate(CELLS)}


def _neighbor(cell: int, a: int) -> int:
    x, y = CELLS[cell]
    dx, dy = MOVES[a]
    return CELL_INDEX.get((x + dx, y + dy), cell)


def opponent_moves(robot: int, opponent: int, p_move: float = 0.8):
    """Distribution over the opponent's next cell given the robot's current cell."""
    rx, ry = CELLS[robot]
    ox, oy = CELLS[opponent]
    dx, dy = ox - rx, oy - ry
    dirs = []
    if dx >= 0:
        dirs.append(EAST)
    if dx <= 0:
        dirs.append(WEST)
    if dy >= 0:
        dirs.append(NORTH)
    if dy <= 0:
        dirs.append(SOUTH)
    targets = [
        CELL_INDEX[(ox + MOVES[d][0], oy + MOVES[d][1])]
        for d in dirs
        if (ox + MOVES[d][0], oy + MOVES[d][1]) in CELL_INDEX
    ]
    if not targets:
        return {opponent: 1.0}
    out = {opponent: 1.0 - p_move}
    for t in targets:
        out[t] = out.get(t, 0.0) + p_move / len(targets)
    return out


def _opponent_matrices(p_move: float):
    """``moves[r]``: 30x30 opponent kernel when the robot stands in ``r``."""
    moves = np.zeros((NUM_CELLS, NUM_POSITIONS, NUM_POSITIONS))
    for r in range(NUM_CELLS):
        for o in range(NUM_CELLS):
            for o2, p in opponent_moves(r, o, p_move).items():
                moves[r, o, o2] += p
        moves[r, TAGGED, TAGGED] = 1.0
    tags = moves.copy()
    for r in range(NUM_CELLS):
        tags[r, r, :] = 0.0
        tags[r, r, TAGGED] = 1.0
    return moves, tags


class TagBelief:
    """Joint robot/opponent belief stored per robot cell.

    ``robots`` lists the robot cells with positive mass and ``joint`` holds one
    row of 30 opponent probabilities per listed cell (rows sum to the robot
    cell's weight).  Once the robot position is observed there is one row.
    """

    __slots__ = ("robots", "joint", "_key", "_support")
    realization = "tag"

    def __init__(self, robots, joint):
        robots = np.asarray(robots, dtype=np.int64)
        joint = np.asarray(joint, dtype=float)
        robots.flags.writeable = False
        joint.flags.writeable = False
        self.robots = robots
        self.joint = joint
        self._key = None
        self._support = None

    @classmethod
    def from_joint(cls, robots, joint):
        """Normalize, apply the drop tolerance and discard empty robot rows."""
        joint = joint / joint.sum()
        if np.any((joint > 0) & (joint < DROP_TOL)):
            joint = np.where(joint < DROP_TOL, 0.0, joint)
            joint = joint / joint.sum()
        keep = joint.sum(axis=1) > 0
        return cls(np.asarray(robots)[keep], joint[keep])

    @property
    def terminal(self) -> bool:
        return bool(np.all(self.joint[:, :TAGGED] == 0))

    def support(self):
        if self._support is None:
            rows, cols = np.nonzero(self.joint)
            states = self.robots[rows] * NUM_POSITIONS + cols
            self._support = (states.astype(np.int64), self.joint[rows, cols])
        return self._support

    def to_flat(self) -> Belief:
        return Belief._raw(*self.support())

    def key(self):
        if self._key is None:
            states, probs = self.support()
            self._key = ("tag", tuple(states.tolist()), tuple(probs.tolist()))
        return self._key

    def __eq__(self, other):
        if not hasattr(other, "key"):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"TagBelief(robots={self.robots.tolist()})"


def build_model(discount: float = 0.95, p_move: float = 0.8, move_reward: float = -1.0,
                tag_reward: float = 10.0, tag_penalty: float = -10.0) -> PomdpModel:
    moves, tags = _opponent_matrices(p_move)
    S = NUM_CELLS * NUM_POSITIONS
    A = 5
    rewards = np.zeros((S, A))
    transitions, observations = [], []
    obs = np.zeros((S, NUM_POSITIONS))
    for r in range(NUM_CELLS):
        for o in range(NUM_POSITIONS):
            s = r * NUM_POSITIONS + o
            obs[s, SAME if o in (r, TAGGED) else r] = 1.0
            if o == TAGGED:
                continue
            rewards[s, :4] = move_reward
            rewards[s, TAG] = tag_reward if o == r else tag_penalty
    obs_m = sp.csr_matrix(obs)
    for a in range(A):
        rows, cols, vals = [], [], []
        kernel = tags if a == TAG else moves
        for r in range(NUM_CELLS):
            r2 = r if a == TAG else _neighbor(r, a)
            for o in range(NUM_POSITIONS):
                for o2 in np.flatnonzero(kernel[r, o]):
                    rows.append(r * NUM_POSITIONS + o)
                    cols.append(r2 * NUM_POSITIONS + o2 if o != TAGGED else r * NUM_POSITIONS + TAGGED)
                    vals.append(kernel[r, o, o2])
        transitions.append(sp.csr_matrix((vals, (rows, cols)), shape=(S, S)))
        observations.append(obs_m)
    live = [r * NUM_POSITIONS + o for r in range(NUM_CELLS) for o in range(NUM_CELLS)]
    terminal = [r * NUM_POSITIONS + TAGGED for r in range(NUM_CELLS)]
    return PomdpModel(
        transitions,
        observations,
        rewards,
        discount,
        initial_belief=Belief.uniform(live),
        terminal_states=terminal,
        action_names=["north", "south", "east", "west", "tag"],
        validate=True,
    )


class TagDynamics:
    """Exact belief dynamics that keep the robot/opponent structure explicit."""

    def __init__(self, model: PomdpModel, p_move: float = 0.8, move_reward: float = -1.0,
                 tag_reward: float = 10.0, tag_penalty: float = -10.0):
        self.model = model
        self.discount = model.discount
        self.num_actions = 5
        self.num_observations = NUM_POSITIONS
        self.moves, self.tags = _opponent_matrices(p_move)
        self.move_reward = move_reward
        self.tag_reward = tag_reward
        self.tag_penalty = tag_penalty
        self.next_cell = np.array([[_neighbor(r, a) if a != TAG else r for a in range(5)] for r in range(NUM_CELLS)])
        joint = np.zeros((NUM_CELLS, NUM_POSITIONS))
        joint[:, :NUM_CELLS] = 1.0 / (NUM_CELLS * NUM_CELLS)
        self._initial = TagBelief(np.arange(NUM_CELLS), joint)

    @property
    def initial_belief(self) -> TagBelief:
        return self._initial

    def is_terminal(self, b) -> bool:
        return b.terminal

    def belief_reward(self, b, a: int) -> float:
        live = b.joint[:, :TAGGED].sum()
        if a != TAG:
            return float(self.move_reward * live)
        on = b.joint[np.arange(len(b.robots)), b.robots].sum()
        return float(self.tag_reward * on + self.tag_penalty * (live - on))

    def _predict(self, b, a):
        kernel = self.tags if a == TAG else self.moves
        r2 = self.next_cell[b.robots, a]
        pred = np.einsum("ro,rop->rp", b.joint, kernel[b.robots])
        # merge rows that land on the same robot cell
        cells, inv = np.unique(r2, return_inverse=True)
        merged = np.zeros((len(cells), NUM_POSITIONS))
        np.add.at(merged, inv, pred)
        return cells, merged

    def successors(self, b, a: int):
        reward = self.belief_reward(b, a)
        cells, pred = self._predict(b, a)
        idx = np.arange(len(cells))
        same = pred.copy()
        keep_same = np.zeros_like(pred, dtype=bool)
        keep_same[idx, cells] = True
        keep_same[:, TAGGED] = True
        same[~keep_same] = 0.0
        other = pred - same
        children = []
        for i in range(len(cells)):
            p = float(other[i].sum())
            if p > 0:
                children.append((int(cells[i]), p, TagBelief.from_joint(cells[i:i + 1], other[i:i + 1])))
        p_same = float(same.sum())
        if p_same > 0:
            children.append((SAME, p_same, TagBelief.from_joint(cells, same)))
        children.sort(key=lambda c: c[0])
        return reward, children

    def observation_distribution(self, b, a: int) -> np.ndarray:
        out = np.zeros(NUM_POSITIONS)
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
        if k < 1:
            raise ValueError("discretization resolution must be >= 1")
        states, probs = b.support()
        rounded = np.floor(probs * k + 0.5) / k
        keep = rounded > 0
        return ("tag",) + tuple(zip(states[keep].tolist(), rounded[keep].tolist()))
