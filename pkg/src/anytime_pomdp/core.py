"""POMDP model, flat sparse beliefs and the exact belief-MDP primitives.

Every belief realization (the flat one here, the factored ones in
:mod:`anytime_pomdp.domains`) is driven through the same small set of
methods on a *dynamics* object:

``belief_update(b, a, z)``, ``observation_probability(b, a, z)``,
``observation_distribution(b, a)``, ``belief_reward(b, a)``,
``successors(b, a)``, ``is_terminal(b)``, ``discretize(b, k)`` and
``initial_belief``.  Beliefs themselves expose ``support()`` returning the
flat ``(state_ids, probabilities)`` pair, which is all the bound functions
need.  :class:`PomdpModel` is the flat dynamics object.
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import TerminalState, ValidationError, ZeroProbabilityObservation

DROP_TOL = 1e-12
STOCHASTIC_TOL = 1e-9


def _normalize(states, probs):
    total = probs.sum()
    probs = probs / total
    keep = probs >= DROP_TOL
    if not keep.all():
        states = states[keep]
        probs = probs[keep]
        probs = probs / probs.sum()
    return states, probs


class Belief:
    """Sparse probability distribution over state ids (flat realization).

    Entries are kept sorted by state id, strictly positive and summing to one.
    Equality and hashing use the sorted entry list.
    """

    __slots__ = ("states", "probs", "_key")
    realization = "flat"

    def __init__(self, states, probs, normalize=True):
        states = np.asarray(states, dtype=np.int64)
        probs = np.asarray(probs, dtype=float)
        if states.shape != probs.shape or states.ndim != 1:
            raise ValueError("states and probs must be 1-d arrays of equal length")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ValueError("belief probabilities must be finite and non-negative")
        if len(states) == 0 or probs.sum() <= 0:
            raise ValueError("belief has no probability mass")
        order = np.argsort(states, kind="stable")
        states, probs = states[order], probs[order]
        if len(states) > 1 and np.any(np.diff(states) == 0):
            uniq, inv = np.unique(states, return_inverse=True)
            probs = np.bincount(inv, weights=probs)
            states = uniq
        nz = probs > 0
        states, probs = states[nz], probs[nz]
        if normalize:
            states, probs = _normalize(states, probs)
        elif abs(probs.sum() - 1.0) > STOCHASTIC_TOL:
            raise ValueError("belief does not sum to one")
        self._set(states, probs)

    def _set(self, states, probs):
        states.flags.writeable = False
        probs.flags.writeable = False
        self.states = states
        self.probs = probs
        self._key = None

    @classmethod
    def _raw(cls, states, probs):
        """Trusted constructor: sorted, unique, positive, normalized input."""
        b = cls.__new__(cls)
        b._set(states, probs)
        return b

    @classmethod
    def point(cls, state: int) -> "Belief":
        return cls._raw(np.array([state], dtype=np.int64), np.array([1.0]))

    @classmethod
    def uniform(cls, states: Iterable[int]) -> "Belief":
        states = np.array(sorted(set(states)), dtype=np.int64)
        return cls._raw(states, np.full(len(states), 1.0 / len(states)))

    @classmethod
    def from_dense(cls, vector) -> "Belief":
        vector = np.asarray(vector, dtype=float)
        idx = np.flatnonzero(vector)
        return cls(idx, vector[idx])

    def support(self):
        return self.states, self.probs

    def to_dense(self, num_states: int) -> np.ndarray:
        out = np.zeros(num_states)
        out[self.states] = self.probs
        return out

    def key(self):
        if self._key is None:
            self._key = (tuple(self.states.tolist()), tuple(self.probs.tolist()))
        return self._key

    def __eq__(self, other):
        if not hasattr(other, "key"):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __len__(self):
        return len(self.states)

    def __repr__(self):
        body = ", ".join(f"{s}: {p:.4g}" for s, p in zip(self.states[:6], self.probs[:6]))
        more = ", ..." if len(self.states) > 6 else ""
        return f"Belief({{{body}{more}}})"


def discretize_entries(states, probs, k: int):
    """Round every probability to the 1/k grid (half up) and drop zeros.

    Returns the canonical sorted entry tuple; the result is not renormalized.
    """
    if k < 1:
        raise ValueError("discretization resolution must be >= 1")
    rounded = np.floor(np.asarray(probs) * k + 0.5) / k
    keep = rounded > 0
    return tuple(zip(np.asarray(states)[keep].tolist(), rounded[keep].tolist()))


class PomdpModel:
    """Finite POMDP with per-action sparse transition and observation matrices.

    ``transitions[a]`` is an ``S x S`` matrix with rows ``T(s, a, .)``;
    ``observations[a]`` is an ``S x Z`` matrix with rows ``O(s', a, .)``;
    ``rewards`` is a dense ``S x A`` array.  The model is immutable after
    construction and doubles as the dynamics object for flat beliefs.
    """

    def __init__(
        self,
        transitions: Sequence,
        observations: Sequence,
        rewards,
        discount: float,
        initial_belief: Belief | None = None,
        terminal_states: Iterable[int] = (),
        state_names: Sequence[str] | None = None,
        action_names: Sequence[str] | None = None,
        observation_names: Sequence[str] | None = None,
        validate: bool = True,
    ):
        self.transitions = tuple(sp.csr_matrix(t, dtype=float) for t in transitions)
        self.observations = tuple(sp.csr_matrix(o, dtype=float) for o in observations)
        self.rewards = np.array(rewards, dtype=float)
        self.rewards.flags.writeable = False
        self.discount = float(discount)
        if self.rewards.ndim != 2:
            raise ValidationError("rewards must be an S x A matrix")
        self.num_states, self.num_actions = self.rewards.shape
        if not self.observations:
            raise ValidationError("model needs at least one action")
        self.num_observations = self.observations[0].shape[1]
        self.terminal_states = frozenset(int(s) for s in terminal_states)
        self._terminal_mask = np.zeros(self.num_states, dtype=bool)
        for s in self.terminal_states:
            self._terminal_mask[s] = True
        if initial_belief is None:
            initial_belief = Belief.uniform(range(self.num_states))
        self._initial_belief = initial_belief
        self.state_names = list(state_names) if state_names else [str(i) for i in range(self.num_states)]
        self.action_names = list(action_names) if action_names else [str(i) for i in range(self.num_actions)]
        self.observation_names = (
            list(observation_names) if observation_names else [str(i) for i in range(self.num_observations)]
        )
        if validate:
            validate_model(self)
        # flattened CSR pieces for the hot path
        self._t_parts = [(t.indptr, t.indices, t.data) for t in self.transitions]
        self._t_deterministic = [bool(np.all(np.diff(t.indptr) == 1)) for t in self.transitions]
        self._obs_dense = None

    # -- structure -------------------------------------------------------
    @property
    def initial_belief(self) -> Belief:
        return self._initial_belief

    @property
    def model(self) -> "PomdpModel":
        return self

    def observation_matrix(self, a: int) -> np.ndarray:
        if self._obs_dense is None:
            self._obs_dense = [None] * self.num_actions
        dense = self._obs_dense[a]
        if dense is None:
            dense = self.observations[a].toarray()
            dense.flags.writeable = False
            self._obs_dense[a] = dense
        return dense

    def is_terminal_state(self, s: int) -> bool:
        return bool(self._terminal_mask[s])

    def is_terminal(self, b) -> bool:
        states, _ = b.support()
        return bool(self.terminal_states) and bool(self._terminal_mask[states].all())

    def reward_range(self):
        return float(self.rewards.min()), float(self.rewards.max())

    # -- belief MDP primitives ------------------------------------------
    def _predict(self, b, a):
        """Distribution over next states: sum_s T(s, a, s') b(s)."""
        states, probs = b.support()
        indptr, indices, data = self._t_parts[a]
        starts = indptr[states]
        if self._t_deterministic[a]:
            nxt = indices[starts]
            w = probs * data[starts]
        else:
            counts = indptr[states + 1] - starts
            total = int(counts.sum())
            base = np.repeat(starts - np.cumsum(counts) + counts, counts)
            pos = base + np.arange(total)
            nxt = indices[pos]
            w = data[pos] * np.repeat(probs, counts)
        if len(nxt) > 1:
            order = np.argsort(nxt, kind="stable")
            nxt, w = nxt[order], w[order]
            dup = nxt[1:] == nxt[:-1]
            if dup.any():
                heads = np.flatnonzero(np.concatenate(([True], ~dup)))
                return nxt[heads], np.add.reduceat(w, heads)
        return nxt, w

    def _joint(self, b, a):
        nxt, w = self._predict(b, a)
        return nxt, self.observation_matrix(a)[nxt] * w[:, None]

    def observation_distribution(self, b, a: int) -> np.ndarray:
        """Vector of Pr(z | b, a) over all observations."""
        _, joint = self._joint(b, a)
        return joint.sum(axis=0)

    def observation_probability(self, b, a: int, z: int) -> float:
        nxt, w = self._predict(b, a)
        return float(w @ self.observation_matrix(a)[nxt, z])

    def belief_update(self, b, a: int, z: int) -> Belief:
        nxt, w = self._predict(b, a)
        col = self.observation_matrix(a)[nxt, z] * w
        total = col.sum()
        if not total > 0:
            raise ZeroProbabilityObservation(f"Pr(z={z} | b, a={a}) = 0")
        keep = col > 0
        return Belief._raw(*_normalize(nxt[keep], col[keep]))

    def belief_reward(self, b, a: int) -> float:
        states, probs = b.support()
        return float(probs @ self.rewards[states, a])

    def successors(self, b, a: int):
        """Expected reward and all positive-probability (z, Pr(z|b,a), tau(b,a,z))."""
        states, probs = b.support()
        reward = float(probs @ self.rewards[states, a])
        nxt, joint = self._joint(b, a)
        pz = joint.sum(axis=0)
        children = []
        for z in np.flatnonzero(pz > 0).tolist():
            col = joint[:, z]
            keep = col > 0
            children.append((z, float(pz[z]), Belief._raw(*_normalize(nxt[keep], col[keep]))))
        return reward, children

    def discretize(self, b, k: int):
        states, probs = b.support()
        return discretize_entries(states, probs, k)

    def sample_state(self, b, rng) -> int:
        states, probs = b.support()
        return int(states[min(np.searchsorted(np.cumsum(probs), rng.random(), side="right"), len(states) - 1)])


def validate_model(model: PomdpModel) -> None:
    """Check stochasticity, discount range and reward finiteness."""
    S, A, Z = model.num_states, model.num_actions, model.num_observations
    if not 0.0 <= model.discount < 1.0:
        raise ValidationError(f"discount {model.discount} outside [0, 1)")
    if not np.all(np.isfinite(model.rewards)):
        raise ValidationError("rewards must be finite")
    if len(model.transitions) != A or len(model.observations) != A:
        raise ValidationError("need one transition and one observation matrix per action")
    for a in range(A):
        t, o = model.transitions[a], model.observations[a]
        if t.shape != (S, S):
            raise ValidationError(f"transition matrix for action {a} has shape {t.shape}")
        if o.shape != (S, Z):
            raise ValidationError(f"observation matrix for action {a} has shape {o.shape}")
        for name, m in (("transition", t), ("observation", o)):
            if m.nnz and (m.data.min() < 0 or not np.all(np.isfinite(m.data))):
                raise ValidationError(f"{name} probabilities for action {a} must be finite and >= 0")
            sums = np.asarray(m.sum(axis=1)).ravel()
            bad = np.flatnonzero(np.abs(sums - 1.0) > STOCHASTIC_TOL)
            if len(bad):
                raise ValidationError(
                    f"{name} row {int(bad[0])} for action {a} sums to {sums[bad[0]]!r}, not 1"
                )
    for s in model.terminal_states:
        if not 0 <= s < S:
            raise ValidationError(f"terminal state {s} out of range")
        for a in range(A):
            if model.transitions[a][s, s] != 1.0 or model.rewards[s, a] != 0.0:
                raise ValidationError(f"terminal state {s} must be absorbing with zero reward")
    states, probs = model.initial_belief.support()
    if len(states) and (states.min() < 0 or states.max() >= S):
        raise ValidationError("initial belief refers to unknown states")


class Environment:
    """Simulator holding the hidden true state of a flat model.

    Deterministic given ``seed``: one uniform draw for the next state and
    one for the observation per step.
    """

    def __init__(self, model: PomdpModel, state: int | None = None, seed=None):
        self.model = model
        self.rng = np.random.default_rng(seed)
        if state is None:
            state = model.sample_state(model.initial_belief, self.rng)
        if not 0 <= state < model.num_states:
            raise ValueError(f"state {state} out of range")
        self.true_state = int(state)

    @property
    def is_terminal(self) -> bool:
        return self.model.is_terminal_state(self.true_state)

    def _draw(self, matrix, row):
        lo, hi = matrix.indptr[row], matrix.indptr[row + 1]
        cdf = np.cumsum(matrix.data[lo:hi])
        i = int(np.searchsorted(cdf, self.rng.random() * cdf[-1], side="right"))
        return int(matrix.indices[lo + min(i, hi - lo - 1)])

    def step(self, a: int):
        """Apply action ``a``; returns ``(observation, reward)``."""
        if self.is_terminal:
            raise TerminalState(f"state {self.true_state} is terminal")
        s = self.true_state
        reward = float(self.model.rewards[s, a])
        s_next = self._draw(self.model.transitions[a], s)
        z = self._draw(self.model.observations[a], s_next)
        self.true_state = s_next
        return z, reward


def random_model(
    rng,
    num_states: int,
    num_actions: int,
    num_observations: int,
    discount: float,
    reward_scale: float = 1.0,
    sparsity: float = 0.0,
) -> PomdpModel:
    """Random dense-ish POMDP used by tests and the random-instance suites.

    ``sparsity`` is the chance that an individual transition or observation
    entry is zeroed (each row keeps at least one positive entry).
    """

    def rows(n, m):
        out = rng.random((n, m))
        if sparsity > 0:
            out[rng.random((n, m)) < sparsity] = 0.0
            empty = out.sum(axis=1) == 0
            out[empty, rng.integers(0, m, size=int(empty.sum()))] = 1.0
        return out / out.sum(axis=1, keepdims=True)

    T = [rows(num_states, num_states) for _ in range(num_actions)]
    O = [rows(num_states, num_observations) for _ in range(num_actions)]
    R = rng.uniform(-reward_scale, reward_scale, size=(num_states, num_actions))
    b0 = Belief(np.arange(num_states), rng.dirichlet(np.ones(num_states)))
    return PomdpModel(T, O, R, discount, initial_belief=b0)


def discounted_return(rewards: Iterable[float], discount: float) -> float:
    total, factor = 0.0, 1.0
    for r in rewards:
        total += factor * r
        factor *= discount
    return total

