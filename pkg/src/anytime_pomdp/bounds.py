"""Offline alpha-vector bounds on the optimal value function.

Lower bounds: :func:`blind_bound`, :func:`pbvi_bound`.
Upper bounds: :func:`mdp_bound` (state values), :func:`qmdp_bound`, :func:`fib_bound`.

Iterative solvers are started on the safe side of their fixed point (lower
bounds from below, upper bounds from above) so every iterate is itself a
valid bound, whatever the stopping tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import PomdpModel

LOWER = "lower"
UPPER = "upper"
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITERS = 10_000


@dataclass(frozen=True)
class AlphaVector:
    values: np.ndarray
    action: int


class AlphaVectorSet:
    """Max-of-linear value function over beliefs, tagged with actions.

    Works as a bound function: ``value(b)`` is the max dot product and
    ``kind`` says which side of the optimal value it sits on.  Action tag
    ``-1`` marks vectors that carry no action (state-value bounds).
    """

    def __init__(self, vectors, actions, kind: str):
        vectors = np.array(vectors, dtype=float, ndmin=2)
        actions = np.asarray(actions, dtype=np.int64).reshape(-1)
        if kind not in (LOWER, UPPER):
            raise ValueError(f"kind must be 'lower' or 'upper', got {kind!r}")
        if len(vectors) == 0:
            raise ValueError("an alpha-vector set cannot be empty")
        if len(actions) != len(vectors):
            raise ValueError("one action tag per vector required")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("alpha-vector entries must be finite")
        vectors.flags.writeable = False
        self.matrix = vectors
        self.actions = actions
        self.kind = kind
        self.residuals: list[float] = []

    @property
    def num_states(self) -> int:
        return self.matrix.shape[1]

    @property
    def vectors(self) -> list[AlphaVector]:
        return [AlphaVector(v, int(a)) for v, a in zip(self.matrix, self.actions)]

    def __len__(self):
        return len(self.matrix)

    def evaluate(self, b):
        """``(value, action)`` of the best vector at ``b``; ties go to the lowest index."""
        states, probs = b.support()
        scores = self.matrix[:, states] @ probs
        i = int(np.argmax(scores))
        return float(scores[i]), int(self.actions[i])

    def value(self, b) -> float:
        states, probs = b.support()
        if len(self.matrix) == 1:
            return float(self.matrix[0, states] @ probs)
        return float((self.matrix[:, states] @ probs).max())

    def evaluate_dense(self, beliefs: np.ndarray) -> np.ndarray:
        """Values at the rows of a dense ``(n, S)`` belief matrix."""
        return (np.atleast_2d(beliefs) @ self.matrix.T).max(axis=1)

    def __repr__(self):
        return f"AlphaVectorSet(kind={self.kind!r}, vectors={len(self)}, states={self.num_states})"


def evaluate_alpha_set(alpha_set: AlphaVectorSet, b):
    return alpha_set.evaluate(b)


def state_value_bound(values, kind: str) -> AlphaVectorSet:
    """Wrap a per-state value array as a one-vector bound."""
    return AlphaVectorSet(np.asarray(values, dtype=float)[None, :], [-1], kind)


def _observation_kernels(model: PomdpModel):
    """Per action, the stacked ``(Z*S, S)`` matrix of rows ``O(s',a,z) T(s,a,s')``."""
    kernels = []
    for a in range(model.num_actions):
        T = model.transitions[a]
        O = model.observations[a].toarray() if model.num_states * model.num_observations <= 5e6 else None
        blocks = []
        for z in range(model.num_observations):
            col = O[:, z] if O is not None else model.observations[a][:, z].toarray().ravel()
            blocks.append(T @ sp.diags(col))
        kernels.append(sp.vstack(blocks).tocsr())
    return kernels


DENSE_LIMIT = 2_000_000  # A*S*S entries below which iterations use a dense tensor


def _transition_stack(model: PomdpModel):
    """Dense ``(A, S, S)`` transition tensor for small models, else None."""
    S, A = model.num_states, model.num_actions
    if A * S * S <= DENSE_LIMIT:
        return np.stack([t.toarray() for t in model.transitions])
    return None


def _propagate(model: PomdpModel, X, T=None):
    """``T_a @ X[a]`` for every action; ``X`` is (A, S), or (S,) shared by all actions."""
    if T is not None:
        return T @ X if X.ndim == 1 else np.einsum("ast,at->as", T, X)
    return np.stack([model.transitions[a] @ (X if X.ndim == 1 else X[a]) for a in range(model.num_actions)])


def blind_bound(model: PomdpModel, residual_tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS):
    """One vector per action: the value of repeating that action forever."""
    g = model.discount
    R = model.rewards
    alpha = np.tile((R.min(axis=0) / (1.0 - g))[:, None], (1, model.num_states))
    T = _transition_stack(model)
    residuals = []
    for _ in range(max_iters):
        new = R.T + g * _propagate(model, alpha, T)
        res = float(np.abs(new - alpha).max())
        alpha = new
        residuals.append(res)
        if res < residual_tol:
            break
    out = AlphaVectorSet(alpha, np.arange(model.num_actions), LOWER)
    out.residuals = residuals
    return out


def _q_values(model: PomdpModel, V: np.ndarray, T=None) -> np.ndarray:
    return model.rewards + model.discount * _propagate(model, V, T).T


def mdp_bound(model: PomdpModel, residual_tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS):
    """Optimal state values of the underlying fully observable MDP.

    Returns an ``S`` array; ``residuals`` of the run are attached via
    :func:`mdp_bound_with_trace` when needed.
    """
    return mdp_bound_with_trace(model, residual_tol, max_iters)[0]


def mdp_bound_with_trace(model: PomdpModel, residual_tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS):
    g = model.discount
    V = np.full(model.num_states, model.rewards.max() / (1.0 - g))
    T = _transition_stack(model)
    residuals = []
    for _ in range(max_iters):
        new = _q_values(model, V, T).max(axis=1)
        res = float(np.abs(new - V).max())
        V = new
        residuals.append(res)
        if res < residual_tol:
            break
    return V, residuals


def qmdp_bound(model: PomdpModel, residual_tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS,
               mdp_values=None):
    """One vector per action holding the MDP Q-values."""
    if mdp_values is None:
        mdp_values, residuals = mdp_bound_with_trace(model, residual_tol, max_iters)
    else:
        residuals = []
    Q = _q_values(model, np.asarray(mdp_values, dtype=float))
    out = AlphaVectorSet(Q.T, np.arange(model.num_actions), UPPER)
    out.residuals = residuals
    return out


def fib_bound(model: PomdpModel, residual_tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS,
              qmdp: AlphaVectorSet | None = None):
    """Fast informed bound, iterated from the QMDP vectors."""
    if qmdp is None:
        qmdp = qmdp_bound(model, residual_tol, max_iters)
    g = model.discount
    S, Z = model.num_states, model.num_observations
    kernels = _observation_kernels(model)
    if model.num_actions * Z * S * S <= DENSE_LIMIT:
        kernels = [k.toarray() for k in kernels]
    alpha = np.array(qmdp.matrix)
    residuals = []
    for _ in range(max_iters):
        new = np.empty_like(alpha)
        for a in range(model.num_actions):
            proj = kernels[a] @ alpha.T  # (Z*S, |Gamma|)
            new[a] = model.rewards[:, a] + g * proj.max(axis=1).reshape(Z, S).sum(axis=0)
        res = float(np.abs(new - alpha).max())
        alpha = new
        residuals.append(res)
        if res < residual_tol:
            break
    out = AlphaVectorSet(alpha, np.arange(model.num_actions), UPPER)
    out.residuals = residuals
    return out


def sample_beliefs(dynamics, num_beliefs: int, seed=None, min_distance: float = 1e-6, max_steps=None):
    """Forward-simulate random actions from the initial belief, keeping distinct beliefs.

    Returns a dense ``(n, S)`` array with ``n <= num_beliefs`` rows (fewer only
    when the reachable set is exhausted within ``max_steps``).
    """
    rng = np.random.default_rng(seed)
    model = dynamics.model
    S = model.num_states
    if max_steps is None:
        max_steps = 200 * num_beliefs
    b0 = dynamics.initial_belief
    rows = [_dense(b0, S)]
    b = b0
    for _ in range(max_steps):
        if len(rows) >= num_beliefs:
            break
        if dynamics.is_terminal(b):
            b = b0
            continue
        a = int(rng.integers(model.num_actions))
        _, children = dynamics.successors(b, a)
        probs = np.array([p for _, p, _ in children])
        i = min(int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum(), side="right")), len(children) - 1)
        b = children[i][2]
        vec = _dense(b, S)
        if np.abs(np.asarray(rows) - vec).sum(axis=1).min() >= min_distance:
            rows.append(vec)
    return np.array(rows)


def _dense(b, S):
    states, probs = b.support()
    out = np.zeros(S)
    out[states] = probs
    return out


def pbvi_bound(model: PomdpModel, num_beliefs: int, num_iterations: int, seed=None, dynamics=None,
               beliefs: np.ndarray | None = None):
    """Point-based backups over a sampled belief set, started from a single pessimistic vector."""
    if num_beliefs < 1:
        raise ValueError("num_beliefs must be >= 1")
    if beliefs is None:
        beliefs = sample_beliefs(dynamics if dynamics is not None else model, num_beliefs, seed)
    B = np.atleast_2d(beliefs)
    g = model.discount
    S, Z, A = model.num_states, model.num_observations, model.num_actions
    gamma = np.full((1, S), model.rewards.min() / (1.0 - g))
    tags = np.array([-1])
    kernels = _observation_kernels(model) if num_iterations > 0 else None
    for _ in range(num_iterations):
        best_vals = np.full(len(B), -np.inf)
        best_vecs = np.zeros((len(B), S))
        best_acts = np.zeros(len(B), dtype=np.int64)
        for a in range(A):
            proj = (kernels[a] @ gamma.T).reshape(Z, S, len(gamma)) * g  # z, s, i
            cand = np.tile(model.rewards[:, a], (len(B), 1))
            for z in range(Z):
                scores = B @ proj[z]  # (nb, |Gamma|)
                cand += proj[z][:, np.argmax(scores, axis=1)].T
            vals = np.einsum("bs,bs->b", B, cand)
            better = vals > best_vals
            best_vals[better] = vals[better]
            best_vecs[better] = cand[better]
            best_acts[better] = a
        gamma, keep = np.unique(best_vecs, axis=0, return_index=True)
        order = np.sort(keep)
        gamma, tags = best_vecs[order], best_acts[order]
    return AlphaVectorSet(gamma, tags, LOWER)


def format_alpha_set(alpha_set: AlphaVectorSet) -> str:
    n, S = alpha_set.matrix.shape
    lines = [f"alpha-set {alpha_set.kind} {n} {S}"]
    for a, row in zip(alpha_set.actions, alpha_set.matrix):
        lines.append(" ".join([str(int(a))] + [format(float(v), ".17g") for v in row]))
    return "\n".join(lines) + "\n"


def parse_alpha_set(text: str) -> AlphaVectorSet:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty alpha-set text")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "alpha-set":
        raise ValueError("first line must be 'alpha-set <kind> <num_vectors> <num_states>'")
    kind, n, S = head[1], int(head[2]), int(head[3])
    if len(lines) - 1 != n:
        raise ValueError(f"expected {n} vectors, found {len(lines) - 1}")
    actions, rows = [], []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != S + 1:
            raise ValueError(f"vector line has {len(parts) - 1} entries, expected {S}")
        actions.append(int(parts[0]))
        rows.append([float(x) for x in parts[1:]])
    return AlphaVectorSet(np.array(rows), actions, kind)


def save_alpha_set(alpha_set: AlphaVectorSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_alpha_set(alpha_set))


def load_alpha_set(path) -> AlphaVectorSet:
    with open(path, encoding="utf-8") as fh:
        return parse_alpha_set(fh.read())


LOWER_BOUNDS = ("blind", "pbvi")
UPPER_BOUNDS = ("mdp", "qmdp", "fib")


def build_bound(name: str, model: PomdpModel, **options) -> AlphaVectorSet:
    """Construct a named bound (``blind``, ``pbvi``, ``mdp``, ``qmdp``, ``fib``)."""
    tol = options.get("residual_tol", DEFAULT_TOL)
    iters = options.get("max_iters", DEFAULT_MAX_ITERS)
    if name == "blind":
        return blind_bound(model, tol, iters)
    if name == "pbvi":
        return pbvi_bound(model, options.get("num_beliefs", 64), options.get("num_iterations", 20),
                          seed=options.get("seed", 0), dynamics=options.get("dynamics"))
    if name == "mdp":
        return state_value_bound(mdp_bound(model, tol, iters), UPPER)
    if name == "qmdp":
        return qmdp_bound(model, tol, iters)
    if name == "fib":
        return fib_bound(model, tol, iters)
    raise ValueError(f"unknown bound {name!r}")
