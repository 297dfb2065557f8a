"""Reader and writer for a subset of the Cassandra ``.pomdp`` text format.

Supported lines (``#`` starts a comment, whitespace is free)::

    discount: 0.95
    values: reward            # or cost
    states: 4                 # or a list of names
    actions: left right
    observations: 2
    start: 0.5 0.5 0 0        # or: start: uniform
    T: <a> : <s> : <s'> <prob>
    O: <a> : <s'> : <z> <prob>
    R: <a> : <s> : * : * <value>

``*`` may replace any action, state or observation position.  Later
entries overwrite earlier ones.
"""
from __future__ import annotations

import re

import numpy as np
import scipy.sparse as sp

from .core import Belief, PomdpModel
from .errors import ParseError, ValidationError

_HEADER = re.compile(r"^\s*(discount|values|states|actions|observations|start)\s*:(.*)$")
_ENTRY = re.compile(r"^\s*([TOR])\s*:(.*)$")
_NUMBER = re.compile(r"^[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?$")


def _strip_comment(line):
    i = line.find("#")
    return line if i < 0 else line[:i]


class _Space:
    def __init__(self, kind, names):
        self.kind = kind
        self.names = names
        self.index = {n: i for i, n in enumerate(names)}

    def __len__(self):
        return len(self.names)

    def resolve(self, token, lineno, col):
        if token == "*":
            return range(len(self.names))
        if token in self.index:
            return (self.index[token],)
        if token.isdigit() and int(token) < len(self.names):
            return (int(token),)
        raise ParseError(f"unknown {self.kind} {token!r}", lineno, col)


def _parse_space(kind, rest, lineno, col):
    tokens = rest.split()
    if not tokens:
        raise ParseError(f"empty {kind} declaration", lineno, col)
    if len(tokens) == 1 and tokens[0].isdigit():
        n = int(tokens[0])
        if n < 1:
            raise ParseError(f"{kind} count must be positive", lineno, col)
        return _Space(kind, [str(i) for i in range(n)])
    if len(set(tokens)) != len(tokens):
        raise ParseError(f"duplicate {kind} names", lineno, col)
    return _Space(kind, tokens)


def _float(token, lineno, col):
    if not _NUMBER.match(token):
        raise ParseError(f"expected a number, got {token!r}", lineno, col)
    return float(token)


def _fields(body, lineno, offset):
    """Split ``a : b : c value`` into ([(token, column), ...], value, column)."""
    parts = body.split(":")
    out = []
    col = offset
    for i, part in enumerate(parts):
        tokens = part.split()
        if i < len(parts) - 1:
            if len(tokens) != 1:
                raise ParseError("expected exactly one token between ':'", lineno, col + 1)
            out.append((tokens[0], col + part.index(tokens[0]) + 1))
        else:
            if len(tokens) != 2:
                raise ParseError("expected '<id> <number>' at end of entry", lineno, col + 1)
            out.append((tokens[0], col + part.index(tokens[0]) + 1))
            value_col = col + part.rindex(tokens[1]) + 1
            return out, tokens[1], value_col
        col += len(part) + 1
    raise ParseError("malformed entry", lineno, offset + 1)


def parse_model(text: str, validate: bool = True) -> PomdpModel:
    """Parse ``.pomdp`` text into a validated :class:`PomdpModel`."""
    header = {}
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        m = _HEADER.match(line)
        if m:
            key, rest = m.group(1), m.group(2)
            if key in header:
                raise ParseError(f"duplicate '{key}:' line", lineno, 1)
            header[key] = (rest, lineno, m.start(2) + 1)
            continue
        m = _ENTRY.match(line)
        if m:
            entries.append((m.group(1), m.group(2), lineno, m.start(2)))
            continue
        raise ParseError(f"unrecognized line {raw.strip()!r}", lineno, len(line) - len(line.lstrip()) + 1)

    for key in ("discount", "states", "actions", "observations"):
        if key not in header:
            raise ParseError(f"missing '{key}:' header", 0, 0)
    rest, ln, col = header["discount"]
    discount = _float(rest.strip(), ln, col)
    sign = 1.0
    if "values" in header:
        rest, ln, col = header["values"]
        v = rest.strip()
        if v not in ("reward", "cost"):
            raise ParseError(f"values must be 'reward' or 'cost', got {v!r}", ln, col)
        sign = -1.0 if v == "cost" else 1.0
    S = _parse_space("state", *header["states"])
    A = _parse_space("action", *header["actions"])
    Z = _parse_space("observation", *header["observations"])

    trans = [dict() for _ in range(len(A))]
    obs = [dict() for _ in range(len(A))]
    rewards = np.zeros((len(S), len(A)))
    for kind, body, lineno, offset in entries:
        fields, value_tok, value_col = _fields(body, lineno, offset)
        value = _float(value_tok, lineno, value_col)
        if kind == "T":
            if len(fields) != 3:
                raise ParseError("T entries need 'a : s : s' prob'", lineno, offset + 1)
            acts = A.resolve(fields[0][0], lineno, fields[0][1])
            src = S.resolve(fields[1][0], lineno, fields[1][1])
            dst = S.resolve(fields[2][0], lineno, fields[2][1])
            for a in acts:
                table = trans[a]
                for s in src:
                    for s2 in dst:
                        table[(s, s2)] = value
        elif kind == "O":
            if len(fields) != 3:
                raise ParseError("O entries need 'a : s' : z prob'", lineno, offset + 1)
            acts = A.resolve(fields[0][0], lineno, fields[0][1])
            dst = S.resolve(fields[1][0], lineno, fields[1][1])
            zs = Z.resolve(fields[2][0], lineno, fields[2][1])
            for a in acts:
                table = obs[a]
                for s2 in dst:
                    for z in zs:
                        table[(s2, z)] = value
        else:
            if len(fields) != 4:
                raise ParseError("R entries need 'a : s : * : * value'", lineno, offset + 1)
            for tok, col in fields[2:]:
                if tok != "*":
                    raise ParseError("rewards may depend only on (a, s); use '*' for s' and z", lineno, col)
            acts = A.resolve(fields[0][0], lineno, fields[0][1])
            src = S.resolve(fields[1][0], lineno, fields[1][1])
            for a in acts:
                for s in src:
                    rewards[s, a] = sign * value

    def to_csr(table, shape):
        if not table:
            return sp.csr_matrix(shape)
        keys = np.array(list(table.keys()), dtype=np.int64)
        vals = np.array(list(table.values()))
        keep = vals != 0
        return sp.csr_matrix((vals[keep], (keys[keep, 0], keys[keep, 1])), shape=shape)

    T = [to_csr(t, (len(S), len(S))) for t in trans]
    O = [to_csr(o, (len(S), len(Z))) for o in obs]

    start = None
    if "start" in header:
        rest, ln, col = header["start"]
        tokens = rest.split()
        if tokens == ["uniform"]:
            start = Belief.uniform(range(len(S)))
        else:
            if len(tokens) != len(S):
                raise ParseError(f"start needs {len(S)} probabilities, got {len(tokens)}", ln, col)
            vec = np.array([_float(t, ln, col) for t in tokens])
            if abs(vec.sum() - 1.0) > 1e-9 or np.any(vec < 0):
                raise ValidationError("start distribution must be non-negative and sum to 1")
            nz = np.flatnonzero(vec)
            start = Belief(nz, vec[nz], normalize=False)

    return PomdpModel(
        T,
        O,
        rewards,
        discount,
        initial_belief=start,
        state_names=S.names,
        action_names=A.names,
        observation_names=Z.names,
        validate=validate,
    )


def load_model(path) -> PomdpModel:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def _names_line(key, names):
    if names == [str(i) for i in range(len(names))]:
        return f"{key}: {len(names)}"
    return f"{key}: " + " ".join(names)


def format_model(model: PomdpModel) -> str:
    """Serialize with 17 significant digits so parsing reproduces the model exactly."""
    out = [
        f"discount: {model.discount!r}",
        "values: reward",
        _names_line("states", model.state_names),
        _names_line("actions", model.action_names),
        _names_line("observations", model.observation_names),
    ]
    start = model.initial_belief
    dense = np.zeros(model.num_states)
    states, probs = start.support()
    dense[states] = probs
    out.append("start: " + " ".join(repr(float(p)) for p in dense))
    sn, an, zn = model.state_names, model.action_names, model.observation_names
    for a in range(model.num_actions):
        coo = model.transitions[a].tocoo()
        for s, s2, p in sorted(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist())):
            out.append(f"T: {an[a]} : {sn[s]} : {sn[s2]} {p!r}")
    for a in range(model.num_actions):
        coo = model.observations[a].tocoo()
        for s2, z, p in sorted(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist())):
            out.append(f"O: {an[a]} : {sn[s2]} : {zn[z]} {p!r}")
    for s, a in zip(*np.nonzero(model.rewards)):
        out.append(f"R: {an[a]} : {sn[s]} : * : * {float(model.rewards[s, a])!r}")
    return "\n".join(out) + "\n"


def save_model(model: PomdpModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_model(model))
