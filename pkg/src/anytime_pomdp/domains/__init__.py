"""Benchmark domains: Tag, RockSample[n, k] and FieldVisionRockSample[n, k].

Each builder returns a :class:`Domain` bundling the flat model (used by the
offline bounds and the simulator) with exact factored belief dynamics (used
by the online planners).
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from ..core import PomdpModel
from ..errors import ConfigError, InvalidLayout
from . import tag as _tag
from .rocksample import (
    RockBelief,
    RockSampleDynamics,
    RockSampleSpec,
    fvrs_half_efficiency_distance,
    rock_sensor_accuracy,
)
from .rocksample import build_model as _build_rock_model
from .tag import TagBelief, TagDynamics

__all__ = [
    "Domain",
    "RockBelief",
    "RockSampleSpec",
    "TagBelief",
    "build_fvrs",
    "build_rocksample",
    "build_tag",
    "canonical_layout",
    "fvrs_half_efficiency_distance",
    "load_layout",
    "parse_domain",
    "random_layout",
    "rock_sensor_accuracy",
]


@dataclass
class Domain:
    name: str
    model: PomdpModel
    dynamics: object
    start_states: list  # true states enumerating the start configurations
    max_steps: int = 100
    spec: object = None


def parse_layout(text: str):
    rocks = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise InvalidLayout(f"layout line {lineno}: expected 'x y'")
        try:
            rocks.append((int(parts[0]), int(parts[1])))
        except ValueError as exc:
            raise InvalidLayout(f"layout line {lineno}: {exc}") from None
    return rocks


def load_layout(path):
    with open(path, encoding="utf-8") as fh:
        return parse_layout(fh.read())


def canonical_layout(kind: str, n: int, k: int):
    """Shipped rock layout for ``rocksample`` or ``fvrs`` instances, if any."""
    names = [f"{kind}_{n}_{k}.txt", f"rocksample_{n}_{k}.txt"]
    data = resources.files(__package__) / "data"
    for name in names:
        f = data / name
        if f.is_file():
            return parse_layout(f.read_text(encoding="utf-8"))
    raise InvalidLayout(f"no shipped layout for {kind}[{n},{k}]; pass one explicitly")


def _rock_domain(name, spec):
    model = _build_rock_model(spec)
    dyn = RockSampleDynamics(spec, model)
    x0, y0 = spec.start
    starts = [dyn.state_for(x0, y0, mask) for mask in range(1 << spec.num_rocks)]
    return Domain(name, model, dyn, starts, 100, spec)


def build_rocksample(n: int, k: int, layout=None, **options) -> Domain:
    if layout is None:
        layout = canonical_layout("rocksample", n, k)
    if len(layout) != k:
        raise InvalidLayout(f"layout has {len(layout)} rocks, expected {k}")
    spec = RockSampleSpec(n, tuple(layout), **options)
    return _rock_domain(f"rocksample:{n},{k}", spec)


def build_fvrs(n: int, k: int, layout=None, **options) -> Domain:
    if layout is None:
        layout = canonical_layout("fvrs", n, k)
    if len(layout) != k:
        raise InvalidLayout(f"layout has {len(layout)} rocks, expected {k}")
    options.setdefault("half_efficiency_distance", fvrs_half_efficiency_distance(n))
    spec = RockSampleSpec(n, tuple(layout), field_vision=True, **options)
    return _rock_domain(f"fvrs:{n},{k}", spec)


def build_tag(discount: float = 0.95) -> Domain:
    model = _tag.build_model(discount)
    dyn = TagDynamics(model)
    starts = [r * _tag.NUM_POSITIONS + o for r in range(_tag.NUM_CELLS) for o in range(_tag.NUM_CELLS)]
    return Domain("tag", model, dyn, starts, 100)


def parse_domain(selector: str, layout_path=None) -> Domain:
    """Build a domain from ``tag``, ``rocksample:<n>,<k>`` or ``fvrs:<n>,<k>``."""
    sel = selector.strip().lower()
    if sel == "tag":
        if layout_path is not None:
            raise ConfigError("--layout applies only to rocksample and fvrs")
        return build_tag()
    kind, _, args = sel.partition(":")
    if kind not in ("rocksample", "fvrs") or not args:
        raise ConfigError(f"unknown domain {selector!r}; use tag, rocksample:<n>,<k> or fvrs:<n>,<k>")
    try:
        n, k = (int(v) for v in args.split(","))
    except ValueError:
        raise ConfigError(f"bad domain size in {selector!r}") from None
    if n < 1 or k < 1:
        raise ConfigError("grid size and rock count must be positive")
    layout = load_layout(layout_path) if layout_path is not None else None
    build = build_rocksample if kind == "rocksample" else build_fvrs
    try:
        return build(n, k, layout)
    except InvalidLayout as exc:
        raise ConfigError(str(exc)) from None


def random_layout(n: int, k: int, seed=None, start=None):
    """``k`` distinct rock cells, avoiding the start cell when possible."""
    rng = np.random.default_rng(seed)
    start = start if start is not None else (0, n // 2)
    cells = [(x, y) for x in range(n) for y in range(n) if (x, y) != start]
    if k > len(cells):
        raise InvalidLayout(f"cannot place {k} rocks on a {n}x{n} grid")
    return [cells[i] for i in rng.choice(len(cells), size=k, replace=False)]
