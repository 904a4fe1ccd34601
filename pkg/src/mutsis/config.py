"""YAML run configuration.

Two kinds of run are supported, selected by the ``model`` key.

``model: mobility`` (the default) describes a proximity-network scenario;
every other key maps to a field of :class:`mutsis.netgen.ScenarioConfig`::

    schema_version: 1
    model: mobility
    n: 100              # agents
    h: 0.1              # sampling parameter
    beta: 1.0           # homogeneous infection rate
    l: 1.0              # box side
    z_c: [0.0, 0.0]     # box centre
    r: null             # proximity radius (null: 0.15*l)
    phi_max: null       # drift bound per coordinate (null: 0.02*l)
    self_loops: true
    self_loop_weight: 1.0
    edge_weight: null   # null: (1/(h*beta) - self_loop_weight)/n
    infected_count: null  # null: round(0.05*n)
    delta_low: 0.0      # uncontrolled healing rates ~ U[delta_low, delta_high]
    delta_high: 1.0
    horizon: 2000
    seed: 0
    controller: none    # none | centralized | distributed
    eta: 0.01
    boundary: reflect   # reflect | equality
    rho_stride: null    # null: 1 for n <= 200, else 10; 0 disables

``model: explicit`` gives the system data directly as keyframes.  Between
keyframes ``A``, ``beta`` and ``delta`` are interpolated linearly; after the
last keyframe they are held.  Keyframe times ``k`` default to an even
spread over ``0..horizon``::

    schema_version: 1
    model: explicit
    h: 0.1
    horizon: 200
    x0: [0.5, 0.2]
    steps:
      - {k: 0, A: [[1, 0.5], [0.2, 1]], beta: [1.0, 0.8], delta: [4, 5]}
      - {k: 200, A: [[1, 0.4], [0.3, 1]], beta: [1.0, 0.8], delta: [4.5, 5]}
    controller: none
    eta: 0.01
    rho_stride: 1
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator

import numpy as np
import yaml

from .model import EpidemicState, ModelStep
from .netgen import EQUALITY, REFLECT, ScenarioConfig, ScenarioConfigError, init_scenario

SCHEMA_VERSION = 1
MOBILITY = "mobility"
EXPLICIT = "explicit"
CONTROLLERS = ("none", "centralized", "distributed")


class ConfigError(ValueError):
    """Invalid configuration; the message carries ``file:line:column`` when known."""


_NUM = (int, float)
_OPT = type(None)

# key -> accepted Python types after YAML parsing
_MOBILITY_KEYS: dict[str, tuple] = {
    "schema_version": (int,), "model": (str,), "n": (int,), "h": _NUM, "beta": _NUM, "l": _NUM,
    "z_c": (list,), "r": _NUM + (_OPT,), "phi_max": _NUM + (_OPT,), "self_loops": (bool,),
    "self_loop_weight": _NUM, "edge_weight": _NUM + (_OPT,), "infected_count": (int, _OPT),
    "delta_low": _NUM, "delta_high": _NUM, "horizon": (int,), "seed": (int,), "controller": (str,),
    "eta": _NUM, "boundary": (str,), "rho_stride": (int, _OPT),
}
_EXPLICIT_KEYS: dict[str, tuple] = {
    "schema_version": (int,), "model": (str,), "h": _NUM, "horizon": (int,), "x0": (list,),
    "steps": (list,), "controller": (str,), "eta": _NUM, "rho_stride": (int,), "seed": (int,),
}
_EXPLICIT_REQUIRED = ("h", "horizon", "x0", "steps")
_STEP_KEYS = {"k", "A", "beta", "delta"}


@dataclass(frozen=True, eq=False)
class Keyframe:
    k: int
    A: np.ndarray
    beta: np.ndarray
    delta: np.ndarray


@dataclass(frozen=True, eq=False)
class ExplicitConfig:
    h: float
    horizon: int
    x0: tuple[float, ...]
    keyframes: tuple[Keyframe, ...]
    controller: str = "none"
    eta: float = 0.01
    rho_stride: int = 1
    seed: int = 0
    schema_version: int = SCHEMA_VERSION

    @property
    def n(self) -> int:
        return len(self.x0)

    @property
    def stride(self) -> int:
        return self.rho_stride


class ExplicitSequence:
    """Steps for k = 0..horizon interpolated from keyframes (re-iterable)."""

    def __init__(self, config: ExplicitConfig):
        self.config = config
        self.h = config.h
        self.horizon = config.horizon
        self.n = config.n

    def __len__(self) -> int:
        return self.horizon + 1

    def step_at(self, k: int) -> ModelStep:
        frames = self.config.keyframes
        if k <= frames[0].k or len(frames) == 1:
            f = frames[0] if k <= frames[0].k else frames[-1]
            return ModelStep(f.A, f.beta, f.delta)
        for a, b in zip(frames, frames[1:]):
            if k <= b.k:
                w = (k - a.k) / (b.k - a.k)
                return ModelStep((1 - w) * a.A + w * b.A, (1 - w) * a.beta + w * b.beta,
                                 (1 - w) * a.delta + w * b.delta)
        f = frames[-1]
        return ModelStep(f.A, f.beta, f.delta)

    def __iter__(self) -> Iterator[ModelStep]:
        return (self.step_at(k) for k in range(self.horizon + 1))


RunConfig = ScenarioConfig | ExplicitConfig


def _marks(node, path=()) -> dict[tuple, Any]:
    """Map every key path (tuple of keys / indices) to the start mark of its value."""
    out = {path: node.start_mark}
    if isinstance(node, yaml.MappingNode):
        for knode, vnode in node.value:
            out[path + (knode.value,)] = knode.start_mark
            for sub, mark in _marks(vnode, path + (knode.value,)).items():
                if sub != path + (knode.value,):
                    out[sub] = mark
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            out.update(_marks(item, path + (i,)))
    return out


class _Diag:
    def __init__(self, source: str, marks: dict):
        self.source = source
        self.marks = marks

    def error(self, path: tuple, message: str) -> ConfigError:
        while path and path not in self.marks:
            path = path[:-1]
        mark = self.marks.get(path)
        where = self.source if mark is None else f"{self.source}:{mark.line + 1}:{mark.column + 1}"
        return ConfigError(f"{where}: {message}")


def _type_name(types: tuple) -> str:
    names = {int: "integer", float: "number", str: "string", bool: "boolean", list: "list",
             type(None): "null"}
    return " or ".join(dict.fromkeys(names[t] for t in types))


def _check_types(data: dict, schema: dict, diag: _Diag):
    for key, value in data.items():
        if not isinstance(key, str) or key not in schema:
            raise diag.error((key,), f"unknown key {key!r}")
        types = schema[key]
        # bool is an int subclass in Python; never accept it for numbers
        ok = isinstance(value, types) and not (isinstance(value, bool) and bool not in types)
        if not ok:
            raise diag.error((key,), f"{key} must be {_type_name(types)}, got {value!r}")


def _matrix(value, path, diag: _Diag, ndim: int) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise diag.error(path, f"{path[-1]} must be a numeric {'matrix' if ndim == 2 else 'vector'}") from None
    if arr.ndim != ndim:
        raise diag.error(path, f"{path[-1]} must have {ndim} dimension(s), got shape {arr.shape}")
    return arr


def _explicit(data: dict, diag: _Diag) -> ExplicitConfig:
    for key in _EXPLICIT_REQUIRED:
        if key not in data:
            raise diag.error((), f"missing required key {key!r} for model: explicit")
    x0 = _matrix(data["x0"], ("x0",), diag, 1)
    n = len(x0)
    horizon = data["horizon"]
    steps = data["steps"]
    if not steps:
        raise diag.error(("steps",), "steps must list at least one keyframe")
    frames = []
    for j, item in enumerate(steps):
        if not isinstance(item, dict):
            raise diag.error(("steps", j), "each keyframe must be a mapping with A, beta, delta")
        for key in item:
            if key not in _STEP_KEYS:
                raise diag.error(("steps", j, key), f"unknown keyframe key {key!r}")
        for key in ("A", "beta", "delta"):
            if key not in item:
                raise diag.error(("steps", j), f"keyframe {j} is missing {key!r}")
        default_k = 0 if len(steps) == 1 else round(j * horizon / (len(steps) - 1))
        k = item.get("k", default_k)
        if not isinstance(k, int) or isinstance(k, bool) or k < 0:
            raise diag.error(("steps", j, "k"), f"keyframe time must be a nonnegative integer, got {k!r}")
        A = _matrix(item["A"], ("steps", j, "A"), diag, 2)
        beta = _matrix(item["beta"], ("steps", j, "beta"), diag, 1)
        delta = _matrix(item["delta"], ("steps", j, "delta"), diag, 1)
        if A.shape != (n, n) or beta.shape != (n,) or delta.shape != (n,):
            raise diag.error(("steps", j), f"keyframe {j} does not match the {n} entries of x0")
        try:
            ModelStep(A, beta, delta)
        except ValueError as err:
            raise diag.error(("steps", j), f"keyframe {j}: {err}") from None
        if frames and k <= frames[-1].k:
            raise diag.error(("steps", j, "k"), "keyframe times must be strictly increasing")
        frames.append(Keyframe(k, A, beta, delta))
    cfg = ExplicitConfig(h=float(data["h"]), horizon=horizon, x0=tuple(float(v) for v in x0),
                         keyframes=tuple(frames), controller=data.get("controller", "none"),
                         eta=float(data.get("eta", 0.01)), rho_stride=data.get("rho_stride", 1),
                         seed=data.get("seed", 0))
    _check_common(cfg, diag)
    try:
        EpidemicState(np.array(cfg.x0))
    except ValueError as err:
        raise diag.error(("x0",), str(err)) from None
    return cfg


def _check_common(cfg, diag: _Diag):
    if not cfg.h > 0:
        raise diag.error(("h",), f"h must be positive, got {cfg.h}")
    if cfg.horizon < 0:
        raise diag.error(("horizon",), "horizon must be nonnegative")
    if cfg.controller not in CONTROLLERS:
        raise diag.error(("controller",), f"controller must be one of {', '.join(CONTROLLERS)}")
    if not cfg.eta > 0:
        raise diag.error(("eta",), "eta must be positive")
    if cfg.stride < 0:
        raise diag.error(("rho_stride",), "rho_stride must be nonnegative")


def _mobility(data: dict, diag: _Diag) -> ScenarioConfig:
    kwargs = {k: v for k, v in data.items() if k != "model"}
    if "z_c" in kwargs:
        zc = _matrix(kwargs["z_c"], ("z_c",), diag, 1)
        if zc.shape != (2,):
            raise diag.error(("z_c",), "z_c must be a pair [x, y]")
        kwargs["z_c"] = (float(zc[0]), float(zc[1]))
    for key in ("h", "beta", "l", "r", "phi_max", "self_loop_weight", "edge_weight", "delta_low",
                "delta_high", "eta"):
        if kwargs.get(key) is not None:
            kwargs[key] = float(kwargs[key])
    if kwargs.get("boundary", REFLECT) not in (REFLECT, EQUALITY):
        raise diag.error(("boundary",), f"boundary must be {REFLECT} or {EQUALITY}")
    try:
        cfg = ScenarioConfig(**kwargs)
    except ScenarioConfigError as err:
        raise diag.error((), str(err)) from None
    _check_common(cfg, diag)
    return cfg


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse YAML text into a validated run configuration."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        where = source if mark is None else f"{source}:{mark.line + 1}:{mark.column + 1}"
        raise ConfigError(f"{where}: invalid YAML: {getattr(err, 'problem', err)}") from None
    diag = _Diag(source, _marks(node) if node is not None else {})
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise diag.error((), "top level must be a mapping")
    version = data.get("schema_version")
    if version is None:
        raise diag.error((), "missing schema_version")
    if version != SCHEMA_VERSION:
        raise diag.error(("schema_version",), f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    kind = data.get("model", MOBILITY)
    if kind == MOBILITY:
        _check_types(data, _MOBILITY_KEYS, diag)
        return _mobility(data, diag)
    if kind == EXPLICIT:
        _check_types(data, _EXPLICIT_KEYS, diag)
        return _explicit(data, diag)
    raise diag.error(("model",), f"model must be {MOBILITY} or {EXPLICIT}, got {kind!r}")


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"{path}: cannot read config ({err.strerror})") from None
    return parse_config(text, str(path))


def override(cfg: RunConfig, *, seed=None, controller=None, horizon=None, stride=None) -> RunConfig:
    """Return ``cfg`` with command-line overrides applied (``None`` keeps a field)."""
    changes = {k: v for k, v in (("seed", seed), ("controller", controller), ("horizon", horizon),
                                 ("rho_stride", stride)) if v is not None}
    if not changes:
        return cfg
    try:
        new = dataclasses.replace(cfg, **changes)
    except ScenarioConfigError as err:
        raise ConfigError(f"override: {err}") from None
    _check_common(new, _Diag("override", {}))
    return new


def to_dict(cfg: RunConfig) -> dict:
    """Plain-data form of a configuration, suitable for :func:`yaml.safe_dump`."""
    if isinstance(cfg, ExplicitConfig):
        return {
            "schema_version": cfg.schema_version, "model": EXPLICIT, "h": cfg.h, "horizon": cfg.horizon,
            "x0": list(cfg.x0),
            "steps": [{"k": f.k, "A": f.A.tolist(), "beta": f.beta.tolist(), "delta": f.delta.tolist()}
                      for f in cfg.keyframes],
            "controller": cfg.controller, "eta": cfg.eta, "rho_stride": cfg.rho_stride, "seed": cfg.seed,
        }
    out = {"schema_version": cfg.schema_version, "model": MOBILITY}
    for f in dataclasses.fields(cfg):
        if f.name == "schema_version":
            continue
        v = getattr(cfg, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=None)


def build(cfg: RunConfig):
    """Instantiate ``(sequence, x0)``; the sequence is re-iterable and has ``h`` and ``horizon``."""
    if isinstance(cfg, ExplicitConfig):
        return ExplicitSequence(cfg), EpidemicState(np.array(cfg.x0))
    _, x0, scenario = init_scenario(cfg)
    return scenario, x0


__all__ = [
    "ConfigError", "ExplicitConfig", "ExplicitSequence", "Keyframe", "RunConfig", "SCHEMA_VERSION",
    "build", "dump_config", "load_config", "override", "parse_config", "to_dict",
]
