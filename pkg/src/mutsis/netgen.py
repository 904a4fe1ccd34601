"""Time-varying proximity networks from agents drifting inside a square box."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from .model import EpidemicState, ModelStep

REFLECT = "reflect"
EQUALITY = "equality"  # flip only when a coordinate sits exactly on the wall


class ScenarioConfigError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MobilityState:
    """Agent positions ``z`` and drifts ``phi`` (both ``n x 2``) in a box of side ``side``."""

    z: np.ndarray
    phi: np.ndarray
    center: np.ndarray = field(default_factory=lambda: np.zeros(2))
    side: float = 1.0

    def __post_init__(self):
        z = np.array(self.z, dtype=float).reshape(-1, 2)
        phi = np.array(self.phi, dtype=float).reshape(-1, 2)
        if z.shape != phi.shape:
            raise ScenarioConfigError(f"positions {z.shape} and drifts {phi.shape} differ in shape")
        if not self.side > 0:
            raise ScenarioConfigError(f"box side must be positive, got {self.side}")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "center", np.array(self.center, dtype=float).reshape(2))

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        half = self.side / 2
        return self.center - half, self.center + half

    def in_box(self) -> bool:
        lo, hi = self.bounds
        return bool(np.all(self.z >= lo) and np.all(self.z <= hi))


def mobility_step(mob: MobilityState, rule: str = REFLECT) -> MobilityState:
    """Move every agent by its drift.

    With ``rule="reflect"`` a coordinate that leaves the box is mirrored back
    across the wall it crossed and that drift component changes sign.  With
    ``rule="equality"`` the drift flips only when the coordinate already sits
    exactly on a wall, and agents may leave the box.
    """
    lo, hi = mob.bounds
    if rule == EQUALITY:
        flip = (mob.z == lo) | (mob.z == hi)
        return replace(mob, z=mob.z + mob.phi, phi=np.where(flip, -mob.phi, mob.phi))
    if rule != REFLECT:
        raise ScenarioConfigError(f"unknown boundary rule {rule!r}")
    if np.any(np.abs(mob.phi) > mob.side):
        raise ScenarioConfigError("a drift component exceeds the box side; reflection is undefined")
    z = mob.z + mob.phi
    phi = mob.phi.copy()
    over = z > hi
    under = z < lo
    z = np.where(over, 2 * hi - z, z)
    z = np.where(under, 2 * lo - z, z)
    phi[over | under] *= -1
    # mirrored points are inside in exact arithmetic; clip absorbs rounding
    z = np.clip(z, lo, hi)
    return replace(mob, z=z, phi=phi)


@dataclass(frozen=True)
class GraphConfig:
    """Proximity graph settings: agents within ``radius`` are linked with weight ``edge_weight``."""

    radius: float
    self_loop_weight: float = 1.0
    edge_weight: float = 1.0
    weight_mode: str = "binary"

    def __post_init__(self):
        if not self.radius > 0:
            raise ScenarioConfigError(f"radius must be positive, got {self.radius}")
        if self.self_loop_weight < 0 or not self.edge_weight > 0:
            raise ScenarioConfigError("weights must be nonnegative (edge weight positive)")
        if self.weight_mode != "binary":
            raise ScenarioConfigError(f"unsupported weight mode {self.weight_mode!r}")


def build_adjacency(mob: MobilityState, cfg: GraphConfig) -> np.ndarray:
    d2 = cdist(mob.z, mob.z, "sqeuclidean")
    A = np.where(d2 <= cfg.radius * cfg.radius, cfg.edge_weight, 0.0)
    np.fill_diagonal(A, cfg.self_loop_weight)
    return A


def is_irreducible(A) -> bool:
    """True when the directed graph of the nonzero pattern of ``A`` is strongly connected."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] == 0:
        return False
    ncomp, _ = connected_components(A != 0, directed=True, connection="strong")
    return ncomp == 1


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to regenerate one mobility/epidemic experiment.

    ``None`` for ``r``, ``phi_max``, ``infected_count`` and ``edge_weight``
    selects the derived default (``0.15*l``, ``0.02*l``, 5% of ``n`` and the
    largest uniform weight keeping ``h*beta*sum_j a_ij < 1`` even on the
    complete graph).
    """

    n: int = 100
    h: float = 0.1
    beta: float = 1.0
    l: float = 1.0
    z_c: tuple[float, float] = (0.0, 0.0)
    r: float | None = None
    phi_max: float | None = None
    self_loops: bool = True
    self_loop_weight: float = 1.0
    edge_weight: float | None = None
    infected_count: int | None = None
    delta_low: float = 0.0
    delta_high: float = 1.0
    horizon: int = 2000
    seed: int = 0
    controller: str = "none"
    eta: float = 0.01
    boundary: str = REFLECT
    rho_stride: int | None = None
    schema_version: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ScenarioConfigError("n must be at least 1")
        if not self.h > 0 or not self.beta > 0 or not self.l > 0:
            raise ScenarioConfigError("h, beta and l must be positive")
        if self.horizon < 0:
            raise ScenarioConfigError("horizon must be nonnegative")
        if not 0 <= self.delta_low <= self.delta_high:
            raise ScenarioConfigError("need 0 <= delta_low <= delta_high")
        if self.h * self.delta_high > 1:
            raise ScenarioConfigError(f"h*delta_high = {self.h * self.delta_high:.6g} exceeds 1")
        if self.controller not in ("none", "centralized", "distributed"):
            raise ScenarioConfigError(f"controller must be none, centralized or distributed, got {self.controller!r}")
        if not self.eta > 0:
            raise ScenarioConfigError("eta must be positive")
        if self.boundary not in (REFLECT, EQUALITY):
            raise ScenarioConfigError(f"boundary must be {REFLECT!r} or {EQUALITY!r}")
        if self.radius <= 0:
            raise ScenarioConfigError("r must be positive")
        if self.drift_max < 0 or self.drift_max > self.l:
            raise ScenarioConfigError("phi_max must lie in [0, l]")
        if not 0 <= self.n_infected <= self.n:
            raise ScenarioConfigError(f"infected_count {self.n_infected} not in [0, {self.n}]")
        loop = self.loop_weight
        if self.h * self.beta * loop >= 1:
            raise ScenarioConfigError(f"h*beta*self_loop_weight = {self.h * self.beta * loop:.6g} leaves no room for edges")
        worst = self.h * self.beta * ((self.n - 1) * self.weight + loop)
        if worst > 1:
            raise ScenarioConfigError(
                f"h*beta*(max degree * edge_weight + self_loop_weight) = {worst:.6g} exceeds 1 for n = {self.n}")

    @property
    def radius(self) -> float:
        return 0.15 * self.l if self.r is None else self.r

    @property
    def drift_max(self) -> float:
        return 0.02 * self.l if self.phi_max is None else self.phi_max

    @property
    def n_infected(self) -> int:
        return int(round(0.05 * self.n)) if self.infected_count is None else self.infected_count

    @property
    def loop_weight(self) -> float:
        return self.self_loop_weight if self.self_loops else 0.0

    @property
    def weight(self) -> float:
        if self.edge_weight is not None:
            return self.edge_weight
        return (1.0 / (self.h * self.beta) - self.loop_weight) / self.n

    @property
    def stride(self) -> int:
        if self.rho_stride is not None:
            return self.rho_stride
        return 1 if self.n <= 200 else 10

    def graph_config(self) -> GraphConfig:
        return GraphConfig(self.radius, self.loop_weight, self.weight)


class Scenario:
    """A seeded mobility scenario; iterating yields ``ModelStep`` for k = 0..horizon.

    Every iteration restarts from the initial mobility state, so the step
    stream is reproducible.
    """

    def __init__(self, config: ScenarioConfig, mobility: MobilityState, x0: EpidemicState, delta: np.ndarray):
        self.config = config
        self.mobility = mobility
        self.x0 = x0
        self.delta = delta
        self.h = config.h
        self.horizon = config.horizon
        self.n = config.n

    def __len__(self) -> int:
        return self.horizon + 1

    def mobility_states(self) -> Iterator[MobilityState]:
        mob = self.mobility
        for _ in range(self.horizon + 1):
            yield mob
            mob = mobility_step(mob, self.config.boundary)

    def __iter__(self) -> Iterator[ModelStep]:
        gcfg = self.config.graph_config()
        beta = np.full(self.n, self.config.beta)
        for mob in self.mobility_states():
            yield ModelStep(build_adjacency(mob, gcfg), beta, self.delta)


def init_scenario(config: ScenarioConfig, seed: int | None = None):
    """Draw the initial configuration; returns ``(mobility, x0, scenario)``.

    Draw order (fixed, so outputs are reproducible per seed): positions,
    drifts, infected agents, uncontrolled healing rates.
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    n = config.n
    half = config.l / 2
    center = np.asarray(config.z_c, dtype=float)
    z = center + rng.uniform(-half, half, size=(n, 2))
    phi = rng.uniform(-config.drift_max, config.drift_max, size=(n, 2))
    x = np.zeros(n)
    x[rng.choice(n, size=config.n_infected, replace=False)] = 1.0
    delta = rng.uniform(config.delta_low, config.delta_high, size=n)
    mob = MobilityState(z, phi, center, config.l)
    x0 = EpidemicState(x, 0)
    return mob, x0, Scenario(config, mob, x0, delta)
