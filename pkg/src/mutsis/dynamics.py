"""Euler-discretised SIS update, trajectory simulation and decay fitting."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np

from .model import AssumptionError, EpidemicState, ModelError, ModelStep, state_matrix, step_margins
from .spectral import spectral_radius

# Rounding noise allowed outside [0, 1] before it counts as a real violation.
CLAMP_TOL = 1e-15
DECAY_FLOOR = 1e-14


class StepController(Protocol):
    def apply(self, k: int, x: np.ndarray, step: ModelStep) -> ModelStep: ...


def _require_well_posed(step: ModelStep, h: float, k: int | None = None):
    heal, inf = step_margins(step, h)
    where = "" if k is None else f"step {k}, "
    if np.any(heal < 0):
        i = int(np.argmax(heal < 0))
        raise AssumptionError(f"{where}node {i}: h*delta = {h * step.delta[i]:.6g} exceeds 1",
                              k=k, node=i, assumption="healing bound h*delta <= 1")
    if np.any(inf < 0):
        i = int(np.argmax(inf < 0))
        raise AssumptionError(f"{where}node {i}: h*sum_j Bbar_ij = {1 - inf[i]:.6g} exceeds 1",
                              k=k, node=i, assumption="infection bound h*sum_j Bbar_ij <= 1")


def _advance(x: np.ndarray, step: ModelStep, h: float) -> np.ndarray:
    xn = x + h * ((1.0 - x) * (step.Bbar @ x) - step.delta * x)
    lo, hi = xn.min(), xn.max()
    if lo < 0.0 or hi > 1.0:
        if lo < -CLAMP_TOL or hi > 1.0 + CLAMP_TOL:
            i = int(np.argmax((xn < -CLAMP_TOL) | (xn > 1.0 + CLAMP_TOL)))
            raise AssumptionError(f"node {i} left [0, 1] (x = {xn[i]!r})", node=i,
                                  assumption="positive invariance")
        xn = np.clip(xn, 0.0, 1.0)
    return xn


def step(x: EpidemicState, step_params: ModelStep, h: float) -> EpidemicState:
    """Advance the infection levels by one Euler step.

    Rejects the step if ``h*delta_i > 1`` or ``h*sum_j Bbar_ij > 1`` for any
    node, naming the node.
    """
    if x.n != step_params.n:
        raise ModelError(f"state has {x.n} nodes, step has {step_params.n}")
    _require_well_posed(step_params, h, x.k)
    return EpidemicState(_advance(x.x, step_params, h), x.k + 1)


@dataclass
class Trajectory:
    """Recorded simulation output.

    ``rho`` holds ``rho(M(k))`` where it was requested and NaN elsewhere.
    ``states`` is ``None`` when the run was made with ``keep_states=False``.
    """

    h: float
    avg_infection: np.ndarray
    state_norm: np.ndarray
    rho: np.ndarray
    states: np.ndarray | None = None
    trace: object | None = None

    @property
    def horizon(self) -> int:
        return len(self.avg_infection) - 1

    @property
    def k(self) -> np.ndarray:
        return np.arange(len(self.avg_infection))

    def to_csv(self, path, per_node: bool = False):
        """Write ``k, avg_infection, state_norm, rho_M`` (plus ``x_i`` columns)."""
        if per_node and self.states is None:
            raise ValueError("per-node export needs a trajectory run with keep_states=True")
        n = self.states.shape[1] if per_node else 0
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "avg_infection", "state_norm", "rho_M"] + [f"x_{i}" for i in range(n)])
            for k in range(len(self.avg_infection)):
                row = [k, fmt(self.avg_infection[k]), fmt(self.state_norm[k]), fmt(self.rho[k])]
                if per_node:
                    row += [fmt(v) for v in self.states[k]]
                w.writerow(row)


def fmt(v: float) -> str:
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def simulate(seq: Iterable[ModelStep], x0: EpidemicState, controller: StepController | None = None, *,
             h: float | None = None, horizon: int | None = None, rho_stride: int = 0,
             keep_states: bool = True) -> Trajectory:
    """Iterate the dynamics over the steps of ``seq``.

    ``horizon`` is the number of updates; it defaults to ``seq.horizon`` if
    present, else ``len(seq)``.  When
    the source supplies a step for ``k = horizon`` it is used for the final
    rho (and controller) record but not applied.  If a controller is given,
    its healing rates replace ``delta(k)`` before each update.  ``rho_stride``
    > 0 records ``rho(M(k))`` at every multiple of the stride.
    """
    if h is None:
        h = getattr(seq, "h", None)
    if h is None or not h > 0:
        raise ModelError("a positive sampling parameter h is required")
    if horizon is None:
        horizon = getattr(seq, "horizon", None)
    if horizon is None:
        horizon = len(seq)
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")

    x = x0.x.copy()
    n = x.shape[0]
    avg = np.empty(horizon + 1)
    norm = np.empty(horizon + 1)
    rho = np.full(horizon + 1, np.nan)
    states = np.empty((horizon + 1, n)) if keep_states else None

    steps = iter(seq)
    for k in range(horizon + 1):
        avg[k] = x.mean()
        norm[k] = np.linalg.norm(x)
        if keep_states:
            states[k] = x
        s = next(steps, None)
        if s is None:
            if k < horizon:
                raise ModelError(f"sequence ended at step {k}, before horizon {horizon}")
            break
        if s.n != n:
            raise ModelError(f"step {k} has {s.n} nodes, state has {n}")
        if controller is not None:
            s = controller.apply(k, x, s)
        if rho_stride and k % rho_stride == 0:
            rho[k] = spectral_radius(state_matrix(s, h))
        if k < horizon:
            _require_well_posed(s, h, k)
            try:
                x = _advance(x, s, h)
            except AssumptionError as err:
                raise AssumptionError(f"step {k}, {err}", k=k, node=err.node,
                                      assumption=err.assumption) from err

    trace = getattr(controller, "trace", None)
    return Trajectory(float(h), avg, norm, rho, states, trace)


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit of ``||x(k)|| ~ alpha * omega**k``.

    ``healthy`` marks an all-zero trajectory, for which no fit is made.
    ``points`` is the number of samples above the floor used in the fit.
    """

    alpha: float
    omega: float
    points: int
    healthy: bool = False

    @property
    def decaying(self) -> bool:
        return self.healthy or self.omega < 1.0


def fit_decay(traj: Trajectory | np.ndarray, floor: float = DECAY_FLOOR) -> DecayFit:
    norms = np.asarray(traj.state_norm if isinstance(traj, Trajectory) else traj, dtype=float)
    if norms.size < 3:
        raise ValueError("need at least three samples to fit a decay rate")
    if not np.any(norms > 0):
        return DecayFit(0.0, 0.0, 0, healthy=True)
    # fit the leading run above the floor; later samples are dominated by rounding
    above = norms > floor
    start = int(np.argmax(above))
    run = list(itertools.takewhile(bool, above[start:]))
    ks = np.arange(start, start + len(run))
    if len(ks) < 2:
        # drops below the floor within one step: faster than any geometric rate
        return DecayFit(float(norms[start]), 0.0, len(ks))
    slope, intercept = np.polyfit(ks, np.log(norms[ks]), 1)
    return DecayFit(math.exp(intercept), math.exp(slope), len(ks))


def first_below(values, level: float) -> int | None:
    """First index at which ``values`` drops below ``level``."""
    hits = np.flatnonzero(np.asarray(values) < level)
    return int(hits[0]) if hits.size else None


def rho_tail_start(rho) -> int | None:
    """Smallest T with ``rho[k] < 1`` at every recorded k >= T (NaN entries skipped).

    ``None`` when the last recorded value is not below one or nothing was recorded.
    """
    rho = np.asarray(rho, dtype=float)
    ks = np.flatnonzero(~np.isnan(rho))
    if not ks.size or not rho[ks[-1]] < 1.0:
        return None
    bad = ks[rho[ks] >= 1.0]
    if not bad.size:
        return 0
    later = ks[ks > bad[-1]]
    return int(later[0])
