"""System data for the discrete-time mutating SIS model.

A model step at time ``k`` is the triple ``(A(k), beta(k), delta(k))``:
nonnegative interconnection intensities, per-node infection rates and
per-node healing rates.  The effective infection matrix is
``Bbar(k) = diag(beta(k)) @ A(k)`` and the linearisation of the dynamics
around the healthy state is ``M(k) = I - h D(k) + h Bbar(k)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np


class ModelError(ValueError):
    """Structural problem with model data (shapes, non-finite entries)."""


class AssumptionError(ValueError):
    """Model data violates the nonnegativity or well-posedness assumptions."""

    def __init__(self, message: str, k: int | None = None, node: int | None = None,
                 assumption: str | None = None):
        super().__init__(message)
        self.k = k
        self.node = node
        self.assumption = assumption


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ModelStep:
    """One time step of system data.

    Construction checks shapes, finiteness and the sign constraints
    ``a_ij >= 0``, ``beta_i > 0``, ``delta_i >= 0``.  Arrays are copied and
    made read-only.
    """

    A: np.ndarray
    beta: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        delta = np.atleast_1d(np.asarray(self.delta, dtype=float))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ModelError(f"adjacency must be square, got shape {A.shape}")
        n = A.shape[0]
        if beta.shape != (n,) or delta.shape != (n,):
            raise ModelError(
                f"rate vectors must have length {n}, got beta {beta.shape} and delta {delta.shape}"
            )
        for name, arr in (("A", A), ("beta", beta), ("delta", delta)):
            if not np.all(np.isfinite(arr)):
                raise ModelError(f"{name} has non-finite entries")
        if np.any(A < 0):
            i, j = np.argwhere(A < 0)[0]
            raise AssumptionError(f"a[{i},{j}] = {A[i, j]} is negative", node=int(i),
                                  assumption="nonnegativity")
        if np.any(beta <= 0):
            i = int(np.argmax(beta <= 0))
            raise AssumptionError(f"beta[{i}] = {beta[i]} is not positive", node=i,
                                  assumption="nonnegativity")
        if np.any(delta < 0):
            i = int(np.argmax(delta < 0))
            raise AssumptionError(f"delta[{i}] = {delta[i]} is negative", node=i,
                                  assumption="nonnegativity")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "beta", _frozen(beta))
        object.__setattr__(self, "delta", _frozen(delta))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @cached_property
    def Bbar(self) -> np.ndarray:
        """Effective infection matrix ``diag(beta) @ A`` (read-only)."""
        return _frozen(self.beta[:, None] * self.A)

    def with_delta(self, delta) -> "ModelStep":
        new = ModelStep(self.A, self.beta, delta)
        if "Bbar" in self.__dict__:
            new.__dict__["Bbar"] = self.Bbar
        return new


@dataclass(frozen=True, eq=False)
class EpidemicState:
    """Infection levels ``x(k)`` in ``[0, 1]^n`` at step ``k``."""

    x: np.ndarray
    k: int = 0

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if x.ndim != 1:
            raise ModelError(f"state must be a vector, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ModelError("state has non-finite entries")
        if np.any(x < 0) or np.any(x > 1):
            i = int(np.argmax((x < 0) | (x > 1)))
            raise AssumptionError(f"x[{i}] = {x[i]} outside [0, 1]", k=self.k, node=i,
                                  assumption="state domain")
        object.__setattr__(self, "x", _frozen(x))

    @property
    def n(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True, eq=False)
class ModelSequence:
    """An ordered, finite list of model steps sharing the sampling parameter ``h``.

    Iterating yields the steps.  ``well_posed`` is True only when every step
    satisfies the well-posedness assumptions for this ``h``.
    """

    steps: tuple[ModelStep, ...]
    h: float
    well_posed: bool = field(init=False)

    def __post_init__(self):
        steps = tuple(self.steps)
        if not steps:
            raise ModelError("sequence needs at least one step")
        if not (np.isfinite(self.h) and self.h > 0):
            raise ModelError(f"sampling parameter h must be positive, got {self.h}")
        n = steps[0].n
        for k, s in enumerate(steps):
            if s.n != n:
                raise ModelError(f"step {k} has {s.n} nodes, expected {n}")
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "well_posed", check_assumptions(self).ok)

    @property
    def n(self) -> int:
        return self.steps[0].n

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self) -> Iterator[ModelStep]:
        return iter(self.steps)

    def __getitem__(self, k: int) -> ModelStep:
        return self.steps[k]

    def state_matrices(self) -> list[np.ndarray]:
        return [state_matrix(s, self.h) for s in self.steps]


@dataclass(frozen=True)
class Violation:
    k: int
    node: int
    assumption: str
    value: float
    limit: float

    def __str__(self):
        return f"step {self.k}, node {self.node}: {self.assumption} ({self.value:.6g} > {self.limit:.6g})"


@dataclass(frozen=True)
class ValidationReport:
    """Per-step, per-node margins of the well-posedness assumptions.

    ``healing_slack[k, i] = 1 - h*delta_i(k)`` and
    ``infection_slack[k, i] = 1 - h*sum_j Bbar_ij(k)``; a negative slack is a
    violation.  Nonnegativity is enforced when a :class:`ModelStep` is built,
    so it cannot fail here.
    """

    h: float
    healing_slack: np.ndarray
    infection_slack: np.ndarray
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_failed(self):
        if self.violations:
            v = self.violations[0]
            raise AssumptionError(f"assumption violated at {v}", k=v.k, node=v.node,
                                  assumption=v.assumption)


def step_margins(step: ModelStep, h: float) -> tuple[np.ndarray, np.ndarray]:
    healing = 1.0 - h * step.delta
    infection = 1.0 - h * step.Bbar.sum(axis=1)
    return healing, infection


def check_assumptions(seq: ModelSequence | Iterable[ModelStep], h: float | None = None) -> ValidationReport:
    """Check ``h*delta_i(k) <= 1`` and ``h*sum_j Bbar_ij(k) <= 1`` for every k and i."""
    if h is None:
        h = seq.h
    if not h > 0:
        raise ModelError(f"sampling parameter h must be positive, got {h}")
    heal, inf = [], []
    violations = []
    for k, s in enumerate(seq):
        hs, is_ = step_margins(s, h)
        heal.append(hs)
        inf.append(is_)
        for i in np.flatnonzero(hs < 0):
            violations.append(Violation(k, int(i), "healing bound h*delta <= 1", h * s.delta[i], 1.0))
        for i in np.flatnonzero(is_ < 0):
            violations.append(Violation(k, int(i), "infection bound h*sum_j Bbar_ij <= 1",
                                        1.0 - is_[i], 1.0))
    return ValidationReport(float(h), np.array(heal), np.array(inf), tuple(violations))


def state_matrix(step: ModelStep, h: float) -> np.ndarray:
    """Linearisation at the healthy state, ``I - h D + h Bbar``."""
    M = h * step.Bbar
    M[np.diag_indices_from(M)] += 1.0 - h * step.delta
    return M


def nonlinear_state_matrix(step: ModelStep, x: EpidemicState | np.ndarray, h: float) -> np.ndarray:
    """``I + h((I - X) Bbar - D)`` so that ``x(k+1) = Mhat(k) @ x(k)``."""
    xv = x.x if isinstance(x, EpidemicState) else np.asarray(x, dtype=float)
    if xv.shape != (step.n,):
        raise ModelError(f"state length {xv.shape} does not match {step.n} nodes")
    M = h * (1.0 - xv)[:, None] * step.Bbar
    M[np.diag_indices_from(M)] += 1.0 - h * step.delta
    return M


def constant_sequence(step: ModelStep, h: float, length: int) -> ModelSequence:
    return ModelSequence(tuple([step] * length), h)


def as_matrices(mats: Sequence[np.ndarray] | ModelSequence) -> list[np.ndarray]:
    if isinstance(mats, ModelSequence):
        return mats.state_matrices()
    return [np.asarray(M, dtype=float) for M in mats]
