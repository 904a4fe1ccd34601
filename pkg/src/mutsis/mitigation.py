"""Data-driven healing-rate control.

Each node sets its healing rate from an accumulated infection signal
``gamma_i(k)`` and its current connectivity::

    psi_i(k)       = min(gamma_i(k) * sum_j a_ij(k) + eta_i, 1/h)
    delta_hat_i(k) = max(delta_hat_i(k-1), psi_i(k))

The centralized scheme broadcasts ``gamma(k+1) = gamma(k) + sum_i x_i(k)``;
the distributed one accumulates each node's own level and that of its
current neighbours.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .model import ModelSequence, ModelStep
from .netgen import is_irreducible

CENTRALIZED = "centralized"
DISTRIBUTED = "distributed"
MODES = (CENTRALIZED, DISTRIBUTED)
DEFAULT_ETA = 0.01


class ControllerConfigError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ControllerState:
    gamma: np.ndarray
    delta_hat: np.ndarray
    eta: np.ndarray
    mode: str
    h: float

    def __post_init__(self):
        if self.mode not in MODES:
            raise ControllerConfigError(f"unknown controller mode {self.mode!r}")
        if not self.h > 0:
            raise ControllerConfigError(f"h must be positive, got {self.h}")
        if np.any(np.asarray(self.eta) <= 0):
            raise ControllerConfigError("eta must be positive for every node")

    @property
    def n(self) -> int:
        return len(self.gamma)

    @classmethod
    def initial(cls, n: int, h: float, mode: str, eta=DEFAULT_ETA, delta_init=None) -> "ControllerState":
        """Fresh state with ``gamma(0) = 0``.

        ``delta_init`` plays the role of ``delta_hat(-1)``; it defaults to zero.
        """
        eta = np.broadcast_to(np.asarray(eta, dtype=float), (n,)).copy()
        d0 = np.zeros(n) if delta_init is None else np.asarray(delta_init, dtype=float).copy()
        return cls(np.zeros(n), d0, eta, mode, float(h))


def compute_psi(gamma: np.ndarray, A: np.ndarray, eta: np.ndarray, h: float) -> np.ndarray:
    return np.minimum(gamma * np.asarray(A).sum(axis=1) + eta, 1.0 / h)


def healing_control(ctrl: ControllerState, A_k, h: float | None = None) -> np.ndarray:
    """Saturated, nondecreasing healing rates ``delta_hat(k)``."""
    h = ctrl.h if h is None else h
    if np.any(ctrl.eta <= 0):
        raise ControllerConfigError("eta must be positive for every node")
    return np.maximum(ctrl.delta_hat, compute_psi(ctrl.gamma, A_k, ctrl.eta, h))


def centralized_gamma_update(ctrl: ControllerState, x) -> np.ndarray:
    xv = getattr(x, "x", x)
    total = ctrl.gamma[0] + float(np.sum(xv)) if ctrl.n else 0.0
    return np.full(ctrl.n, total)


def neighbour_mask(A) -> np.ndarray:
    """``mask[i, j]`` is True when ``j != i`` and ``a_ij != 0``."""
    mask = np.asarray(A) != 0
    np.fill_diagonal(mask, False)
    return mask


def distributed_gamma_update(ctrl: ControllerState, x, A_k) -> np.ndarray:
    xv = np.asarray(getattr(x, "x", x), dtype=float)
    return ctrl.gamma + xv + neighbour_mask(A_k) @ xv


@dataclass
class ControllerTrace:
    """Per-step controller record; ``gamma`` is the value used inside ``psi(k)``."""

    h: float
    gamma: list[np.ndarray] = field(default_factory=list)
    psi: list[np.ndarray] = field(default_factory=list)
    delta_hat: list[np.ndarray] = field(default_factory=list)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.array(self.gamma), np.array(self.psi), np.array(self.delta_hat)

    def saturated(self) -> np.ndarray:
        return np.array(self.delta_hat) == 1.0 / self.h

    def saturation_time(self) -> int | None:
        """First k from which every node stays saturated to the end of the record."""
        if not self.delta_hat:
            return None
        sat = self.saturated().all(axis=1)
        if not sat.size or not sat[-1]:
            return None
        unsat = np.flatnonzero(~sat)
        return int(unsat[-1] + 1) if unsat.size else 0

    def to_csv(self, path):
        cap = 1.0 / self.h
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "node", "gamma", "psi", "delta_hat", "saturated"])
            for k, (g, p, d) in enumerate(zip(self.gamma, self.psi, self.delta_hat)):
                for i in range(len(g)):
                    w.writerow([k, i, repr(float(g[i])), repr(float(p[i])), repr(float(d[i])),
                                int(d[i] == cap)])


class Controller:
    """Stateful hook for :func:`mutsis.dynamics.simulate`.

    At each step ``k`` it computes ``delta_hat(k)`` from ``gamma(k)`` and
    ``A(k)``, then advances ``gamma`` with ``x(k)``.  ``delta_hat(-1)``
    defaults to the uncontrolled ``delta(0)`` of the first step seen.
    """

    def __init__(self, mode: str, h: float, eta=DEFAULT_ETA, delta_init=None, record: bool = True):
        if mode not in MODES:
            raise ControllerConfigError(f"unknown controller mode {mode!r}")
        self.mode = mode
        self.h = float(h)
        self.eta = eta
        self.delta_init = delta_init
        self.state: ControllerState | None = None
        self.trace = ControllerTrace(self.h) if record else None

    def apply(self, k: int, x: np.ndarray, step: ModelStep) -> ModelStep:
        if self.state is None:
            d0 = step.delta if self.delta_init is None else self.delta_init
            self.state = ControllerState.initial(step.n, self.h, self.mode, self.eta, d0)
        st = self.state
        psi = compute_psi(st.gamma, step.A, st.eta, self.h)
        delta_hat = np.maximum(st.delta_hat, psi)
        if self.trace is not None:
            self.trace.gamma.append(st.gamma)
            self.trace.psi.append(psi)
            self.trace.delta_hat.append(delta_hat)
        st = replace(st, delta_hat=delta_hat)
        if self.mode == CENTRALIZED:
            gamma = centralized_gamma_update(st, x)
        else:
            gamma = distributed_gamma_update(st, x, step.A)
        self.state = replace(st, gamma=gamma)
        return step.with_delta(delta_hat)


@dataclass(frozen=True)
class HypothesisFailure:
    hypothesis: str
    k: int
    node: int | None
    detail: str

    def __str__(self):
        node = "" if self.node is None else f", node={self.node}"
        return f"{self.hypothesis} [k={self.k}{node}]: {self.detail}"


@dataclass
class HypothesisReport:
    theorem: str
    failures: list[HypothesisFailure]
    max_rowsum_product: float
    notes: list[str] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return not self.failures

    @property
    def margin(self) -> float:
        """``1 - max_k,i h beta_i(k) sum_j a_ij(k)``."""
        return 1.0 - self.max_rowsum_product

    def to_text(self) -> str:
        lines = [f"theorem: {self.theorem}", f"verdict: {'pass' if self.holds else 'fail'}",
                 f"rowsum_margin: {self.margin!r}", f"failures: {len(self.failures)}"]
        lines += [f"  - {f}" for f in self.failures]
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines) + "\n"


def _common_hypotheses(theorem: str, seq: ModelSequence, tol: float = 1e-12) -> HypothesisReport:
    h = seq.h
    failures = []
    worst = 0.0
    nonuniform = []
    for k, s in enumerate(seq):
        rows = s.A.sum(axis=1)
        prod = h * s.beta * rows
        worst = max(worst, float(prod.max()))
        for i in np.flatnonzero(prod >= 1.0):
            failures.append(HypothesisFailure("rowsum_bound", k, int(i),
                                              f"h*beta*sum_j a_ij = {prod[i]:.6g} is not < 1"))
        if s.beta.max() - s.beta.min() > tol:
            failures.append(HypothesisFailure("homogeneous_infection", k, int(np.argmax(s.beta)),
                                              f"beta ranges over {s.beta.max() - s.beta.min():.6g}"))
        asym = np.abs(s.A - s.A.T)
        if asym.max() > tol:
            i, j = np.unravel_index(np.argmax(asym), asym.shape)
            failures.append(HypothesisFailure("symmetric_adjacency", k, int(i),
                                              f"|a[{i},{j}] - a[{j},{i}]| = {asym[i, j]:.6g}"))
        if rows.max() - rows.min() > tol:
            nonuniform.append(k)
    report = HypothesisReport(theorem, failures, worst)
    if nonuniform:
        report.notes.append(
            f"row sums differ across nodes at {len(nonuniform)} of {len(seq)} steps (first k={nonuniform[0]}); "
            "psi_i(k) is then not node-uniform")
    return report


def check_theorem3_hypotheses(seq: ModelSequence) -> HypothesisReport:
    """Centralized-controller hypotheses: row-sum bound, homogeneity, symmetry, ``a_ii > 0``."""
    report = _common_hypotheses("T3", seq)
    for k, s in enumerate(seq):
        diag = np.diag(s.A)
        for i in np.flatnonzero(diag <= 0):
            report.failures.append(HypothesisFailure("positive_diagonal", k, int(i), f"a_ii = {diag[i]:.6g}"))
    return report


def check_theorem4_hypotheses(seq: ModelSequence) -> HypothesisReport:
    """Distributed-controller hypotheses: row-sum bound, homogeneity, symmetry, irreducibility."""
    report = _common_hypotheses("T4", seq)
    for k, s in enumerate(seq):
        if not is_irreducible(s.A):
            report.failures.append(HypothesisFailure("irreducible", k, None,
                                                     "nonzero pattern is not strongly connected"))
    return report


class AppliedSequence:
    """Steps of ``seq`` with ``delta(k)`` replaced by a recorded ``delta_hat(k)``.

    This is the closed-loop system actually simulated, so the certificates
    can be evaluated on it.  Iteration stops at the shorter of the two.
    """

    def __init__(self, seq, trace: ControllerTrace):
        self.seq = seq
        self.trace = trace
        self.h = seq.h
        self.horizon = getattr(seq, "horizon", None)

    def __len__(self) -> int:
        return min(len(self.seq), len(self.trace.delta_hat))

    def __iter__(self):
        for s, d in zip(self.seq, self.trace.delta_hat):
            yield s.with_delta(d)
