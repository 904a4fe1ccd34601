"""Sufficient conditions for exponential stability of the healthy state.

Two certificates are provided:

* homogeneous infection over symmetric graphs: every ``M(k)`` must have
  spectral radius below one (:func:`check_theorem1`);
* heterogeneous infection over directed graphs: spectral radii bounded away
  from one, bounded norms and step-to-step variation below the admissible
  threshold (:func:`check_theorem2`).

Both are evaluated over the finite horizon of the given sequence.  The
decrease verifiers replay a trajectory and check the quadratic Lyapunov
functions used in the corresponding proofs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .dynamics import Trajectory
from .model import ModelSequence, ModelStep, check_assumptions, state_matrix
from .spectral import (LyapunovError, SlowVariationConstants, slow_variation_constants,
                       solve_discrete_lyapunov, spectral_radius)

PREMISES_HOLD = "premises_hold"
PREMISES_FAIL = "premises_fail"
ASSUMPTIONS_FAIL = "assumptions_fail"

RHO_MARGIN = 1e-9
EQUALITY_TOL = 1e-12
DECREASE_TOL = 1e-12


@dataclass(frozen=True)
class PremiseFailure:
    premise: str
    k: int | None = None
    node: int | None = None
    detail: str = ""

    def __str__(self):
        where = []
        if self.k is not None:
            where.append(f"k={self.k}")
        if self.node is not None:
            where.append(f"node={self.node}")
        loc = f" [{', '.join(where)}]" if where else ""
        return f"{self.premise}{loc}: {self.detail}"


@dataclass
class CertificateReport:
    theorem: str
    verdict: str
    failed_premises: list[PremiseFailure]
    rho_series: np.ndarray
    premise_flags: dict[str, np.ndarray] = field(default_factory=dict)
    constants: SlowVariationConstants | None = None
    margin: float = RHO_MARGIN

    @property
    def holds(self) -> bool:
        return self.verdict == PREMISES_HOLD

    @property
    def rho_max(self) -> float:
        return float(np.max(self.rho_series)) if len(self.rho_series) else math.nan

    @property
    def rho_margin(self) -> float:
        """Distance of the largest observed spectral radius below one."""
        return 1.0 - self.rho_max

    def to_text(self) -> str:
        lines = [f"theorem: {self.theorem}", f"verdict: {self.verdict}",
                 f"max_rho: {self.rho_max!r}", f"rho_margin: {self.rho_margin!r}",
                 f"required_margin: {self.margin!r}"]
        c = self.constants
        if c is not None:
            for name in ("alpha1", "mu", "p", "L", "m", "log_m", "epsilon", "kappa", "kappa_threshold"):
                lines.append(f"{name}: {getattr(c, name)!r}")
            lines.append(f"horizon_observed: {c.horizon}")
            if c.note:
                lines.append(f"note: {c.note}")
        lines.append(f"failed_premises: {len(self.failed_premises)}")
        lines += [f"  - {f}" for f in self.failed_premises]
        return "\n".join(lines) + "\n"

    def to_csv(self, path):
        names = list(self.premise_flags)
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "rho"] + names)
            for k, r in enumerate(self.rho_series):
                w.writerow([k, repr(float(r))] + [int(bool(self.premise_flags[nm][k])) for nm in names])


def _matrices(seq) -> Iterable[np.ndarray]:
    return (state_matrix(s, seq.h) for s in seq)


def _structural(theorem: str, seq: ModelSequence) -> CertificateReport | None:
    report = check_assumptions(seq)
    if report.ok:
        return None
    fails = [PremiseFailure(v.assumption, v.k, v.node, f"{v.value:.6g} > {v.limit:.6g}")
             for v in report.violations]
    return CertificateReport(theorem, ASSUMPTIONS_FAIL, fails, np.array([]))


def check_theorem1(seq: ModelSequence, margin: float = RHO_MARGIN) -> CertificateReport:
    """Homogeneous infection, symmetric ``A(k)`` and ``max_k rho(M(k)) <= 1 - margin``."""
    bad = _structural("T1", seq)
    if bad is not None:
        return bad
    fails: list[PremiseFailure] = []
    homog, symm, stable, rhos = [], [], [], []
    for k, s in enumerate(seq):
        spread = float(s.beta.max() - s.beta.min())
        homog.append(spread <= EQUALITY_TOL)
        if not homog[k]:
            fails.append(PremiseFailure("homogeneous_infection", k, int(np.argmax(s.beta)),
                                        f"beta ranges over {spread:.6g}"))
        asym = np.abs(s.A - s.A.T)
        symm.append(asym.max() <= EQUALITY_TOL)
        if not symm[k]:
            i, j = np.unravel_index(np.argmax(asym), asym.shape)
            fails.append(PremiseFailure("symmetric_adjacency", k, int(i),
                                        f"|a[{i},{j}] - a[{j},{i}]| = {asym[i, j]:.6g}"))
        rhos.append(spectral_radius(state_matrix(s, seq.h)))
        stable.append(rhos[k] <= 1.0 - margin)
        if not stable[k]:
            fails.append(PremiseFailure("spectral_radius", k, None,
                                        f"rho(M) = {rhos[k]:.12g} > 1 - {margin:g}"))
    verdict = PREMISES_FAIL if fails else PREMISES_HOLD
    flags = {"homogeneous": np.array(homog), "symmetric": np.array(symm),
             "rho_below_one": np.array(stable)}
    return CertificateReport("T1", verdict, fails, np.array(rhos), flags, margin=margin)


def check_theorem2(seq: ModelSequence, epsilon: float = 0.5, margin: float = RHO_MARGIN) -> CertificateReport:
    """Bounded spectral radius, bounded norm and slow variation of ``M(k)``.

    The observed variation ``kappa`` is compared against the threshold
    ``(1 - p^2)^2 (1 - epsilon) / (2 m^4 L)`` induced by ``epsilon``.
    """
    bad = _structural("T2", seq)
    if bad is not None:
        return bad
    consts = slow_variation_constants(_matrices(seq), epsilon)
    rhos = np.array(consts.rho_series)
    fails: list[PremiseFailure] = []
    stable = rhos <= 1.0 - margin
    for k in np.flatnonzero(~stable):
        fails.append(PremiseFailure("spectral_radius", int(k), None,
                                    f"rho(M) = {rhos[k]:.12g} > 1 - {margin:g}"))
    if not math.isfinite(consts.L):
        fails.append(PremiseFailure("bounded_norm", None, None, "norm of M(k) is not finite"))
    diffs = np.array(consts.diff_series + (0.0,))
    slow = diffs <= consts.kappa_threshold
    if not consts.kappa_ok:
        k = int(np.argmax(diffs))
        fails.append(PremiseFailure("slow_variation", k, None,
                                    f"kappa = {consts.kappa:.6g} > threshold {consts.kappa_threshold:.6g}"))
    verdict = PREMISES_FAIL if fails else PREMISES_HOLD
    flags = {"rho_below_one": stable, "variation_below_threshold": slow}
    return CertificateReport("T2", verdict, fails, rhos, flags, consts, margin)


@dataclass
class DecreaseReport:
    """Lyapunov function values along a trajectory.

    ``dV[k] = V(k+1) - V(k)``; ``violations`` lists ``(k, kind, value)`` for
    any positive decrement above ``tol`` (at nonzero states) and, for the
    quadratic ``x^T Q(k) x`` function, any sandwich bound that fails.
    """

    kind: str
    V: np.ndarray
    dV: np.ndarray
    tol: float
    violations: list[tuple[int, str, float]] = field(default_factory=list)
    upper_factor: float | None = None

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def max_dV(self) -> float:
        return float(np.max(self.dV)) if self.dV.size else -math.inf

    def to_text(self) -> str:
        lines = [f"lyapunov: {self.kind}", f"steps: {self.dV.size}", f"max_dV: {self.max_dV!r}",
                 f"tolerance: {self.tol!r}", f"violations: {len(self.violations)}"]
        if self.upper_factor is not None:
            lines.insert(1, f"upper_factor: {self.upper_factor!r}")
        lines += [f"  - k={k} {kind}: {val!r}" for k, kind, val in self.violations]
        return "\n".join(lines) + "\n"


def _states(traj: Trajectory) -> np.ndarray:
    if traj.states is None:
        raise ValueError("decrease verification needs a trajectory run with keep_states=True")
    return traj.states


def verify_lyapunov_decrease_T1(traj: Trajectory, seq: ModelSequence | None = None,
                                tol: float = DECREASE_TOL) -> DecreaseReport:
    """Check ``V = x^T x / 2`` never increases between consecutive nonzero states.

    The verdict is only meaningful when the homogeneous/symmetric premises
    hold; otherwise the report is informational.
    """
    X = _states(traj)
    V = 0.5 * np.einsum("ki,ki->k", X, X)
    dV = np.diff(V)
    report = DecreaseReport("half_squared_norm", V, dV, tol)
    for k in np.flatnonzero(dV > tol):
        if np.any(X[k] != 0):
            report.violations.append((int(k), "increase", float(dV[k])))
    return report


def verify_lyapunov_decrease_T2(traj: Trajectory, seq: Iterable[ModelStep], consts: SlowVariationConstants,
                                tol: float = DECREASE_TOL, rel_tol: float = 1e-12) -> DecreaseReport:
    """Check ``V(k) = x(k)^T Q(k) x(k)`` along a trajectory.

    ``Q(k+1)`` solves the Lyapunov equation for ``M(k)``; ``Q(0)`` reuses the
    solution for ``M(0)``.  Checks ``||x||^2 <= V <= m^2/(1-p^2) ||x||^2``
    (to relative rounding ``rel_tol``) and ``dV <= tol`` at nonzero states.
    """
    X = _states(traj)
    T = X.shape[0] - 1
    Q = []  # Q[k] for k = 1..T, then Q(0) := Q(1)
    for k, M in enumerate(_matrices(seq)):
        if k >= max(T, 1):
            break
        try:
            Q.append(solve_discrete_lyapunov(M).Q)
        except LyapunovError as err:
            raise LyapunovError(f"step {k}: {err}", k=k) from err
    if len(Q) < max(T, 1):
        raise ValueError(f"sequence has {len(Q)} steps, trajectory needs {T}")
    Q = [Q[0]] + Q[:T]
    V = np.array([X[k] @ Q[k] @ X[k] for k in range(T + 1)])
    sq = np.einsum("ki,ki->k", X, X)
    upper = consts.q_bound
    dV = np.diff(V)
    report = DecreaseReport("quadratic_Q", V, dV, tol, upper_factor=upper)
    for k in range(T + 1):
        if V[k] < sq[k] * (1 - rel_tol):
            report.violations.append((k, "sandwich_lower", float(V[k] - sq[k])))
        if V[k] > upper * sq[k] * (1 + rel_tol):
            report.violations.append((k, "sandwich_upper", float(V[k] - upper * sq[k])))
    for k in np.flatnonzero(dV > tol):
        if np.any(X[k] != 0):
            report.violations.append((int(k), "increase", float(dV[k])))
    return report


__all__ = [
    "ASSUMPTIONS_FAIL", "PREMISES_FAIL", "PREMISES_HOLD", "CertificateReport", "DecreaseReport",
    "LyapunovError", "PremiseFailure", "check_theorem1", "check_theorem2",
    "verify_lyapunov_decrease_T1", "verify_lyapunov_decrease_T2",
]
