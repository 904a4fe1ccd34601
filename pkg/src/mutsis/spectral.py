"""Spectral radius, discrete Lyapunov solves and slow-variation constants.

The matrix norm used throughout is the induced 2-norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np


class ConvergenceError(RuntimeError):
    """Power iteration did not converge; carries the best bracket found."""

    def __init__(self, message: str, lower: float, upper: float):
        super().__init__(f"{message} (rho in [{lower:.12g}, {upper:.12g}])")
        self.lower = lower
        self.upper = upper


class LyapunovError(ValueError):
    """No positive definite solution of the discrete Lyapunov equation."""

    def __init__(self, message: str, k: int | None = None):
        super().__init__(message)
        self.k = k


def _square(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def is_symmetric(M: np.ndarray, atol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(M - M.T), initial=0.0) <= atol)


SQUARINGS = 4
SQUARING_MAX_N = 64


def spectral_radius(M, rtol: float = 1e-10, max_iter: int = 3000, restarts: int = 1,
                    seed: int = 0, fallback: bool = True) -> float:
    """Largest eigenvalue magnitude of ``M``.

    Symmetric input goes through a symmetric eigensolver.  Nonnegative input
    uses power iteration with Collatz-Wielandt bounds (random positive
    restarts if the first start stalls), capped by the largest Gershgorin
    row sum.  Other matrices use a dense eigenvalue solve.

    Power iteration converges only algebraically when the Perron root sits
    in a Jordan block.  If it has not converged after ``max_iter`` steps, a
    dense solve is accepted provided it lies inside the proven bracket;
    with ``fallback=False`` (or if it does not) :class:`ConvergenceError`
    is raised instead.
    """
    M = _square(M)
    n = M.shape[0]
    if n == 0:
        return 0.0
    scale = max(1.0, float(np.max(np.abs(M))))
    if is_symmetric(M, 1e-12 * scale):
        w = np.linalg.eigvalsh(0.5 * (M + M.T))
        return float(max(abs(w[0]), abs(w[-1])))
    if np.all(M >= 0):
        try:
            return _perron_root(M, rtol, max_iter, restarts, seed)
        except ConvergenceError as err:
            if not fallback:
                raise
            dense = float(np.max(np.abs(np.linalg.eigvals(M))))
            slack = 1e-9 * max(1.0, err.upper)
            if not err.lower - slack <= dense <= err.upper + slack:
                raise
            return min(max(dense, err.lower), err.upper)
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def _perron_root(M: np.ndarray, rtol: float, max_iter: int, restarts: int, seed: int) -> float:
    n = M.shape[0]
    gersh = float(np.max(M.sum(axis=1)))
    if gersh == 0.0:
        return 0.0
    # a positive diagonal rules out periodicity; otherwise shift to break it
    shift = 0.0 if np.all(np.diag(M) > 0) else 0.5 * gersh
    c = gersh + shift
    B = (M + shift * np.eye(n)) / c
    # small matrices: iterate on B^P, P = 2^SQUARINGS, so one pass does P steps
    P = 1
    if n <= SQUARING_MAX_N:
        for _ in range(SQUARINGS):
            B = B @ B
        P = 2 ** SQUARINGS

    def to_rho(r: float) -> float:
        return c * r ** (1.0 / P) - shift

    rng = np.random.default_rng(seed)
    best_lo, best_hi = 0.0, gersh
    for attempt in range(restarts + 1):
        v = np.ones(n) if attempt == 0 else rng.uniform(0.5, 1.5, n)
        for _ in range(-(-max_iter // P)):
            w = B @ v
            if not np.all(v > 0):
                break  # reducible start collapsed onto a face; restart elsewhere
            ratios = w / v
            # Collatz-Wielandt: rho(B) lies in [min ratio, max ratio] for positive v
            lo, hi = to_rho(float(ratios.min())), to_rho(float(ratios.max()))
            best_lo, best_hi = max(best_lo, lo), min(best_hi, hi)
            if best_hi - best_lo <= rtol * max(best_hi, 1e-300):
                return 0.5 * (best_lo + best_hi)
            v = w / w.max()
    raise ConvergenceError("power iteration did not converge", best_lo, best_hi)


def matrix_norm(M) -> float:
    """Induced 2-norm, ``sqrt(rho(M^T M))``."""
    M = _square(M)
    if M.size == 0:
        return 0.0
    # M^T M is symmetric positive semidefinite, so its largest eigenvalue is rho
    return math.sqrt(max(float(np.linalg.eigvalsh(M.T @ M)[-1]), 0.0))


def max_abs(M) -> float:
    return float(np.max(np.abs(M), initial=0.0))


@dataclass(frozen=True, eq=False)
class LyapunovSolution:
    Q: np.ndarray
    residual: float
    iterations: int


def solve_discrete_lyapunov(M, tol: float = 1e-10, rho: float | None = None,
                            max_doublings: int = 200) -> LyapunovSolution:
    """Solve ``M^T Q M - Q = -I`` for a Schur-stable ``M``.

    Partial sums of ``I + sum_j (M^T)^j M^j`` are accumulated with repeated
    squaring (each pass doubles the number of terms), then polished with the
    fixed-point map ``Q <- I + M^T Q M``.
    """
    M = _square(M)
    n = M.shape[0]
    if rho is None:
        rho = spectral_radius(M)
    if rho >= 1.0:
        raise LyapunovError(f"rho(M) = {rho:.12g} >= 1: no positive definite solution")
    eye = np.eye(n)
    Q = eye.copy()
    P = M.copy()
    it = 0
    while it < max_doublings:
        it += 1
        update = P.T @ Q @ P
        Q = Q + update
        if max_abs(update) <= 1e-17 * max_abs(Q):
            break
        P = P @ P
    else:
        raise LyapunovError(f"series did not converge in {max_doublings} doublings")
    for _ in range(3):
        Q = eye + M.T @ Q @ M
        Q = 0.5 * (Q + Q.T)
        it += 1
    residual = max_abs(M.T @ Q @ M - Q + eye)
    if residual > tol:
        raise LyapunovError(f"Lyapunov residual {residual:.3g} exceeds tolerance {tol:.3g}")
    return LyapunovSolution(Q, residual, it)


def _safe_exp(v: float) -> float:
    try:
        return math.exp(v)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class SlowVariationConstants:
    """Constants of the slowly-varying stability argument, observed over a finite horizon.

    ``m`` and ``kappa_threshold`` are computed in log space; ``log_m`` keeps
    the exact magnitude when ``m`` overflows a double.
    """

    alpha1: float
    mu: float
    p: float
    L: float
    m: float
    log_m: float
    epsilon: float
    kappa: float
    kappa_threshold: float
    n: int
    horizon: int
    rho_series: tuple[float, ...] = field(repr=False, default=())
    diff_series: tuple[float, ...] = field(repr=False, default=())
    note: str = ""

    @property
    def rho_ok(self) -> bool:
        return self.alpha1 < 1.0

    @property
    def kappa_ok(self) -> bool:
        return self.kappa <= self.kappa_threshold

    @property
    def q_bound(self) -> float:
        """Upper bound on ``||Q(k)||``: ``m^2 / (1 - p^2)``."""
        if not self.rho_ok:
            return math.inf
        return _safe_exp(2 * self.log_m - math.log(1 - self.p ** 2))

    @property
    def q_diff_bound(self) -> float:
        """Upper bound on ``||Q(k+1) - Q(k)||``: ``2 kappa m^4 L / (1 - p^2)^2``."""
        if not self.rho_ok:
            return math.inf
        if self.kappa == 0.0 or self.L == 0.0:
            return 0.0
        return _safe_exp(math.log(2 * self.kappa * self.L) + 4 * self.log_m
                         - 2 * math.log(1 - self.p ** 2))

    def power_bound(self, F: int) -> float:
        """Upper bound on ``||M(k)^F||``: ``m p^F``."""
        if not self.rho_ok:
            return math.inf
        return _safe_exp(self.log_m + F * math.log(self.p))


def slow_variation_constants(mats: Iterable[np.ndarray], epsilon: float,
                             n: int | None = None) -> SlowVariationConstants:
    """Constants from a finite sequence of state matrices (consumed once).

    ``alpha1 = max rho(M(k))``, ``L = max ||M(k)||``,
    ``kappa = max ||M(k+1) - M(k)||``, ``mu = (1 - alpha1)/2``, ``p = 1 - mu``,
    ``m = p (p + L)^(n-1) / mu^n`` and the admissible variation
    ``(1 - p^2)^2 (1 - epsilon) / (2 m^4 L)``.  When ``alpha1 >= 1`` the
    constants are still returned, with ``m = inf`` and a zero threshold.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    rhos, diffs = [], []
    L = 0.0
    prev = None
    for M in mats:
        M = _square(M)
        rhos.append(spectral_radius(M))
        L = max(L, matrix_norm(M))
        if prev is not None:
            diffs.append(matrix_norm(M - prev))
        prev = M
    if prev is None:
        raise ValueError("need at least one matrix")
    if n is None:
        n = prev.shape[0]
    alpha1 = max(rhos)
    note = ""
    if diffs:
        kappa = max(diffs)
    else:
        kappa = 0.0
        note = "no variation observed (single step)"
    mu = (1.0 - alpha1) / 2.0
    p = 1.0 - mu
    if mu > 0:
        log_m = math.log(p) + (n - 1) * math.log(p + L) - n * math.log(mu)
        m = _safe_exp(log_m)
        if L == 0.0:
            threshold = math.inf
        else:
            threshold = _safe_exp(2 * math.log(1 - p ** 2) + math.log(1 - epsilon)
                                  - math.log(2 * L) - 4 * log_m)
    else:
        log_m, m, threshold = math.inf, math.inf, 0.0
        note = (note + "; " if note else "") + f"alpha1 = {alpha1:.6g} >= 1, spectral premise fails"
    return SlowVariationConstants(alpha1, mu, p, L, m, log_m, epsilon, kappa, threshold, n,
                                  len(rhos) - 1, tuple(rhos), tuple(diffs), note)


@dataclass(frozen=True)
class BoundCheck:
    name: str
    k: int
    lhs: float
    rhs: float
    F: int | None = None

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs


@dataclass
class BoundReport:
    """Observed slack of every appendix inequality along a sequence.

    Families: ``power`` (``||M(k)^F|| <= m p^F``), ``q_norm``
    (``||Q(k+1)|| <= m^2/(1-p^2)``) and ``q_diff``
    (``||Q(k+1) - Q(k)|| <= 2 kappa m^4 L/(1-p^2)^2``).
    """

    constants: SlowVariationConstants
    checks: list[BoundCheck] = field(default_factory=list)
    applicable: bool = True
    note: str = ""

    @property
    def violations(self) -> list[BoundCheck]:
        return [c for c in self.checks if not c.holds]

    @property
    def ok(self) -> bool:
        return not self.violations

    def min_slack(self, name: str) -> float:
        return min((c.slack for c in self.checks if c.name == name), default=math.inf)

    def to_text(self) -> str:
        c = self.constants
        lines = [
            f"# alpha1={c.alpha1!r} mu={c.mu!r} p={c.p!r} L={c.L!r} m={c.m!r} log_m={c.log_m!r}",
            f"# epsilon={c.epsilon!r} kappa={c.kappa!r} kappa_threshold={c.kappa_threshold!r}"
            f" (observed over horizon {c.horizon})",
        ]
        if c.note:
            lines.append(f"# note: {c.note}")
        if not self.applicable:
            lines.append(f"# {self.note}")
            return "\n".join(lines) + "\n"
        lines.append("name\tk\tF\tlhs\trhs\tslack")
        for b in self.checks:
            F = "" if b.F is None else str(b.F)
            lines.append(f"{b.name}\t{b.k}\t{F}\t{b.lhs!r}\t{b.rhs!r}\t{b.slack!r}")
        lines.append(f"# violations: {len(self.violations)}")
        return "\n".join(lines) + "\n"


def verify_appendix_bounds(mats: Iterable[np.ndarray], consts: SlowVariationConstants,
                           F_max: int = 64) -> BoundReport:
    """Evaluate the power, ``||Q||`` and ``||Q(k+1) - Q(k)||`` bounds at every k."""
    report = BoundReport(consts)
    if not consts.rho_ok:
        report.applicable = False
        report.note = "slow-variation premises not met; bounds not asserted"
        return report
    qb = consts.q_bound
    qdb = consts.q_diff_bound
    Q_prev = None
    for k, M in enumerate(mats):
        M = _square(M)
        P = np.eye(M.shape[0])
        for F in range(1, F_max + 1):
            P = P @ M
            report.checks.append(BoundCheck("power", k, matrix_norm(P), consts.power_bound(F), F))
        rho = consts.rho_series[k] if k < len(consts.rho_series) else None
        try:
            Q = solve_discrete_lyapunov(M, rho=rho).Q
        except LyapunovError as err:
            raise LyapunovError(f"step {k}: {err}", k=k) from err
        report.checks.append(BoundCheck("q_norm", k, matrix_norm(Q), qb))
        if Q_prev is not None:
            report.checks.append(BoundCheck("q_diff", k, matrix_norm(Q - Q_prev), qdb))
        Q_prev = Q
    return report
