"""Projection families, the four-rate dichotomy bound, and its grid checks.

The checked inequalities are

    |T(t,s) P(s)| <= K (h(t)/h(s))^a  mu(|s|)^eps,   t >= s,
    |T(t,s) Q(s)| <= K (k(s)/k(t))^-b nu(|s|)^eps,   s >= t,

with a < 0 <= b, eps >= 0, K > 0 and Q = Id - P.  Operator norms are
spectral norms (n <= 16 keeps singular values cheap).  The nonuniform
factors are always evaluated at |s|; rates themselves are stored over
signed time.  Ratios are formed in log space so that saturated rate
powers never poison a certificate with overflow.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, EstimationError
from .evolution import EvolutionOperator
from .growth import RateQuadruple

_LOG_FLOOR = -745.0  # log of the smallest positive double


def spectral_norm(m: np.ndarray) -> float:
    return float(np.linalg.norm(m, 2))


@dataclass(frozen=True)
class ProjectionFamily:
    """A t-indexed idempotent family P(t); constant or analytic callback."""

    kind: str  # "constant" | "analytic"
    at: Callable[[float], np.ndarray]
    rank: int

    @staticmethod
    def constant(matrix) -> "ProjectionFamily":
        p = np.asarray(matrix, dtype=float)
        rank = int(np.linalg.matrix_rank(p, tol=1e-10))
        return ProjectionFamily("constant", lambda t: p, rank)

    @staticmethod
    def from_callable(fn, rank: int | None = None, probe: float = 0.0) -> "ProjectionFamily":
        if rank is None:
            rank = int(np.linalg.matrix_rank(np.asarray(fn(probe)), tol=1e-10))
        return ProjectionFamily("analytic", fn, rank)

    def __call__(self, t: float) -> np.ndarray:
        return np.asarray(self.at(t), dtype=float)

    def complement(self, t: float) -> np.ndarray:
        p = self(t)
        return np.eye(p.shape[0]) - p

    def idempotency_residual(self, probes) -> float:
        return max(spectral_norm(self(t) @ self(t) - self(t)) for t in probes)


@dataclass(frozen=True)
class DichotomySpec:
    """Claimed bound: projections, rates and the constants (K, a, b, eps)."""

    P: ProjectionFamily
    rates: RateQuadruple
    K: float
    a: float
    b: float
    eps: float

    def __post_init__(self):
        if not (self.a < 0 <= self.b):
            raise ValueError(f"need a < 0 <= b, got a={self.a}, b={self.b}")
        if self.K <= 0:
            raise ValueError(f"need K > 0, got {self.K}")
        if self.eps < 0:
            raise ValueError(f"need eps >= 0, got {self.eps}")

    @property
    def usable_for_conjugacy(self) -> bool:
        """b = 0 makes the unstable bound non-decaying; the linearization
        construction divides by b, so such specs are flagged unusable
        unless the unstable bundle is trivial."""
        return self.b > 0 or self.P.rank == 0 or np.allclose(self.P(0.0), np.eye(self.P(0.0).shape[0]))

    # -- log-space bound evaluation -------------------------------------------

    def log_bound_stable(self, t: float, s: float) -> float:
        """log of K (h(t)/h(s))^a mu(|s|)^eps, valid for t >= s."""
        h, mu = self.rates.h, self.rates.mu
        return math.log(self.K) + self.a * (h.log_u(t) - h.log_u(s)) + self.eps * mu.log_u(abs(s))

    def log_bound_unstable(self, t: float, s: float) -> float:
        """log of K (k(s)/k(t))^-b nu(|s|)^eps, valid for s >= t."""
        k, nu = self.rates.k, self.rates.nu
        return math.log(self.K) - self.b * (k.log_u(s) - k.log_u(t)) + self.eps * nu.log_u(abs(s))


@dataclass
class PairCheck:
    t: float
    s: float
    stable_ratio: float
    unstable_ratio: float
    commute_residual: float


@dataclass
class Certificate:
    """Grid-checked pass/fail record for a claimed dichotomy bound."""

    rows: list
    worst_stable_ratio: float
    worst_unstable_ratio: float
    worst_commute_residual: float
    tol: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "pairs": len(self.rows),
            "worst_stable_ratio": self.worst_stable_ratio,
            "worst_unstable_ratio": self.worst_unstable_ratio,
            "worst_commute_residual": self.worst_commute_residual,
            "tol": self.tol,
            "passed": self.passed,
        }


def square_grid(lo: float, hi: float, step: float):
    """All (t, s) pairs with t >= s on a uniform grid, diagonal included."""
    vals = np.arange(lo, hi + step * 0.5, step)
    return [(float(t), float(s)) for i, t in enumerate(vals) for s in vals[: i + 1]]


def _log_ratio(norm_value: float, log_bound: float) -> float:
    if norm_value <= 0.0:
        return 0.0
    return math.exp(min(math.log(norm_value) - log_bound, 700.0))


def verify(
    spec: DichotomySpec,
    op: EvolutionOperator,
    grid,
    tol: float = 1e-6,
    threads: int = 1,
) -> Certificate:
    """Check both bound regimes and the commutation identity on a pair grid.

    Each grid pair is normalized to t >= s; the stable bound is checked on
    (t, s), the unstable bound on the reversed pair (s plays the role of the
    later time), and the commutation residual |P(t)T(t,s) - T(t,s)P(s)| is
    taken over both orderings.  Pass iff every ratio <= 1 + tol and every
    commutation residual <= tol.
    """
    if spec.rates.common_domain() == "half" and op.field.domain == "full":
        raise DomainError("half-line rates cannot certify a full-line system")

    def check(pair):
        hi, lo = (pair[0], pair[1]) if pair[0] >= pair[1] else (pair[1], pair[0])
        p_lo, p_hi = spec.P(lo), spec.P(hi)
        q_hi = np.eye(p_hi.shape[0]) - p_hi
        fwd = op.evolve(hi, lo)
        stable = _log_ratio(spectral_norm(fwd @ p_lo), spec.log_bound_stable(hi, lo))
        if hi == lo:
            bwd = fwd
        else:
            bwd = op.evolve(lo, hi)
        unstable = _log_ratio(spectral_norm(bwd @ q_hi), spec.log_bound_unstable(lo, hi))
        commute = max(
            spectral_norm(p_hi @ fwd - fwd @ p_lo),
            spectral_norm(p_lo @ bwd - bwd @ p_hi),
        )
        return PairCheck(hi, lo, stable, unstable, commute)

    pairs = list(grid)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(check, pairs))
    else:
        rows = [check(p) for p in pairs]

    ws = max((r.stable_ratio for r in rows), default=0.0)
    wu = max((r.unstable_ratio for r in rows), default=0.0)
    wc = max((r.commute_residual for r in rows), default=0.0)
    passed = ws <= 1.0 + tol and wu <= 1.0 + tol and wc <= tol
    return Certificate(rows, ws, wu, wc, tol, passed)


@dataclass
class ProjectionReport:
    max_commute_residual: float
    max_idempotency_residual: float

    @property
    def passed(self) -> bool:
        return self.max_commute_residual <= 1e-6 and self.max_idempotency_residual <= 1e-10


def check_projection(P: ProjectionFamily, op: EvolutionOperator, grid) -> ProjectionReport:
    """Residuals of P(t)T(t,s) = T(t,s)P(s) and P(t)^2 = P(t) over a grid."""
    commute = 0.0
    idem = 0.0
    for t, s in grid:
        m = op.evolve(t, s)
        commute = max(commute, spectral_norm(P(t) @ m - m @ P(s)))
        idem = max(idem, spectral_norm(P(t) @ P(t) - P(t)))
    return ProjectionReport(commute, idem)


@dataclass
class EstimateDiagnostics:
    stable_pairs: int
    unstable_pairs: int
    stable_residual: float
    unstable_residual: float
    warnings: list = field(default_factory=list)


def estimate_constants(
    op: EvolutionOperator,
    P: ProjectionFamily,
    rates: RateQuadruple,
    grid,
    eps_fixed: float | None = None,
    min_pairs: int = 20,
) -> tuple[DichotomySpec, EstimateDiagnostics]:
    """Fit (K, a, b, eps) by least squares in log space, then inflate K.

    Stable side: log|T(t,s)P(s)| ~ log K + a (log h(t)-log h(s)) + eps log mu(|s|)
    over pairs with t >= s; unstable side mirrored.  One eps serves both
    sides (the definition has a single eps), reconciled by max; raising eps
    only weakens the bound since mu(|s|) >= 1.  log K is inflated by the
    worst positive residual so the returned spec verifies on its own
    training grid by construction.
    """
    h, k, mu, nu = rates.rates()
    warnings = []

    rows_s, ys = [], []
    rows_u, yu = [], []
    for t, s in grid:
        hi, lo = (t, s) if t >= s else (s, t)
        p_lo = P(lo)
        q_hi = np.eye(p_lo.shape[0]) - P(hi)
        ns = spectral_norm(op.evolve(hi, lo) @ p_lo)
        if ns > 0:
            rows_s.append([1.0, h.log_u(hi) - h.log_u(lo), mu.log_u(abs(lo))])
            ys.append(math.log(ns))
        nu_val = spectral_norm(op.evolve(lo, hi) @ q_hi)
        if nu_val > 0:
            rows_u.append([1.0, -(k.log_u(hi) - k.log_u(lo)), nu.log_u(abs(hi))])
            yu.append(math.log(nu_val))

    def fit(rows, y, side):
        X = np.asarray(rows)
        y = np.asarray(y)
        if eps_fixed is not None:
            y = y - eps_fixed * X[:, 2]
            X = X[:, :2]
        rank = np.linalg.matrix_rank(X)
        if rank < X.shape[1]:
            raise EstimationError(f"{side} regression is rank-deficient on this grid")
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        if eps_fixed is not None:
            coef = np.append(coef, eps_fixed)
        return coef

    if len(rows_s) < min_pairs:
        raise EstimationError(f"need >= {min_pairs} stable pairs, got {len(rows_s)}")
    logK_s, a_fit, eps_s = fit(rows_s, ys, "stable")
    if a_fit >= 0:
        raise EstimationError(f"fitted stable exponent a={a_fit:.4g} is not negative")

    if len(rows_u) < min_pairs:
        warnings.append(f"unstable side has {len(rows_u)} pairs (Q nearly trivial); b set to 0")
        b_fit, eps_u, logK_u = 0.0, 0.0, -math.inf
    else:
        logK_u, b_fit, eps_u = fit(rows_u, yu, "unstable")
        if b_fit < 0:
            warnings.append(f"fitted b={b_fit:.4g} was negative; clamped to 0")
            b_fit = 0.0

    eps = max(eps_s, eps_u, 0.0)
    if eps_s < 0 or eps_u < 0:
        warnings.append("a fitted eps was negative; clamped to 0")
    logK = max(logK_s, logK_u, 0.0 if not math.isfinite(logK_u) else logK_u)

    candidate = DichotomySpec(P, rates, math.exp(logK), float(a_fit), float(b_fit), float(eps))

    # final inflation: push log K up by the worst training-grid violation
    worst_log = 0.0
    for t, s in grid:
        hi, lo = (t, s) if t >= s else (s, t)
        p_lo = P(lo)
        q_hi = np.eye(p_lo.shape[0]) - P(hi)
        ns = spectral_norm(op.evolve(hi, lo) @ p_lo)
        if ns > 0:
            worst_log = max(worst_log, math.log(ns) - candidate.log_bound_stable(hi, lo))
        nv = spectral_norm(op.evolve(lo, hi) @ q_hi)
        if nv > 0:
            worst_log = max(worst_log, math.log(nv) - candidate.log_bound_unstable(lo, hi))
    if worst_log > 0:
        candidate = DichotomySpec(
            P, rates, math.exp(logK + worst_log * (1 + 1e-12) + 1e-14), float(a_fit), float(b_fit), float(eps)
        )

    resid_s = float(np.max(np.abs(np.asarray(rows_s) @ np.array([logK_s, a_fit, eps_s]) - ys))) if rows_s else 0.0
    resid_u = (
        float(np.max(np.abs(np.asarray(rows_u) @ np.array([logK_u, b_fit, eps_u]) - yu)))
        if len(rows_u) >= min_pairs
        else 0.0
    )
    diag = EstimateDiagnostics(len(rows_s), len(rows_u), resid_s, resid_u, warnings)
    return candidate, diag
