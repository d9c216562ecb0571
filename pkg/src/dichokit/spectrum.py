"""Generalized Lyapunov exponents relative to growth rates.

For a block system x1' = W1(t) x1 (dim l) and x2' = W2(t) x2 (dim n-l), the
exponent of a solution relative to a rate u is

    limsup_{t -> +inf}  log |x(t)| / log u(t),

approximated by the supremum over a tail window of the horizon, with the
window spread reported as the trust measure (no finite computation yields a
true limsup).  Orbit norms are integrated in renormalized form (unit
direction plus log-norm), so exponents of strongly expanding or contracting
modes never overflow.

Regularity coefficients pair forward and adjoint exponents over dual bases.
The true minimum over all dual bases is a hard search; we return certified
upper bounds over a candidate set, which downstream only ever weakens the
claimed dichotomy (a larger nonuniformity exponent), and the claim is then
grid-checked by the dichotomy module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .dichotomy import DichotomySpec, ProjectionFamily
from .errors import DichokitError
from .growth import GrowthRate, RateQuadruple, product_rate
from .system import BlockSystem, CoefficientField, adjoint

GAP_THRESHOLD = 0.05
SPREAD_LIMIT = 0.2


@dataclass
class ExponentTrace:
    """One column's exponent estimate with its tail-window samples."""

    times: np.ndarray
    values: np.ndarray
    estimate: float
    spread: float

    @property
    def reliable(self) -> bool:
        return math.isfinite(self.estimate) and self.spread <= SPREAD_LIMIT


def lyapunov_exponent(
    field_w: CoefficientField,
    rate: GrowthRate,
    x0,
    horizon: float,
    window: float = 0.2,
    samples: int = 200,
    rel_tol: float = 1e-9,
) -> ExponentTrace:
    """Tail-window exponent of the solution through x0 at time 0.

    x0 = 0 gets the distinguished value -inf.  Requires log u(horizon) > 10
    so the denominator dominates integration error.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if np.linalg.norm(x0) == 0.0:
        return ExponentTrace(np.array([]), np.array([]), -math.inf, 0.0)
    if rate.log_u(horizon) <= 10.0:
        raise ValueError(f"horizon too short: log u({horizon}) <= 10")
    n = field_w.dim

    def rhs(t, state):
        y = state[:n]
        w = field_w(t)
        wy = w @ y
        # projective form: norm drift is neutral, not exponentially unstable
        growth = float(y @ wy) / float(y @ y)
        return np.append(wy - growth * y, growth)

    y0 = np.append(x0 / np.linalg.norm(x0), math.log(np.linalg.norm(x0)))
    t_lo = (1.0 - window) * horizon
    times = np.linspace(t_lo, horizon, samples)
    sol = solve_ivp(
        rhs,
        (0.0, horizon),
        y0,
        method="RK45",
        rtol=rel_tol,
        atol=1e-12,
        t_eval=times,
        dense_output=False,
    )
    if not sol.success:
        raise DichokitError(f"exponent integration failed: {sol.message}")
    log_norms = sol.y[n]
    denom = np.array([rate.log_u(t) for t in times])
    values = log_norms / denom
    return ExponentTrace(times, values, float(np.max(values)), float(np.max(values) - np.min(values)))


def _cluster(estimates: list[float], gap: float = GAP_THRESHOLD):
    """Sorted distinct values with multiplicities, grouped within gap."""
    order = sorted(estimates)
    clusters: list[list[float]] = []
    for v in order:
        if clusters and v - clusters[-1][-1] <= gap:
            clusters[-1].append(v)
        else:
            clusters.append([v])
    return [(float(np.mean(c)), len(c)) for c in clusters]


@dataclass
class SpectrumReport:
    """Distinct exponents of both blocks and their adjoints."""

    values_E: list
    values_F: list
    adjoint_E: list
    adjoint_F: list
    horizon: float
    traces: dict = field(default_factory=dict)
    reliable: bool = True

    @property
    def lambda_top(self) -> float:
        """Largest stable-block exponent (the lambda_r of the E side)."""
        return self.values_E[-1][0]

    @property
    def chi_bottom(self) -> float:
        """Smallest unstable-block exponent (the chi_1 of the F side)."""
        return self.values_F[0][0]


def _column_exponents(field_w, rate, horizon, window):
    traces = []
    for j in range(field_w.dim):
        e = np.zeros(field_w.dim)
        e[j] = 1.0
        traces.append(lyapunov_exponent(field_w, rate, e, horizon, window))
    return traces


def spectrum(
    block: BlockSystem,
    h: GrowthRate,
    k: GrowthRate,
    hbar: GrowthRate | None = None,
    kbar: GrowthRate | None = None,
    horizon: float = 50.0,
    window: float = 0.2,
) -> SpectrumReport:
    """Exponents of the fundamental-matrix columns of both blocks.

    The adjoint systems y' = -W(t)^T y are measured against hbar/kbar
    (defaulting to h/k).  A report is marked unreliable when any column's
    tail-window spread exceeds 0.2.
    """
    hbar = hbar or h
    kbar = kbar or k
    tr_e = _column_exponents(block.W1, h, horizon, window)
    tr_f = _column_exponents(block.W2, k, horizon, window)
    tr_eb = _column_exponents(adjoint(block.W1), hbar, horizon, window)
    tr_fb = _column_exponents(adjoint(block.W2), kbar, horizon, window)

    report = SpectrumReport(
        values_E=_cluster([t.estimate for t in tr_e]),
        values_F=_cluster([t.estimate for t in tr_f]),
        adjoint_E=_cluster([t.estimate for t in tr_eb]),
        adjoint_F=_cluster([t.estimate for t in tr_fb]),
        horizon=horizon,
        traces={"E": tr_e, "F": tr_f, "E_adjoint": tr_eb, "F_adjoint": tr_fb},
        reliable=all(t.reliable for t in tr_e + tr_f + tr_eb + tr_fb),
    )
    # property (5): at most as many distinct values as the block dimension
    assert len(report.values_E) <= block.W1.dim
    assert len(report.values_F) <= block.W2.dim
    return report


@dataclass(frozen=True)
class DualBasisPair:
    """Basis columns and dual columns with Kronecker pairing."""

    basis: np.ndarray
    dual: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        d = np.asarray(self.dual, dtype=float)
        object.__setattr__(self, "basis", b)
        object.__setattr__(self, "dual", d)
        if np.max(np.abs(b.T @ d - np.eye(b.shape[1]))) > 1e-10:
            raise ValueError("basis and dual do not pair to the identity")

    @staticmethod
    def from_basis(basis) -> "DualBasisPair":
        b = np.asarray(basis, dtype=float)
        return DualBasisPair(b, np.linalg.inv(b).T)


@dataclass
class RegularityReport:
    """Certified upper bounds on the two regularity coefficients."""

    gamma: float
    gamma_bar: float
    basis_E: DualBasisPair
    basis_F: DualBasisPair
    per_candidate_E: list = field(default_factory=list)
    per_candidate_F: list = field(default_factory=list)


def _default_candidates(dim: int):
    return [DualBasisPair.from_basis(np.eye(dim))]


def _best_pairing(field_w, rate, rate_bar, candidates, horizon, window):
    adj = adjoint(field_w)
    best = math.inf
    best_pair = None
    scores = []
    for cand in candidates:
        pair_max = -math.inf
        for i in range(cand.basis.shape[1]):
            fwd = lyapunov_exponent(field_w, rate, cand.basis[:, i], horizon, window).estimate
            bwd = lyapunov_exponent(adj, rate_bar, cand.dual[:, i], horizon, window).estimate
            pair_max = max(pair_max, fwd + bwd)
        scores.append(pair_max)
        if pair_max < best:
            best, best_pair = pair_max, cand
    return best, best_pair, scores


def regularity(
    block: BlockSystem,
    h: GrowthRate,
    k: GrowthRate,
    hbar: GrowthRate | None = None,
    kbar: GrowthRate | None = None,
    candidates_E: list | None = None,
    candidates_F: list | None = None,
    horizon: float = 50.0,
    window: float = 0.2,
) -> RegularityReport:
    """Upper-bound the regularity coefficients over candidate dual bases.

    Each candidate pairs basis vector i with dual vector i; the candidate's
    score is the max paired sum of forward and adjoint exponents, and the
    bound is the min over candidates.  The exact min over all dual bases is
    not computed.
    """
    hbar = hbar or h
    kbar = kbar or k
    cands_e = candidates_E or _default_candidates(block.W1.dim)
    cands_f = candidates_F or _default_candidates(block.W2.dim)
    gamma, pair_e, scores_e = _best_pairing(block.W1, h, hbar, cands_e, horizon, window)
    gamma_bar, pair_f, scores_f = _best_pairing(block.W2, k, kbar, cands_f, horizon, window)
    return RegularityReport(gamma, gamma_bar, pair_e, pair_f, scores_e, scores_f)


def dichotomy_from_spectrum(
    report: SpectrumReport,
    reg: RegularityReport,
    h: GrowthRate,
    k: GrowthRate,
    hbar: GrowthRate,
    kbar: GrowthRate,
    eps_tilde: float,
    block: BlockSystem,
    K: float = 1.0,
) -> DichotomySpec:
    """Assemble the dichotomy claim promised by negative/positive exponents.

    Needs lambda_top < 0 < chi_bottom.  Constants: a = lambda_top + et,
    b = chi_bottom + et, eps = max(gamma, gamma_bar) + et (clamped at 0),
    mu = h*hbar, nu = k*kbar, P = the block projection.  The theorem only
    asserts existence of a constant; K is a caller-tunable default whose
    claim is then tested by dichotomy.verify.
    """
    if eps_tilde <= 0:
        raise ValueError("eps_tilde must be positive")
    lam, chi = report.lambda_top, report.chi_bottom
    if not (lam < 0 < chi):
        raise DichokitError(f"sign condition violated: lambda_top={lam:.4g}, chi_bottom={chi:.4g}")
    a = lam + eps_tilde
    if a >= 0:
        raise DichokitError(f"eps_tilde={eps_tilde} swallows the stable margin (a={a:.4g})")
    return DichotomySpec(
        P=ProjectionFamily.constant(block.projection()),
        rates=RateQuadruple(h, k, product_rate(h, hbar), product_rate(k, kbar)),
        K=K,
        a=a,
        b=chi + eps_tilde,
        eps=max(0.0, max(reg.gamma, reg.gamma_bar) + eps_tilde),
    )
