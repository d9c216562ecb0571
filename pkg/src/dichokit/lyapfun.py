"""Quadratic forms H(t, x) = <S(t) x, x> attached to a dichotomy.

S(t) is built from the verified bound by the two-integral construction

    S(t) =  int_t^inf  (T(v,t)P(t))^T (T(v,t)P(t)) (h(v)/h(t))^{-2(a+d)} h'(v)/h(v) dv
          - int_-inf^t (T(v,t)Q(t))^T (T(v,t)Q(t)) (k(t)/k(v))^{ 2(b-d)} k'(v)/k(v) dv

for a damping constant 0 < d < min(-a, b).  Both integrands are dominated
by the dichotomy envelope times (rate ratio)^{-2d} (rate slope), whose
improper tail integrates in closed form, so truncation points are certified
analytically before any quadrature runs.  The sign of H along orbits
classifies stable and unstable vectors, and the derivative inequalities it
satisfies are checked numerically on grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad_vec

from .dichotomy import DichotomySpec, spectral_norm
from .errors import DichokitError, DomainError
from .evolution import EvolutionOperator
from .system import CoefficientField
from .tails import time_backward_for_log_drop, time_for_log_decrease


@dataclass(frozen=True)
class QuadratureConfig:
    tail_tol: float = 1e-8  # relative envelope mass allowed past the cutoff
    quad_tol: float = 1e-10
    reproject_window: float = 2.0  # bundle reprojection spacing along the solve

    def __post_init__(self):
        if self.tail_tol <= 0 or self.quad_tol <= 0 or self.reproject_window <= 0:
            raise ValueError("quadrature tolerances must be positive")


def _projected_dense(shift_op: EvolutionOperator, projector, a: float, b: float, m0, window: float):
    """Dense solution of the shifted system, reprojected every `window`.

    The evolved columns live in a bundle that commutes with the flow, so
    applying the projector at window boundaries is the identity in exact
    arithmetic; numerically it kills integrator noise that would otherwise
    grow along the complementary directions over long spans.
    """
    direction = 1.0 if b >= a else -1.0
    pieces = []
    cur = np.asarray(m0, dtype=float)
    lo = a
    while (b - lo) * direction > 1e-12:
        hi = min(lo + window, b) if direction > 0 else max(lo - window, b)
        dense = shift_op.matrix_solution(lo, hi, cur)
        pieces.append((lo, hi, dense))
        cur = projector(hi) @ dense(hi)
        lo = hi

    def at(v):
        for plo, phi, dense in pieces:
            if (plo <= v <= phi) if direction > 0 else (phi <= v <= plo):
                return dense(v)
        raise ValueError(f"{v} outside solved span [{a}, {b}]")

    return at


@dataclass
class QuadraticLyapunov:
    """Grid-backed symmetric matrix family with linear interpolation."""

    times: np.ndarray
    matrices: np.ndarray
    dbar: float
    spec: DichotomySpec
    min_abs_eigenvalue: float = 0.0
    norm_margin: float = math.inf  # slack in |S(t)| <= (K^2/2d)(mu^2eps + nu^2eps)

    def S(self, t: float) -> np.ndarray:
        ts = self.times
        if t < ts[0] - 1e-9 or t > ts[-1] + 1e-9:
            raise ValueError(f"t={t} outside the S grid [{ts[0]}, {ts[-1]}]")
        i = int(np.clip(np.searchsorted(ts, t) - 1, 0, ts.size - 2))
        w = (t - ts[i]) / (ts[i + 1] - ts[i])
        w = min(max(w, 0.0), 1.0)
        return (1 - w) * self.matrices[i] + w * self.matrices[i + 1]

    def H(self, t: float, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.S(t) @ x)


@dataclass(frozen=True)
class LyapunovHypotheses:
    """Constants of the sufficiency conditions (decay rates eta, local
    growth constants l, exponents kk, window d)."""

    eta1: float
    eta2: float
    dhat: float
    k1: float = 0.0
    k2: float = 0.0
    l1: float = 1.0
    l2: float = 1.0

    def __post_init__(self):
        if self.eta1 <= 0 or self.eta2 <= 0 or self.dhat <= 0:
            raise ValueError("eta1, eta2, dhat must be positive")
        if min(self.k1, self.k2, self.l1, self.l2) < 0:
            raise ValueError("k and l constants must be nonnegative")


def construct_S(
    spec: DichotomySpec,
    op: EvolutionOperator,
    dbar: float,
    times,
    quad: QuadratureConfig | None = None,
) -> QuadraticLyapunov:
    """Evaluate the two-integral construction on a time grid.

    Truncation: the stable integrand past V is bounded by
    K^2 mu(|t|)^{2 eps} (h(V)/h(t))^{-2 dbar} / (2 dbar), so V is placed
    where the ratio factor has fallen below tail_tol; mirrored backward for
    the unstable part.  Each finite integral runs through adaptive
    vector quadrature with the evolved columns taken from one dense ODE
    solution per side (the integrand lives in the decaying bundle, so the
    dense solve is well-conditioned).
    """
    quad = quad or QuadratureConfig()
    if not (0.0 < dbar < min(-spec.a, spec.b) or (spec.b == 0.0 and 0.0 < dbar < -spec.a)):
        raise ValueError(f"dbar must lie in (0, min(-a, b)) = (0, {min(-spec.a, spec.b)})")
    h, k = spec.rates.h, spec.rates.k
    times = np.sort(np.asarray(times, dtype=float))
    n = spec.P(times[0]).shape[0]
    log_drop = math.log(1.0 / quad.tail_tol)

    # The rate-power weights are folded into shifted linear systems:
    # G(v) = T(v,t)P(t) (h(v)/h(t))^{-(a+dbar)} solves G' = (A - (a+dbar) h'/h) G,
    # which decays like (ratio)^{-dbar}, so no growing weight ever multiplies
    # the integrator's absolute error floor.
    def shifted_op(coeff, rate):
        fld = CoefficientField(
            n,
            lambda v: op.field(v) - coeff * rate.dlog(v) * np.eye(n),
            op.field.domain,
            op.field.assumed_continuous,
        )
        return EvolutionOperator(fld, op.config, anchor=op.anchor)

    stable_op = shifted_op(spec.a + dbar, h)
    unstable_op = shifted_op(spec.b - dbar, k)

    mats = []
    min_eig = math.inf
    margin = math.inf
    for t in times:
        p = spec.P(t)
        q = np.eye(n) - p
        s_mat = np.zeros((n, n))

        if spectral_norm(p) > 0:
            v_cut = time_for_log_decrease(h, t, -2.0 * dbar, log_drop)
            gsol = _projected_dense(stable_op, spec.P, t, v_cut, p, quad.reproject_window)

            def stable_integrand(v):
                g = gsol(v)
                return (g.T @ g) * h.dlog(v)

            part, _ = quad_vec(stable_integrand, t, v_cut, epsabs=quad.quad_tol, epsrel=quad.quad_tol)
            s_mat = s_mat + part

        if spectral_norm(q) > 0:
            if op.field.domain == "half":
                raise DomainError("the unstable integral needs a full-line system")
            w_cut = time_backward_for_log_drop(k, t, log_drop / (2.0 * dbar))
            zsol = _projected_dense(
                unstable_op, lambda v: np.eye(n) - spec.P(v), t, w_cut, q, quad.reproject_window
            )

            def unstable_integrand(v):
                z = zsol(v)
                return (z.T @ z) * k.dlog(v)

            part, _ = quad_vec(unstable_integrand, w_cut, t, epsabs=quad.quad_tol, epsrel=quad.quad_tol)
            s_mat = s_mat - part

        s_mat = 0.5 * (s_mat + s_mat.T)
        mats.append(s_mat)
        eigs = np.linalg.eigvalsh(s_mat)
        min_eig = min(min_eig, float(np.min(np.abs(eigs))))
        cap = (spec.K**2 / (2 * dbar)) * (
            math.exp(2 * spec.eps * spec.rates.mu.log_u(abs(t)))
            + math.exp(2 * spec.eps * spec.rates.nu.log_u(abs(t)))
        )
        gap = cap - spectral_norm(s_mat)
        margin = min(margin, gap)
        if gap < -1e-6 * cap:
            raise DichokitError(
                f"|S({t})| exceeds the envelope cap {cap:.4g}; the input spec does not hold"
            )

    return QuadraticLyapunov(times, np.array(mats), dbar, spec, min_eig, margin)


@dataclass
class DerivativeReport:
    form: str
    max_eigenvalue: float
    margin: float
    per_point: list
    fd_error: float
    passed: bool


def derivative_condition(
    lyap: QuadraticLyapunov,
    a_field: CoefficientField,
    grid=None,
    form: str = "sufficiency",
    tol: float = 1e-8,
    fd_tol: float = 1e-3,
) -> DerivativeReport:
    """Check S' + S A + A^T S <= -RHS on the grid.

    RHS is the identity (sufficiency form) or P^T P h'/h + Q^T Q k'/k
    (necessity form).  S' uses central differences at the grid spacing with
    a step-doubling error estimate; the check is refused when that estimate
    exceeds both the absolute floor fd_tol and half the computed margin,
    i.e. when the differencing error could flip the verdict.
    """
    if form not in ("sufficiency", "necessity"):
        raise ValueError("form must be 'sufficiency' or 'necessity'")
    times = lyap.times if grid is None else np.sort(np.asarray(grid, dtype=float))
    spec = lyap.spec
    n = lyap.matrices.shape[1]
    dt = float(np.min(np.diff(lyap.times))) if lyap.times.size > 1 else 1.0
    # central differences need both neighbors: interior points only
    times = times[(times - dt >= lyap.times[0] - 1e-12) & (times + dt <= lyap.times[-1] + 1e-12)]
    if times.size == 0:
        raise DichokitError("S grid has no interior points to difference on")

    worst = -math.inf
    fd_err = 0.0
    rows = []
    for t in times:
        lo, hi = t - dt, t + dt
        ds = (lyap.S(hi) - lyap.S(lo)) / (hi - lo)
        lo2, hi2 = max(t - 2 * dt, lyap.times[0]), min(t + 2 * dt, lyap.times[-1])
        ds2 = (lyap.S(hi2) - lyap.S(lo2)) / (hi2 - lo2)
        fd_err = max(fd_err, spectral_norm(ds - ds2) / 3.0)

        a = a_field(t)
        s = lyap.S(t)
        if form == "sufficiency":
            rhs = np.eye(n)
        else:
            p = spec.P(t)
            q = np.eye(n) - p
            rhs = p.T @ p * spec.rates.h.dlog(t) + q.T @ q * spec.rates.k.dlog(t)
        m = ds + s @ a + a.T @ s + rhs
        m = 0.5 * (m + m.T)
        top = float(np.max(np.linalg.eigvalsh(m)))
        rows.append((float(t), top))
        worst = max(worst, top)

    margin = -(worst - tol)
    if fd_err > fd_tol and fd_err > 0.5 * abs(margin):
        raise DichokitError(
            f"grid too coarse: finite-difference error {fd_err:.3g} is comparable "
            f"to the margin {margin:.3g}; refine the S grid"
        )
    return DerivativeReport(form, worst, -worst, rows, fd_err, worst <= tol)


def classify(
    lyap: QuadraticLyapunov,
    op: EvolutionOperator,
    tau: float,
    x,
    horizon: float,
    samples: int = 120,
    margin: float | None = None,
) -> str:
    """Sign of H along the orbit of x: 'stable', 'unstable' or 'undetermined'.

    Samples start strictly after tau, so vectors with H(tau, x) = 0 but a
    definite eventual sign still classify.
    """
    x = np.asarray(x, dtype=float)
    if np.linalg.norm(x) == 0:
        raise ValueError("cannot classify the zero vector")
    if margin is None:
        margin = 1e-8 * float(x @ x)
    orbit = op.vector_solution(tau, tau + horizon, x)
    ts = tau + horizon * np.arange(1, samples + 1) / samples
    values = np.array([lyap.H(t, orbit(t)) for t in ts])
    if np.all(values > margin):
        return "stable"
    if np.all(values < -margin):
        return "unstable"
    return "undetermined"


@dataclass
class DecayReport:
    """Report-only check of the decay inequalities along classified orbits."""

    differential_slack: dict = field(default_factory=dict)
    gronwall_ratio: dict = field(default_factory=dict)
    local_bound_ratio: dict = field(default_factory=dict)
    lower_bound_ratio: dict = field(default_factory=dict)
    rate_domination_ok: bool | None = None
    nu_side_ratio: float | None = None

    def differential_passes(self, side: str) -> bool:
        return self.differential_slack[side] <= 1e-7


def _restricted_norm(m: np.ndarray, basis: np.ndarray) -> float:
    """Operator norm of m restricted to span(basis columns), unit vectors."""
    qb, _ = np.linalg.qr(basis)
    return spectral_norm(m @ qb)


def decay_inequalities(
    lyap: QuadraticLyapunov,
    op: EvolutionOperator,
    hyp: LyapunovHypotheses,
    tau: float,
    stable_vectors,
    unstable_vectors,
    horizon: float,
    samples: int = 60,
) -> DecayReport:
    """Measure the decay inequalities and local growth bounds.

    Checks, for orbits from classified vectors:
      - dH/dt <= -eta (rate slope) |H| along the orbit (worst slack,
        normalized by |H|);
      - the integrated consequence H(t) <= (h(t)/h(tau))^{-eta1} H(tau) on
        the stable side and |H(t)| >= (k(t)/k(tau))^{eta2} |H(tau)| on the
        unstable side (worst ratio);
      - two-sided local growth |T(t,tau)| restricted to each span against
        l_i mu(t)^{k_i} for |t - tau| <= dhat;
      - the rate-domination condition h(t)/h(tau) >= mu(t)/mu(tau) when
        eta1 > 2 k1, with the nu-side ratio reported for inspection;
      - the classification lower bound |H(tau,x)| >= (dhat/l^2) mu^{-2k} |x|^2.
    """
    spec = lyap.spec
    h, k, mu, nu = spec.rates.rates()
    report = DecayReport()
    delta = min(horizon / (4 * samples), 1e-3)

    for side, vectors, rate, eta in (
        ("stable", stable_vectors, h, hyp.eta1),
        ("unstable", unstable_vectors, k, hyp.eta2),
    ):
        worst_slack = -math.inf
        worst_ratio = 0.0
        for x in vectors:
            orbit = op.vector_solution(tau, tau + horizon, np.asarray(x, dtype=float))
            h_tau = lyap.H(tau, x)
            for t in tau + horizon * np.arange(1, samples) / samples:
                hv = lyap.H(t, orbit(t))
                dh = (lyap.H(t + delta, orbit(t + delta)) - lyap.H(t - delta, orbit(t - delta))) / (2 * delta)
                slack = (dh + eta * rate.dlog(t) * abs(hv)) / max(abs(hv), 1e-300)
                worst_slack = max(worst_slack, slack)
                power = math.exp(eta * (rate.log_u(t) - rate.log_u(tau)))
                if side == "stable":
                    worst_ratio = max(worst_ratio, hv * power / h_tau)
                else:
                    worst_ratio = max(worst_ratio, abs(h_tau) * power / abs(hv))
        report.differential_slack[side] = worst_slack
        report.gronwall_ratio[side] = worst_ratio

    # (local) two-sided growth bounds on the restricted evolution
    for side, vectors, nonuni, kk, ll in (
        ("stable", stable_vectors, mu, hyp.k1, hyp.l1),
        ("unstable", unstable_vectors, nu, hyp.k2, hyp.l2),
    ):
        basis = np.column_stack([np.asarray(v, dtype=float) for v in vectors])
        worst = 0.0
        lower = math.inf
        for dt_ in np.linspace(-hyp.dhat, hyp.dhat, 9):
            t = tau + dt_
            bound = ll * math.exp(kk * nonuni.log_u(abs(t)))
            worst = max(worst, _restricted_norm(op.evolve(t, tau), basis) / bound)
        for x in vectors:
            x = np.asarray(x, dtype=float)
            floor = (hyp.dhat / ll**2) * math.exp(-2 * kk * nonuni.log_u(abs(tau))) * float(x @ x)
            lower = min(lower, abs(lyap.H(tau, x)) / floor)
        report.local_bound_ratio[side] = worst
        report.lower_bound_ratio[side] = lower

    if hyp.eta1 > 2 * hyp.k1:
        ok = True
        for t in tau + horizon * np.arange(1, samples) / samples:
            if h.log_u(t) - h.log_u(tau) < mu.log_u(t) - mu.log_u(tau) - 1e-12:
                ok = False
        report.rate_domination_ok = ok
    # nu-side analogue is not stated; reported for inspection only
    t_end = tau + horizon
    report.nu_side_ratio = math.exp((k.log_u(t_end) - k.log_u(tau)) - (nu.log_u(t_end) - nu.log_u(tau)))
    return report
