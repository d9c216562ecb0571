"""Evolution operators T(t, s) of x' = A(t) x and nonlinear flows.

T(t, s) is assembled from per-interval transition matrices between cached
checkpoints (spacing <= checkpoint_spacing, anchored at 0), because a single
global fundamental matrix overflows or loses the stable directions under
dichotomy growth.  Backward operators are integrated backward in time, never
obtained by matrix inversion: inverting is ill-conditioned whenever an
unstable direction is present.

Coefficient fields may have jump discontinuities on the checkpoint lattice
(the e^{|t|} hats of the worked example jump at t = 0); segment endpoints
are evaluated a hair inside the segment so each integration sees the correct
one-sided limit.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IntegrationError
from .system import CoefficientField, NonlinearTerm


@dataclass(frozen=True)
class IntegratorConfig:
    """Embedded Runge-Kutta 5(4) pair with step control (scipy RK45)."""

    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_step: float = math.inf
    checkpoint_spacing: float = 1.0
    escape_bound: float = 1e12

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.checkpoint_spacing <= 0:
            raise ValueError("checkpoint spacing must be positive")


def _inward(a: float, b: float, t: float) -> float:
    """Nudge segment endpoints into the open interval for field evaluation."""
    eps = 1e-12 * max(1.0, abs(b - a))
    if t == a:
        return a + math.copysign(eps, b - a)
    if t == b:
        return b - math.copysign(eps, b - a)
    return t


class EvolutionOperator:
    """Cached evolution operator of a linear coefficient field."""

    def __init__(self, field: CoefficientField, config: IntegratorConfig | None = None, anchor: float = 0.0):
        self.field = field
        self.config = config or IntegratorConfig()
        self.anchor = float(anchor)
        self._cache: dict[tuple[float, float], np.ndarray] = {}
        self._lock = threading.Lock()

    # -- low-level integration ------------------------------------------------

    def _integrate_matrix(self, a: float, b: float, m0: np.ndarray, dense: bool = False):
        n = self.field.dim
        cols = np.asarray(m0).shape[1]

        def rhs(t, y):
            return (self.field(_inward(a, b, t)) @ y.reshape(n, cols)).ravel()

        sol = solve_ivp(
            rhs,
            (a, b),
            np.asarray(m0, dtype=float).ravel(),
            method="RK45",
            rtol=self.config.rel_tol,
            atol=self.config.abs_tol,
            max_step=self.config.max_step,
            dense_output=dense,
        )
        if not sol.success:
            raise IntegrationError(
                f"integration failed on [{a}, {b}]: {sol.message}", time=sol.t[-1]
            )
        if dense:
            interp = sol.sol
            return lambda v: interp(v).reshape(n, cols)
        return sol.y[:, -1].reshape(n, cols)

    def _segment(self, a: float, b: float) -> np.ndarray:
        """Transition matrix T(b, a), cached."""
        if a == b:
            return np.eye(self.field.dim)
        key = (a, b)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        m = self._integrate_matrix(a, b, np.eye(self.field.dim))
        with self._lock:
            self._cache[key] = m
        return m

    def _checkpoint(self, i: int) -> float:
        return self.anchor + i * self.config.checkpoint_spacing

    # -- public surface --------------------------------------------------------

    def evolve(self, t: float, s: float) -> np.ndarray:
        """T(t, s), composed from per-interval operators; T(s, s) = I."""
        if t == s:
            return np.eye(self.field.dim)
        d = self.config.checkpoint_spacing
        if t > s:
            i0 = math.ceil((s - self.anchor) / d - 1e-9)
            i1 = math.floor((t - self.anchor) / d + 1e-9)
            step = 1
            inside = i0 <= i1
        else:
            i0 = math.floor((s - self.anchor) / d + 1e-9)
            i1 = math.ceil((t - self.anchor) / d - 1e-9)
            step = -1
            inside = i0 >= i1
        if not inside:
            return self._segment(s, t)
        m = np.eye(self.field.dim)
        c0, c1 = self._checkpoint(i0), self._checkpoint(i1)
        if c0 != s:
            m = self._segment(s, c0)
        for i in range(i0, i1, step):
            m = self._segment(self._checkpoint(i), self._checkpoint(i + step)) @ m
        if c1 != t:
            m = self._segment(c1, t) @ m
        return m

    def evolve_inverse_unstable(self, t: float, s: float, q: np.ndarray) -> np.ndarray:
        """T(t, s)^{-1} Q(t) = T(s, t) Q(t) for t >= s, by backward integration."""
        if t < s:
            raise ValueError(f"need t >= s, got t={t} < s={s}")
        return self.evolve(s, t) @ np.asarray(q, dtype=float)

    def matrix_solution(self, a: float, b: float, m0: np.ndarray):
        """Dense solution Y(v) of Y' = A(v) Y, Y(a) = m0, for v between a and b.

        Meant for decaying initial data (e.g. m0 = P(a) in the stable bundle
        going forward); the dense interpolant shares the integrator accuracy.
        m0 may be rectangular (n x m) to evolve a set of columns at once.
        """
        if a == b:
            m = np.asarray(m0, dtype=float)
            return lambda v: m
        return self._integrate_matrix(a, b, m0, dense=True)

    def vector_solution(self, a: float, b: float, x0):
        """Dense vector solution of the linear system through (a, x0)."""
        col = self.matrix_solution(a, b, np.asarray(x0, dtype=float).reshape(-1, 1))
        return lambda v: col(v)[:, 0]

    def solve_nonlinear(self, t: float, tbar: float, xi, f: NonlinearTerm, lam=None):
        """X(t, tbar, xi) for x' = A(t) x + f(t, x, lam)."""
        return self.nonlinear_solution(tbar, t, xi, f, lam)(t)

    def _pieces(self, a: float, b: float):
        """Split [a, b] at internal checkpoints (field jumps live there)."""
        d = self.config.checkpoint_spacing
        if b > a:
            i0 = math.floor((a - self.anchor) / d + 1e-9) + 1
            i1 = math.ceil((b - self.anchor) / d - 1e-9) - 1
            cps = [self._checkpoint(i) for i in range(i0, i1 + 1)]
        else:
            i0 = math.ceil((a - self.anchor) / d - 1e-9) - 1
            i1 = math.floor((b - self.anchor) / d + 1e-9) + 1
            cps = [self._checkpoint(i) for i in range(i0, i1 - 1, -1)]
        knots = [a] + [c for c in cps if c != a and c != b] + [b]
        return list(zip(knots[:-1], knots[1:]))

    def nonlinear_solution(self, a: float, b: float, xi, f: NonlinearTerm, lam=None):
        """Dense nonlinear trajectory on [a, b] with a blow-up guard.

        Integrated piecewise between checkpoints so field discontinuities on
        the lattice are only ever touched at segment endpoints.
        """
        xi = np.asarray(xi, dtype=float)
        if a == b:
            return lambda v: xi

        bound = self.config.escape_bound

        def escape(t, y):
            return bound - float(np.linalg.norm(y))

        escape.terminal = True

        pieces = []
        y0 = xi
        for lo, hi in self._pieces(a, b):
            def rhs(t, y, lo=lo, hi=hi):
                ti = _inward(lo, hi, t)
                return self.field(ti) @ y + f(ti, y, lam)

            sol = solve_ivp(
                rhs,
                (lo, hi),
                y0,
                method="RK45",
                rtol=self.config.rel_tol,
                atol=self.config.abs_tol,
                max_step=self.config.max_step,
                dense_output=True,
                events=escape,
            )
            if sol.status == 1:
                t_esc = float(sol.t_events[0][0])
                raise IntegrationError(
                    f"trajectory escaped |x| > {bound:g} at t={t_esc:.6g}", time=t_esc
                )
            if not sol.success:
                raise IntegrationError(
                    f"integration failed on [{lo}, {hi}]: {sol.message}", time=sol.t[-1]
                )
            pieces.append((lo, hi, sol.sol))
            y0 = sol.y[:, -1]

        forward = b > a

        def at(v):
            for lo, hi, interp in pieces:
                inside = lo <= v <= hi if forward else hi <= v <= lo
                if inside:
                    return interp(v)
            raise ValueError(f"time {v} outside the solved span [{a}, {b}]")

        return at

    def cache_report(self) -> dict:
        """Cached segment count and the worst condition number among them."""
        with self._lock:
            mats = list(self._cache.values())
        if not mats:
            return {"segments": 0, "worst_condition": 1.0}
        conds = [float(np.linalg.cond(m)) for m in mats]
        return {"segments": len(mats), "worst_condition": max(conds)}
