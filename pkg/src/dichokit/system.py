"""Linear coefficient fields, block systems and nonlinear perturbations.

Systems are supplied from a registry of named builtins or as CSV-tabulated
matrices with linear interpolation; there is deliberately no expression
parser.  Dimension is capped at 16: everything downstream is O(n^3) per
grid point and the interesting behaviour is fully exercised at n = 2..4.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError
from .growth import GrowthRate, RateQuadruple, builtin

MAX_DIM = 16


@dataclass(frozen=True)
class CoefficientField:
    """The matrix family A(t) of x' = A(t) x."""

    dim: int
    eval: Callable[[float], np.ndarray]
    domain: str = "full"  # "full" | "half"
    assumed_continuous: bool = True

    def __post_init__(self):
        if not 1 <= self.dim <= MAX_DIM:
            raise ValueError(f"dim must be in 1..{MAX_DIM}, got {self.dim}")

    def __call__(self, t: float) -> np.ndarray:
        if self.domain == "half" and t < 0:
            raise DomainError(f"field is half-line only, got t={t}")
        a = np.asarray(self.eval(t), dtype=float)
        if a.shape != (self.dim, self.dim):
            raise ValueError(f"field returned shape {a.shape}, expected {(self.dim, self.dim)}")
        if not np.all(np.isfinite(a)):
            raise ValueError(f"field returned non-finite entries at t={t}")
        return a


def constant_field(matrix, domain: str = "full") -> CoefficientField:
    a = np.array(matrix, dtype=float)
    return CoefficientField(a.shape[0], lambda t: a, domain)


def adjoint(field: CoefficientField) -> CoefficientField:
    """The adjoint system y' = -A(t)^T y."""
    return CoefficientField(
        field.dim,
        lambda t: -field.eval(t).T,
        field.domain,
        field.assumed_continuous,
    )


def tabulated_field(times, matrices, domain: str | None = None) -> CoefficientField:
    """Field from samples; entries linearly interpolated, ends clamped."""
    times = np.asarray(times, dtype=float)
    matrices = np.asarray(matrices, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) <= 0):
        raise ValueError("tabulated field needs strictly increasing times")
    n = matrices.shape[1]
    flat = matrices.reshape(times.size, n * n)

    def ev(t):
        row = np.array([np.interp(t, times, flat[:, j]) for j in range(n * n)])
        return row.reshape(n, n)

    if domain is None:
        domain = "full" if times[0] < 0 else "half"
    return CoefficientField(n, ev, domain)


def tabulated_field_from_csv(path: str) -> CoefficientField:
    """CSV columns t, a11, a12, ..., ann (row-major); strictly increasing t."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                continue  # header
    if not rows:
        raise ValueError(f"no data rows in {path}")
    arr = np.asarray(rows, dtype=float)
    n = int(round(math.sqrt(arr.shape[1] - 1)))
    if n * n != arr.shape[1] - 1:
        raise ValueError(f"{path}: {arr.shape[1] - 1} matrix columns is not a square n*n")
    return tabulated_field(arr[:, 0], arr[:, 1:].reshape(-1, n, n))


@dataclass(frozen=True)
class BlockSystem:
    """A(t) = diag(W1(t), W2(t)) with the splitting R^n = E + F."""

    W1: CoefficientField
    W2: CoefficientField
    split: int = 0  # filled from W1.dim when 0

    def __post_init__(self):
        object.__setattr__(self, "split", self.split or self.W1.dim)
        if self.split != self.W1.dim:
            raise ValueError("split must equal dim W1")
        if not 1 <= self.split < self.dim:
            raise ValueError("need 1 <= split < n")

    @property
    def dim(self) -> int:
        return self.W1.dim + self.W2.dim

    def combined(self) -> CoefficientField:
        l, n = self.split, self.dim

        def ev(t):
            a = np.zeros((n, n))
            a[:l, :l] = self.W1.eval(t)
            a[l:, l:] = self.W2.eval(t)
            return a

        domain = "full" if self.W1.domain == self.W2.domain == "full" else "half"
        return CoefficientField(n, ev, domain)

    def projection(self) -> np.ndarray:
        """The coordinate projection onto E along F."""
        p = np.zeros((self.dim, self.dim))
        p[: self.split, : self.split] = np.eye(self.split)
        return p


@dataclass(frozen=True)
class NonlinearTerm:
    """Perturbation f(t, x, lam) with its declared Lipschitz regime.

    kind "conjugacy": |f| <= alpha * w(t) and Lip(f) <= gamma * w(t) with
    w(t) = min(h'/h mu(|t|)^-eps, k'/k nu(|t|)^-eps).
    kind "manifold": |f(x1)-f(x2)| <= chat |x1-x2| (|x1|^q + |x2|^q) and
    f(t, 0, lam) = 0.
    """

    eval: Callable[[float, np.ndarray, object], np.ndarray]
    kind: str = "conjugacy"
    alpha: float = 0.0
    gamma: float = 0.0
    chat: float = 0.0
    q: float = 1.0
    zero_at_origin: bool = False

    def __call__(self, t, x, lam=None):
        return np.asarray(self.eval(t, np.asarray(x, dtype=float), lam), dtype=float)

    def check_zero_at_origin(self, probes, dim: int, lam=None, tol: float = 1e-14) -> bool:
        if not self.zero_at_origin:
            return True
        zero = np.zeros(dim)
        return all(np.linalg.norm(self(t, zero, lam)) <= tol for t in probes)


ZERO_TERM = NonlinearTerm(lambda t, x, lam: np.zeros_like(x), zero_at_origin=True)


@dataclass(frozen=True)
class ParameterSpace:
    """A box of admissible parameter values."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ValueError("need lo < hi componentwise")

    @property
    def dim(self) -> int:
        return self.lo.size

    def contains(self, lam) -> bool:
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        return bool(np.all(lam >= self.lo) and np.all(lam <= self.hi))


# ---------------------------------------------------------------------------
# The worked two-dimensional example with a known dichotomy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Example22Params:
    """Parameters of the scalar-pair system with oscillating coefficients.

    The system is z1' = (-eta1 hh'/hh + zeta1) z1, z2' = (eta3 kk'/kk + zeta2) z2
    where the zeta terms oscillate at amplitude proportional to eta2 and
    integrate to the nonuniform part of the bound.  Its evolution operator
    has a closed form, which the numerical integrator is tested against.
    """

    eta1: float
    eta2: float
    eta3: float
    hats: RateQuadruple = None

    def __post_init__(self):
        if self.eta1 <= 0 or self.eta3 <= 0 or self.eta2 < 0:
            raise ValueError("need eta1, eta3 > 0 and eta2 >= 0")
        if self.hats is None:
            object.__setattr__(
                self,
                "hats",
                RateQuadruple(builtin("exp"), builtin("exp"), builtin("expabs"), builtin("expabs")),
            )


def _osc_primitive(w: float) -> float:
    # antiderivative of (w cos w - 1) dw
    return w * math.sin(w) - w + math.cos(w)


def make_example22(params: Example22Params, domain: str | None = None):
    """Build the example system: coefficient field, analytic evolution, spec.

    Returns (field, T_analytic, spec) where T_analytic(t, s) is the exact
    2x2 evolution operator and spec carries the claimed bound constants
    K = e^{2 eta2}, a = -eta1, b = eta3, eps = 2 eta2 with P = diag(1, 0).
    """
    from .dichotomy import DichotomySpec, ProjectionFamily

    e1, e2, e3 = params.eta1, params.eta2, params.eta3
    hh, kk, mu, nu = params.hats.rates()
    if domain is None:
        domain = params.hats.common_domain()
    if domain == "full" and params.hats.common_domain() != "full":
        raise DomainError("half-line hats cannot serve a full-line request")

    def zeta(rate: GrowthRate, t: float) -> float:
        w = rate.log_u(t)
        return rate.dlog(t) * (w * math.cos(w) - 1.0)

    def a_eval(t):
        return np.diag(
            [
                -e1 * hh.dlog(t) + e2 * zeta(mu, t),
                e3 * kk.dlog(t) + e2 * zeta(nu, t),
            ]
        )

    continuous = all(r.name != "expabs" for r in params.hats.rates())
    field = CoefficientField(2, a_eval, domain, assumed_continuous=continuous)

    def log_t11(t, s):
        return -e1 * (hh.log_u(t) - hh.log_u(s)) + e2 * (
            _osc_primitive(mu.log_u(t)) - _osc_primitive(mu.log_u(s))
        )

    def log_t22(t, s):
        return e3 * (kk.log_u(t) - kk.log_u(s)) + e2 * (
            _osc_primitive(nu.log_u(t)) - _osc_primitive(nu.log_u(s))
        )

    def analytic(t, s):
        return np.diag([math.exp(log_t11(t, s)), math.exp(log_t22(t, s))])

    spec = DichotomySpec(
        P=ProjectionFamily.constant(np.diag([1.0, 0.0])),
        rates=params.hats,
        K=math.exp(2 * e2),
        a=-e1,
        b=e3,
        eps=2 * e2,
    )
    return field, analytic, spec


# ---------------------------------------------------------------------------
# registry used by the CLI
# ---------------------------------------------------------------------------


def build_system(config: dict):
    """Construct a named system from a config table.

    Recognized names: example22 (eta1/eta2/eta3, optional hat rates),
    const_diag (entries), const_matrix (row-major entries), tabulated (csv).
    Returns (field, extras) where extras may hold the analytic evolution
    and reference spec for example22.
    """
    from .growth import rate_from_config

    name = config.get("name")
    if name == "example22":
        hats = None
        if "hats" in config:
            hmap = config["hats"]
            hats = RateQuadruple(
                rate_from_config(hmap["h"]),
                rate_from_config(hmap["k"]),
                rate_from_config(hmap["mu"]),
                rate_from_config(hmap["nu"]),
            )
        params = Example22Params(
            float(config.get("eta1", 1.0)),
            float(config.get("eta2", 0.1)),
            float(config.get("eta3", 1.0)),
            hats,
        )
        fieldv, analytic, spec = make_example22(params)
        return fieldv, {"analytic": analytic, "spec": spec, "params": params}
    if name == "const_diag":
        entries = [float(v) for v in config["entries"]]
        return constant_field(np.diag(entries)), {}
    if name == "const_matrix":
        n = int(config["dim"])
        entries = np.asarray(config["entries"], dtype=float).reshape(n, n)
        return constant_field(entries), {}
    if name == "tabulated":
        return tabulated_field_from_csv(config["csv"]), {}
    raise ValueError(f"unknown system name {name!r}")
