"""Evolution-weighted integrals on uniform grids.

The fixed-point operators of the robustness, linearization and manifold
constructions all take the form

    I_P(t) = integral_a^t T(t,tau) V(tau) dtau        (forward sweep)
    I_Q(t) = integral_t^b T(t,tau) V(tau) dtau        (backward sweep)

with V sampled on a uniform grid.  Both are computed by one-step
recurrences (I is propagated through the cached per-interval evolution
operators) with a local Simpson rule per step, so each sweep costs O(m)
matrix products and the quadrature is composite Simpson at half the grid
step.  Propagating I through T only ever pushes it along the bundle the
integrand already lives in, so no unstable amplification occurs; an
optional reprojection callback clamps the residual drift.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evolution import EvolutionOperator


@dataclass(frozen=True)
class HalfGrid:
    """Uniform grid of m coarse steps on [a, b] with midpoint nodes."""

    a: float
    b: float
    m: int

    def __post_init__(self):
        if self.m < 1 or self.b <= self.a:
            raise ValueError("need b > a and at least one step")

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.m

    @property
    def nodes(self) -> np.ndarray:
        """All 2m+1 nodes at spacing h/2 (coarse nodes and midpoints)."""
        return self.a + 0.5 * self.h * np.arange(2 * self.m + 1)

    @property
    def coarse(self) -> np.ndarray:
        return self.a + self.h * np.arange(self.m + 1)

    @staticmethod
    def cover(a: float, b: float, step: float) -> "HalfGrid":
        m = max(1, int(np.ceil((b - a) / step - 1e-12)))
        return HalfGrid(a, b, m)


def sample(fn, grid: HalfGrid) -> np.ndarray:
    return np.array([np.asarray(fn(t), dtype=float) for t in grid.nodes])


def forward_integral(op: EvolutionOperator, grid: HalfGrid, values: np.ndarray, reproject=None):
    """I(t_i) = integral_a^{t_i} T(t_i, tau) V(tau) dtau at the coarse nodes.

    values holds V at all half-step nodes (shape (2m+1, ...) with leading
    matrix/vector axes matching the state dimension).
    """
    h = grid.h
    out = [np.zeros_like(values[0])]
    cur = out[0]
    for i in range(grid.m):
        t0, tm, t1 = grid.nodes[2 * i], grid.nodes[2 * i + 1], grid.nodes[2 * i + 2]
        step_full = op.evolve(t1, t0)
        step_half = op.evolve(t1, tm)
        local = (h / 6.0) * (
            step_full @ values[2 * i] + 4.0 * (step_half @ values[2 * i + 1]) + values[2 * i + 2]
        )
        cur = step_full @ cur + local
        if reproject is not None:
            cur = reproject(t1, cur)
        out.append(cur)
    return out


def backward_integral(op: EvolutionOperator, grid: HalfGrid, values: np.ndarray, reproject=None):
    """I(t_i) = integral_{t_i}^{b} T(t_i, tau) V(tau) dtau at the coarse nodes.

    T(t_i, tau) for tau >= t_i is a backward operator; the per-interval
    pieces are integrated backward by the evolution cache.
    """
    h = grid.h
    out = [np.zeros_like(values[0]) for _ in range(grid.m + 1)]
    cur = out[grid.m]
    for i in range(grid.m - 1, -1, -1):
        t0, tm, t1 = grid.nodes[2 * i], grid.nodes[2 * i + 1], grid.nodes[2 * i + 2]
        back_full = op.evolve(t0, t1)
        back_half = op.evolve(t0, tm)
        local = (h / 6.0) * (
            values[2 * i] + 4.0 * (back_half @ values[2 * i + 1]) + back_full @ values[2 * i + 2]
        )
        cur = back_full @ cur + local
        if reproject is not None:
            cur = reproject(t0, cur)
        out[i] = cur
    return out
