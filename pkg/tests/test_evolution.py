import math

import numpy as np
import pytest

from dichokit.errors import IntegrationError
from dichokit.evolution import EvolutionOperator, IntegratorConfig
from dichokit.system import (
    CoefficientField,
    Example22Params,
    NonlinearTerm,
    constant_field,
    make_example22,
)

RNG = np.random.default_rng(7)


def example22_pair(rel_tol=1e-9):
    field, analytic, _ = make_example22(Example22Params(1.0, 0.1, 1.0))
    return EvolutionOperator(field, IntegratorConfig(rel_tol=rel_tol)), analytic


def test_constant_diagonal_flow():
    op = EvolutionOperator(constant_field(np.diag([-1.0, 1.0])))
    got = op.evolve(2.0, 0.0)
    assert np.allclose(got, np.diag([math.exp(-2.0), math.exp(2.0)]), rtol=1e-9)


def test_identity_at_equal_times():
    op = EvolutionOperator(constant_field(np.diag([-1.0, 1.0])))
    assert np.array_equal(op.evolve(1.3, 1.3), np.eye(2))


def test_example22_matches_closed_form():
    op, analytic = example22_pair()
    got = op.evolve(3.0, 1.0)
    want = analytic(3.0, 1.0)
    assert np.linalg.norm(got - want, 2) <= 1e-7 * np.linalg.norm(want, 2)


def test_inverse_unstable_constant_diagonal():
    op = EvolutionOperator(constant_field(np.diag([-1.0, 1.0])))
    got = op.evolve_inverse_unstable(2.0, 0.0, np.diag([0.0, 1.0]))
    assert np.allclose(got, np.diag([0.0, math.exp(-2.0)]), atol=1e-10)


def test_inverse_unstable_zero_projection():
    op = EvolutionOperator(constant_field(np.diag([-1.0, 1.0])))
    assert np.allclose(op.evolve_inverse_unstable(3.0, 1.0, np.zeros((2, 2))), 0.0)


def test_inverse_unstable_example22_closed_form():
    op, analytic = example22_pair()
    q = np.diag([0.0, 1.0])
    got = op.evolve_inverse_unstable(4.0, 1.5, q)
    want = analytic(1.5, 4.0) @ q
    assert np.linalg.norm(got - want, 2) <= 1e-7 * np.linalg.norm(want, 2)


def test_inverse_unstable_requires_ordered_times():
    op = EvolutionOperator(constant_field(np.diag([-1.0, 1.0])))
    with pytest.raises(ValueError):
        op.evolve_inverse_unstable(0.0, 1.0, np.diag([0.0, 1.0]))


def test_nonlinear_reduces_to_linear_for_zero_term():
    op, _ = example22_pair()
    f0 = NonlinearTerm(lambda t, x, lam: np.zeros_like(x))
    xi = np.array([0.7, -0.3])
    got = op.solve_nonlinear(2.0, -1.0, xi, f0)
    want = op.evolve(2.0, -1.0) @ xi
    assert np.linalg.norm(got - want) <= 1e-9 * max(1.0, np.linalg.norm(want))


def test_nonlinear_scalar_decay():
    op = EvolutionOperator(constant_field([[-1.0]]))
    f0 = NonlinearTerm(lambda t, x, lam: np.zeros_like(x))
    got = op.solve_nonlinear(2.5, 0.5, [1.0], f0)
    assert got[0] == pytest.approx(math.exp(-2.0), rel=1e-9)


def _rk4(rhs, t0, t1, y0, h):
    # independent fixed-step oracle
    steps = int(round((t1 - t0) / h))
    t, y = t0, float(y0)
    for _ in range(steps):
        k1 = rhs(t, y)
        k2 = rhs(t + h / 2, y + h * k1 / 2)
        k3 = rhs(t + h / 2, y + h * k2 / 2)
        k4 = rhs(t + h, y + h * k3)
        y += (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


def test_nonlinear_against_fixed_step_oracle():
    op = EvolutionOperator(constant_field([[-1.0]]))
    f = NonlinearTerm(lambda t, x, lam: 0.1 * np.tanh(x))
    got = op.solve_nonlinear(1.0, 0.0, [1.0], f)[0]
    want = _rk4(lambda t, y: -y + 0.1 * math.tanh(y), 0.0, 1.0, 1.0, 1e-5)
    assert got == pytest.approx(want, abs=1e-7)


def test_blowup_guard_reports_escape_time():
    op = EvolutionOperator(constant_field([[0.0]]), IntegratorConfig(escape_bound=1e3))
    f = NonlinearTerm(lambda t, x, lam: x**2)
    with pytest.raises(IntegrationError) as err:
        op.solve_nonlinear(1.5, 0.0, [1.0], f)  # x = 1/(1-t) blows up at t=1
    assert err.value.time is not None and 0.9 <= err.value.time <= 1.05


def test_cocycle_identity_on_random_triples():
    op, _ = example22_pair()
    for _ in range(20):
        s, r, t = np.sort(RNG.uniform(-5, 5, size=3))
        whole = op.evolve(t, s)
        split = op.evolve(t, r) @ op.evolve(r, s)
        assert np.linalg.norm(whole - split, 2) <= 1e-7 * max(1e-30, np.linalg.norm(whole, 2))


def test_cocycle_identity_nonnormal_field():
    field = CoefficientField(2, lambda t: np.array([[-1.0, math.cos(t)], [0.0, 1.0]]))
    op = EvolutionOperator(field)
    for _ in range(10):
        s, r, t = np.sort(RNG.uniform(-4, 4, size=3))
        whole = op.evolve(t, s)
        split = op.evolve(t, r) @ op.evolve(r, s)
        assert np.linalg.norm(whole - split, 2) <= 1e-7 * np.linalg.norm(whole, 2)


def test_forward_backward_inverse_consistency():
    op, _ = example22_pair()
    for t, s in [(2.0, -1.0), (0.25, 3.75), (-4.5, -0.5)]:
        prod = op.evolve(t, s) @ op.evolve(s, t)
        assert np.linalg.norm(prod - np.eye(2), 2) <= 1e-7


def test_error_shrinks_with_tolerance():
    _, analytic = example22_pair()
    want = analytic(4.0, -2.0)
    errs = []
    for rtol in (1e-6, 1e-7, 1e-8, 1e-9, 1e-10):
        op, _ = example22_pair(rel_tol=rtol)
        got = op.evolve(4.0, -2.0)
        errs.append(np.linalg.norm(got - want, 2) / np.linalg.norm(want, 2))
    for coarse, fine in zip(errs, errs[1:]):
        assert fine <= 2.0 * coarse  # monotone within a factor-2 allowance
    assert errs[-1] < errs[0]


def test_dense_matrix_solution_accuracy():
    op, analytic = example22_pair()
    sol = op.matrix_solution(0.0, 3.0, np.eye(2))
    for v in (0.4, 1.1, 2.9):
        assert np.allclose(sol(v), analytic(v, 0.0), rtol=1e-7, atol=1e-10)


def test_config_rejects_bad_tolerances():
    with pytest.raises(ValueError):
        IntegratorConfig(rel_tol=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(checkpoint_spacing=-1.0)


def test_cache_report_counts_segments():
    op, _ = example22_pair()
    op.evolve(2.0, -2.0)
    rep = op.cache_report()
    assert rep["segments"] >= 4 and rep["worst_condition"] >= 1.0
