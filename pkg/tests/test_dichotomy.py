import math

import numpy as np
import pytest

from dichokit.dichotomy import (
    DichotomySpec,
    ProjectionFamily,
    check_projection,
    estimate_constants,
    square_grid,
    verify,
)
from dichokit.errors import EstimationError
from dichokit.evolution import EvolutionOperator
from dichokit.growth import RateQuadruple, builtin
from dichokit.system import Example22Params, constant_field, make_example22


def exp_quad():
    return RateQuadruple(*(builtin("exp") for _ in range(4)))


def tight_diag_setup():
    op = EvolutionOperator(constant_field(np.diag([-1.0, 1.0])))
    spec = DichotomySpec(
        P=ProjectionFamily.constant(np.diag([1.0, 0.0])),
        rates=exp_quad(),
        K=1.0,
        a=-1.0,
        b=1.0,
        eps=0.0,
    )
    return spec, op


def test_spec_constant_constraints():
    P = ProjectionFamily.constant(np.diag([1.0, 0.0]))
    with pytest.raises(ValueError):
        DichotomySpec(P, exp_quad(), K=1.0, a=0.1, b=1.0, eps=0.0)
    with pytest.raises(ValueError):
        DichotomySpec(P, exp_quad(), K=1.0, a=-1.0, b=-0.5, eps=0.0)
    with pytest.raises(ValueError):
        DichotomySpec(P, exp_quad(), K=0.0, a=-1.0, b=1.0, eps=0.0)
    with pytest.raises(ValueError):
        DichotomySpec(P, exp_quad(), K=1.0, a=-1.0, b=1.0, eps=-0.1)


def test_b_zero_spec_is_flagged_for_conjugacy():
    P = ProjectionFamily.constant(np.diag([1.0, 0.0]))
    spec = DichotomySpec(P, exp_quad(), K=1.0, a=-1.0, b=0.0, eps=0.0)
    assert not spec.usable_for_conjugacy
    full = DichotomySpec(ProjectionFamily.constant(np.eye(2)), exp_quad(), K=1.0, a=-1.0, b=0.0, eps=0.0)
    assert full.usable_for_conjugacy  # trivial unstable bundle


def test_example22_certificate_passes():
    field, _, spec = make_example22(Example22Params(1.0, 0.1, 1.0))
    op = EvolutionOperator(field)
    cert = verify(spec, op, square_grid(-3.0, 3.0, 0.5))
    assert cert.passed
    assert cert.worst_stable_ratio <= 1.0 and cert.worst_unstable_ratio <= 1.0
    assert cert.worst_commute_residual <= 1e-8


def test_halved_K_fails_with_doubled_ratios():
    field, _, spec = make_example22(Example22Params(1.0, 0.1, 1.0))
    op = EvolutionOperator(field)
    grid = square_grid(-3.0, 3.0, 0.5)
    good = verify(spec, op, grid)
    halved = DichotomySpec(spec.P, spec.rates, spec.K / 2, spec.a, spec.b, spec.eps)
    bad = verify(halved, op, grid)
    assert not bad.passed
    assert bad.worst_stable_ratio == pytest.approx(2 * good.worst_stable_ratio, rel=1e-9)
    assert bad.worst_stable_ratio > 1.5


def test_tight_uniform_bound_has_unit_ratios():
    spec, op = tight_diag_setup()
    cert = verify(spec, op, square_grid(-2.0, 2.0, 0.5))
    assert cert.passed
    for row in cert.rows:
        assert row.stable_ratio == pytest.approx(1.0, abs=1e-8)
        assert row.unstable_ratio == pytest.approx(1.0, abs=1e-8)


def test_uniform_special_case_reduces_to_exponential_bound():
    # with h = k = exp and eps = 0 the checked bound is K e^{a (t-s)}
    spec, _ = tight_diag_setup()
    for t, s in [(2.0, 1.0), (5.0, -1.0)]:
        assert spec.log_bound_stable(t, s) == pytest.approx(-(t - s), rel=1e-12)
        assert spec.log_bound_unstable(s, t) == pytest.approx(-(t - s), rel=1e-12)


def test_verify_monotone_in_K_and_eps():
    field, _, spec = make_example22(Example22Params(1.0, 0.1, 1.0))
    op = EvolutionOperator(field)
    grid = square_grid(-3.0, 3.0, 1.0)
    assert verify(spec, op, grid).passed
    bigger = DichotomySpec(spec.P, spec.rates, spec.K * 3, spec.a, spec.b, spec.eps + 0.3)
    assert verify(bigger, op, grid).passed


def test_verify_threads_match_serial():
    field, _, spec = make_example22(Example22Params(1.0, 0.1, 1.0))
    op = EvolutionOperator(field)
    grid = square_grid(-2.0, 2.0, 0.5)
    serial = verify(spec, op, grid)
    threaded = verify(spec, op, grid, threads=4)
    assert serial.worst_stable_ratio == threaded.worst_stable_ratio
    assert serial.worst_unstable_ratio == threaded.worst_unstable_ratio


def test_estimate_recovers_diagonal_constants():
    spec, op = tight_diag_setup()
    grid = square_grid(0.0, 5.0, 0.5)
    fitted, diag = estimate_constants(op, spec.P, exp_quad(), grid)
    assert -1.05 <= fitted.a <= -0.95
    assert 0.95 <= fitted.b <= 1.05
    assert fitted.eps <= 0.05
    assert 0.95 <= fitted.K <= 1.2
    assert verify(fitted, op, grid).passed
    assert diag.stable_pairs >= 20 and diag.unstable_pairs >= 20


def test_estimate_recovers_example22_exponents():
    field, _, spec = make_example22(Example22Params(1.0, 0.1, 1.0))
    op = EvolutionOperator(field)
    grid = square_grid(-4.0, 4.0, 0.5)
    fitted, _ = estimate_constants(op, spec.P, spec.rates, grid)
    assert fitted.a == pytest.approx(-1.0, abs=0.05)
    assert fitted.b == pytest.approx(1.0, abs=0.05)
    assert verify(fitted, op, grid).passed


def test_estimate_with_trivial_unstable_side_warns():
    op = EvolutionOperator(constant_field([[-1.0]]))
    P = ProjectionFamily.constant([[1.0]])
    fitted, diag = estimate_constants(op, P, exp_quad(), square_grid(0.0, 6.0, 0.5))
    assert fitted.b == 0.0
    assert any("unstable" in w for w in diag.warnings)


def test_estimate_rejects_degenerate_grid():
    spec, op = tight_diag_setup()
    grid = [(t, t) for t in np.linspace(0, 5, 30)]  # no rate variation
    with pytest.raises(EstimationError):
        estimate_constants(op, spec.P, exp_quad(), grid)


def test_check_projection_commuting_constant():
    spec, op = tight_diag_setup()
    rep = check_projection(spec.P, op, square_grid(-2.0, 2.0, 0.5))
    assert rep.max_commute_residual <= 1e-10
    assert rep.max_idempotency_residual <= 1e-12


def test_check_projection_example22():
    field, _, spec = make_example22(Example22Params(1.0, 0.1, 1.0))
    op = EvolutionOperator(field)
    rep = check_projection(spec.P, op, square_grid(-3.0, 3.0, 1.0))
    assert rep.max_commute_residual <= 1e-8


def test_check_projection_rotated_projector_fails():
    # P at 45 degrees to a diag(-1,1) flow: commutator norm is sinh(t-s)
    _, op = tight_diag_setup()
    P = ProjectionFamily.constant(np.full((2, 2), 0.5))
    pairs = [(2.0, 0.0)]
    rep = check_projection(P, op, pairs)
    assert rep.max_commute_residual == pytest.approx(math.sinh(2.0), rel=1e-7)
    assert not rep.passed
