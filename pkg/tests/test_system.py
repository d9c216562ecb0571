import math

import numpy as np
import pytest

from dichokit.errors import DomainError
from dichokit.evolution import EvolutionOperator, IntegratorConfig
from dichokit.growth import RateQuadruple, builtin
from dichokit.system import (
    BlockSystem,
    Example22Params,
    NonlinearTerm,
    ParameterSpace,
    adjoint,
    build_system,
    constant_field,
    make_example22,
    tabulated_field_from_csv,
)

RNG = np.random.default_rng(20240817)


def exp_hats():
    return RateQuadruple(builtin("exp"), builtin("exp"), builtin("expabs"), builtin("expabs"))


def test_example22_constants_match_printed_values():
    _, _, spec = make_example22(Example22Params(1.0, 0.1, 1.0, exp_hats()))
    assert spec.K == pytest.approx(math.exp(0.2), rel=1e-14)
    assert spec.a == -1.0
    assert spec.b == 1.0
    assert spec.eps == pytest.approx(0.2, rel=1e-14)
    assert np.allclose(spec.P(0.0), np.diag([1.0, 0.0]))


def test_example22_without_nonuniform_part_is_pure_powers():
    field, analytic, spec = make_example22(Example22Params(1.0, 0.0, 1.0, exp_hats()))
    assert spec.eps == 0.0 and spec.K == 1.0
    for t in (-2.0, 0.3, 1.7):
        assert np.allclose(field(t), np.diag([-1.0, 1.0]), atol=1e-14)
    for t, s in [(2.0, 0.5), (-1.0, -3.0)]:
        expected = np.diag([math.exp(-(t - s)), math.exp(t - s)])
        assert np.allclose(analytic(t, s), expected, rtol=1e-12)


def test_example22_analytic_cocycle_identity():
    _, analytic, _ = make_example22(Example22Params(1.0, 0.1, 1.0, exp_hats()))
    for _ in range(25):
        s, r, t = np.sort(RNG.uniform(-5, 5, size=3))
        lhs = analytic(t, s)
        rhs = analytic(t, r) @ analytic(r, s)
        assert np.linalg.norm(lhs - rhs) <= 1e-10 * max(1.0, np.linalg.norm(lhs))


def test_example22_printed_inequality_chain():
    # |T(t,s)P(s)| <= e^{2 eta2} (hh(t)/hh(s))^{-eta1} mu(|s|)^{2 eta2}, t >= s
    params = Example22Params(1.0, 0.1, 1.0, exp_hats())
    _, analytic, _ = make_example22(params)
    mu = params.hats.mu
    for _ in range(60):
        t, s = np.sort(RNG.uniform(-6, 6, size=2))[::-1]
        lhs = np.linalg.norm(analytic(t, s) @ np.diag([1.0, 0.0]), 2)
        rhs = math.exp(0.2) * math.exp(-(t - s)) * mu.eval(abs(s)) ** 0.2
        assert lhs <= rhs * (1 + 1e-12)


def test_example22_analytic_agrees_with_integrated_evolution():
    field, analytic, _ = make_example22(Example22Params(1.0, 0.1, 1.0, exp_hats()))
    op = EvolutionOperator(field, IntegratorConfig(rel_tol=1e-10))
    got = op.evolve(3.0, 1.0)
    want = analytic(3.0, 1.0)
    assert np.linalg.norm(got - want, 2) <= 1e-7 * np.linalg.norm(want, 2)


def test_example22_rejects_full_line_request_with_half_hats():
    hats = RateQuadruple(builtin("poly"), builtin("exp"), builtin("expabs"), builtin("expabs"))
    with pytest.raises(DomainError):
        make_example22(Example22Params(1.0, 0.1, 1.0, hats), domain="full")


def test_example22_rejects_nonpositive_eta():
    with pytest.raises(ValueError):
        Example22Params(0.0, 0.1, 1.0)


def test_adjoint_of_constant_diagonal():
    a = constant_field(np.diag([-1.0, 1.0]))
    assert np.allclose(adjoint(a)(0.0), np.diag([1.0, -1.0]))


def test_adjoint_is_an_involution():
    def ev(t):
        return np.array([[math.sin(t), 1.0], [0.0, -t]])

    from dichokit.system import CoefficientField

    field = CoefficientField(2, ev)
    twice = adjoint(adjoint(field))
    for t in (-1.0, 0.0, 2.5):
        assert np.allclose(twice(t), field(t))


def test_adjoint_fundamental_matrix_duality():
    # Y(t) = (X(t)^T)^{-1} when X' = W X, Y' = -W^T Y, X(0) = Y(0) = I
    def ev(t):
        return np.array([[-1.0, 0.5 * math.cos(t)], [0.0, -2.0]])

    from dichokit.system import CoefficientField

    w = CoefficientField(2, ev)
    cfg = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-13)
    x = EvolutionOperator(w, cfg).evolve(2.0, 0.0)
    y = EvolutionOperator(adjoint(w), cfg).evolve(2.0, 0.0)
    assert np.allclose(y, np.linalg.inv(x.T), atol=1e-8)


def test_block_system_assembly():
    blk = BlockSystem(constant_field(np.diag([-1.0, -2.0])), constant_field([[3.0]]))
    assert blk.dim == 3 and blk.split == 2
    assert np.allclose(blk.combined()(0.0), np.diag([-1.0, -2.0, 3.0]))
    assert np.allclose(blk.projection(), np.diag([1.0, 1.0, 0.0]))
    with pytest.raises(ValueError):
        BlockSystem(constant_field(np.diag([-1.0])), constant_field([[3.0]]), split=2)


def test_nonlinear_term_zero_at_origin():
    good = NonlinearTerm(lambda t, x, lam: 0.01 * x**3, kind="manifold", chat=0.03, q=2, zero_at_origin=True)
    assert good.check_zero_at_origin(np.linspace(-3, 3, 7), dim=2)
    bad = NonlinearTerm(lambda t, x, lam: x + 1.0, zero_at_origin=True)
    assert not bad.check_zero_at_origin([0.0], dim=2)


def test_parameter_space_box():
    box = ParameterSpace([-1.0], [1.0])
    assert box.dim == 1 and box.contains(0.3) and not box.contains(2.0)
    with pytest.raises(ValueError):
        ParameterSpace([1.0], [1.0])


def test_tabulated_field_roundtrip(tmp_path):
    path = tmp_path / "field.csv"
    times = np.linspace(0.0, 5.0, 26)
    with open(path, "w") as fh:
        fh.write("t,a11,a12,a21,a22\n")
        for t in times:
            fh.write(f"{t},{-1.0},{0.1 * t},{0.0},{2.0}\n")
    field = tabulated_field_from_csv(str(path))
    assert field.dim == 2 and field.domain == "half"
    assert np.allclose(field(2.0), [[-1.0, 0.2], [0.0, 2.0]], atol=1e-12)
    # linear interpolation between samples
    assert field(2.1)[0, 1] == pytest.approx(0.21, rel=1e-12)


def test_build_system_registry():
    field, extras = build_system({"name": "example22", "eta1": 1.0, "eta2": 0.1, "eta3": 1.0})
    assert field.dim == 2 and "analytic" in extras and "spec" in extras
    diag, _ = build_system({"name": "const_diag", "entries": [-1.0, 1.0]})
    assert np.allclose(diag(0.0), np.diag([-1.0, 1.0]))
    mat, _ = build_system({"name": "const_matrix", "dim": 2, "entries": [0.0, 1.0, -1.0, 0.0]})
    assert np.allclose(mat(0.0), [[0.0, 1.0], [-1.0, 0.0]])
    with pytest.raises(ValueError):
        build_system({"name": "mystery"})
