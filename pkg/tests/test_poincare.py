import math

import numpy as np
import pytest

from weighted_integrability.poincare import (
    TWO_PI, ActionAngleModel, PerturbationDef, QuadratureError, apply_map,
    build_first_order_map, direct_flow_map, error_ratios, map_distance, scaling_study,
    sine_model, wrap_angles, zero_perturbation)


@pytest.fixture(scope="module")
def sine():
    return sine_model()


def test_closed_form_integrals(sine):
    model, pert = sine
    pmap = build_first_order_map(model, pert, 1024)
    Ft = pmap.tilde_F(0.5, [0.0])
    assert abs(Ft[0] - 4.0) <= 1e-9
    assert abs(Ft[1] - 4 * math.pi) <= 1e-8


def test_apply_map_worked_value(sine):
    pmap = build_first_order_map(*sine)
    out = apply_map(pmap, 0.5, [0.0], 1e-3)
    assert out.action == pytest.approx(0.504, abs=1e-12)
    assert out.inside


def test_epsilon_zero_is_base_map(sine):
    model, pert = sine
    pmap = build_first_order_map(model, pert)
    for I, th in ((0.5, 0.0), (0.3, 5.0), (0.9, 1.234)):
        out = apply_map(pmap, I, [th], 0.0)
        assert out.action == I
        assert out.angles[0] == (th + TWO_PI * I) % TWO_PI


def test_zero_perturbation_gives_base_map():
    model = ActionAngleModel(f=[lambda I: 1.0 + I, lambda I: 2.0 - I], Q=(-0.5, 0.5))
    pmap = build_first_order_map(model, zero_perturbation(2))
    np.testing.assert_array_equal(pmap.tilde_F(0.1, [0.3, 0.4]), np.zeros(3))
    out = apply_map(pmap, 0.1, [0.3, 0.4], 0.01)
    np.testing.assert_array_equal(out.angles, pmap.base(0.1, [0.3, 0.4]))


def test_oracle_at_epsilon_zero(sine):
    model, pert = sine
    a = direct_flow_map(model, pert, 0.5, [0.0], 0.0)
    b = apply_map(build_first_order_map(model, pert), 0.5, [0.0], 0.0)
    assert map_distance(a, b) <= 1e-10


def test_quadrature_node_doubling():
    model = ActionAngleModel(f=[lambda I: I, lambda I: 0.5 + I * I], df=[lambda I: 1.0, lambda I: 2 * I])
    pert = PerturbationDef([
        lambda I, th, t: np.sin(th[0]) * np.cos(th[1]) + 0.3 * np.cos(t),
        lambda I, th, t: np.cos(2 * th[0]) + 0 * t,
        lambda I, th, t: np.sin(th[1] - t),
    ])
    a = build_first_order_map(model, pert, 256).tilde_F(0.3, [0.2, 1.1])
    b = build_first_order_map(model, pert, 512).tilde_F(0.3, [0.2, 1.1])
    assert np.max(np.abs(a - b)) <= 1e-10


def test_quadrature_failure_is_reported():
    # fast angle, few nodes: Simpson at N and 2N disagree in the second digit
    model = ActionAngleModel(f=[lambda I: 37.3], Q=(-1, 1))
    pert = PerturbationDef([lambda I, th, t: np.exp(np.cos(th[0])), lambda I, th, t: 0.0 * t])
    pmap = build_first_order_map(model, pert, 64)
    with pytest.raises(QuadratureError):
        pmap.tilde_F(0.0, [0.1])


def test_angle_shift_equivariance(sine):
    pmap = build_first_order_map(*sine)
    a = apply_map(pmap, 0.4, [0.7], 0.01)
    b = apply_map(pmap, 0.4, [0.7 + TWO_PI], 0.01)
    # input reduction mod 2pi costs at most a few ulps of the angle
    assert a.action == pytest.approx(b.action, abs=1e-12)
    assert map_distance(a, b) <= 1e-12


def test_boundary_flag(sine):
    pmap = build_first_order_map(*sine)
    # action jumps by eps * 4 from 0.5
    out = apply_map(pmap, 0.5, [0.0], 0.2)
    assert out.action == pytest.approx(1.3, abs=1e-9)
    assert out.inside is False


def test_validation(sine):
    model, pert = sine
    with pytest.raises(ValueError):
        build_first_order_map(model, pert, 63)
    with pytest.raises(ValueError):
        build_first_order_map(model, pert, 65)
    with pytest.raises(ValueError):
        direct_flow_map(model, pert, 0.5, [0.0], 0.01, steps=100)
    with pytest.raises(ValueError):
        PerturbationDef([lambda I, th, t: np.sin(0.5 * th[0]), lambda I, th, t: 0.0 * t],
                        period=TWO_PI)
    with pytest.raises(ValueError):
        ActionAngleModel(f=[lambda I: 1.0], omega=0.0)
    with pytest.warns(UserWarning):
        ActionAngleModel(f=[lambda I: 0.0])


def test_quadratic_error_scaling(sine):
    rows = scaling_study(*sine, 0.5, [0.0], [1e-2, 5e-3, 2.5e-3], steps=20_000)
    for q in error_ratios(rows):
        assert 2 - 0.35 <= math.log2(q) <= 2 + 0.35


def test_wrap_angles():
    np.testing.assert_allclose(wrap_angles([-0.1, 7.0]), [TWO_PI - 0.1, 7.0 - TWO_PI])
