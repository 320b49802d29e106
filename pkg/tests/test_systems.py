import numpy as np
import pytest

from weighted_integrability.systems import (
    BenchmarkParams, NonFiniteStateError, as_state, benchmark_jacobian, benchmark_system,
    check_weighted_divergence, coupling_matrix, cubic_term, eval_benchmark_field, eval_density,
    SystemDef, jacobian, jacobian_fd, linear_system, sample_box)


def test_density_values():
    p = BenchmarkParams(epsilon=0.5)
    assert eval_density(p, [0, 0, 0, 0]) == 1.0
    assert eval_density(p, [0.7, 0, 0, 0]) == pytest.approx(1.245, abs=1e-15)
    assert eval_density(BenchmarkParams(epsilon=0.0), [3.0, -2.0, 1.0, 5.0]) == 1.0


def test_density_rejects_bad_input():
    with pytest.raises(NonFiniteStateError):
        eval_density(BenchmarkParams(), [np.nan, 0, 0, 0])
    with pytest.raises(ValueError):
        eval_density(BenchmarkParams(), [0, 0, 0])
    with pytest.raises(ValueError):
        BenchmarkParams(epsilon=-0.1)


def test_field_pure_rotation():
    p = BenchmarkParams(epsilon=0.0, delta=0.0, alpha=0.0)
    np.testing.assert_array_equal(eval_benchmark_field(p, [1, 0, 0, 0]), [0, -1, 0, 0])


def test_field_origin_is_fixed():
    for p in (BenchmarkParams(), BenchmarkParams(0.1, -0.7, 2.0)):
        np.testing.assert_array_equal(eval_benchmark_field(p, np.zeros(4)), np.zeros(4))


def test_field_hand_values():
    p = BenchmarkParams(0.5, 0.3, 0.1)
    u = (0.5, 0.5, 0.7, 0.0)
    rho = 1.495
    # worked by hand from the component formulas
    expected = [
        (0.5 + 0.3 * 0.0 + 0.1 * (0.125 - 3 * 0.5 * 0.25)) / rho,
        (-(0.5 + 0.3 * 0.7) + 0.1 * (0.125 - 3 * 0.5 * 0.25)) / rho,
        (0.0 + 0.3 * 0.5 + 0.1 * 0.343) / rho,
        (-(0.7 + 0.3 * 0.5) + 0.1 * (0.0 - 0.0)) / rho,
    ]
    v = eval_benchmark_field(p, u)
    assert v[0] == pytest.approx(0.31773, abs=5e-6)
    np.testing.assert_allclose(v, expected, rtol=0, atol=1e-15)


def test_field_times_density_is_polynomial(rng):
    for _ in range(20):
        p = BenchmarkParams(*rng.uniform([0, -1, 0], [2, 1, 1]))
        u = rng.uniform(-2, 2, 4)
        lhs = eval_benchmark_field(p, u) * eval_density(p, u)
        rhs = coupling_matrix(p.delta) @ u + p.alpha * cubic_term(u)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-14, atol=1e-14)


def test_coupling_matrix_structure():
    L = coupling_matrix(0.3)
    assert np.max(np.abs(L + L.T)) == 0.0
    assert np.trace(L) == 0.0
    # eigenvalues are +-i(1 +- delta)
    ev = np.sort(np.abs(np.linalg.eigvals(L).imag))
    np.testing.assert_allclose(ev, [0.7, 0.7, 1.3, 1.3], atol=1e-12)


def test_linear_field_jacobian_is_L():
    p = BenchmarkParams(epsilon=0.0, delta=0.3, alpha=0.0)
    s = benchmark_system(p)
    u = np.array([0.3, -1.2, 0.8, 0.1])
    L = coupling_matrix(0.3)
    for h in (1e-6, 1e-4):
        J = jacobian_fd(s, u, h, "forward")
        assert np.max(np.abs(J - L)) <= 2 * h


def test_central_difference_on_cubic():
    # x^3 at x=1: truncation error is exactly h^2, rounding adds ~ eps/h
    s = SystemDef(dimension=1, field=lambda u: np.array([u[0] ** 3]), density=lambda u: 1.0)
    h = 1e-5
    J = jacobian_fd(s, [1.0], h, "central")
    assert abs((J[0, 0] - 3.0) - h * h) < 4 * np.finfo(float).eps / h


def test_analytic_jacobian_matches_fd(rng):
    p = BenchmarkParams()
    s = benchmark_system(p)
    for _ in range(10):
        u = rng.uniform(-1, 1, 4)
        J = benchmark_jacobian(p, u)
        np.testing.assert_allclose(jacobian_fd(s, u, 1e-5, "central"), J, atol=1e-8)
    s2 = s.__class__(**{**s.__dict__, "jacobian": lambda u: benchmark_jacobian(p, u)})
    np.testing.assert_array_equal(jacobian(s2, u), benchmark_jacobian(p, u))


def test_jacobian_fd_errors(default_system):
    with pytest.raises(ValueError):
        jacobian_fd(default_system, np.zeros(4), h=0.0)
    with pytest.raises(ValueError):
        jacobian_fd(default_system, np.zeros(4), scheme="backward")
    with pytest.raises(NonFiniteStateError):
        jacobian_fd(default_system, [np.inf, 0, 0, 0])


def test_cubic_divergence_cancels():
    x1, y1, x2, y2 = 1.0, 2.0, 3.0, 4.0
    div = (3 * x1**2 - 3 * y1**2) + (3 * y1**2 - 3 * x1**2) \
        + (3 * x2**2 - 3 * y2**2) + (3 * y2**2 - 3 * x2**2)
    assert div == 0.0
    s = benchmark_system(BenchmarkParams(epsilon=0.0, delta=0.0, alpha=1.0))
    assert check_weighted_divergence(s, [[1, 2, 3, 4]]) <= 1e-6


@pytest.mark.parametrize("alpha", [0.0, 0.1, 0.5, 2.0])
def test_weighted_divergence_vanishes(alpha):
    s = benchmark_system(BenchmarkParams(0.5, 0.3, alpha))
    assert check_weighted_divergence(s, sample_box(100, lo=-1, hi=1, seed=3)) <= 1e-8


def test_batched_and_pointwise_divergence_agree(default_system):
    import dataclasses
    pts = sample_box(50, seed=5)
    slow = dataclasses.replace(default_system, batch_flux=None)
    a = check_weighted_divergence(default_system, pts)
    b = check_weighted_divergence(slow, pts)
    assert a <= 1e-8 and b <= 1e-8


def test_divergence_detects_compressible_field():
    s = linear_system(np.eye(2))
    assert check_weighted_divergence(s, [[0.1, 0.2]]) == pytest.approx(2.0)


def test_as_state():
    np.testing.assert_array_equal(as_state([1, 2], 2), [1.0, 2.0])
    with pytest.raises(ValueError):
        as_state([1, 2], 3)


def test_labels(default_system):
    assert default_system.coordinate_labels() == ["x1", "y1", "x2", "y2"]
    assert linear_system(np.eye(3)).coordinate_labels() == ["u0", "u1", "u2"]
    assert default_system.frequency == pytest.approx(1.3)
