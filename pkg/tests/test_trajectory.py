import numpy as np
import pytest

from strikesim.models.trajectory import (
    PiecewiseLinearXY,
    QuadraticCurve,
    detect_bounce_index,
    eval_piecewise,
    fit_piecewise,
    fit_servo_estimate,
    interpolate_crossing,
    solve_quadratic_time,
    strike_from_params,
    trajectory_loss,
)
from strikesim.utils.validation import ConfigError, InsufficientSamplesError, NoStrikeError

G = 981.0


def test_eval_piecewise_examples():
    assert eval_piecewise(PiecewiseLinearXY(0.1, -0.2, 10.0), 100.0) == pytest.approx(20.0)
    assert eval_piecewise(PiecewiseLinearXY(3.0, -7.0, 5.0), 0.0) == pytest.approx(5.0)
    np.testing.assert_allclose(eval_piecewise(PiecewiseLinearXY(0.0, 0.0, 7.0), [-140.0, 0.0, 99.0]), 7.0)


def test_strike_from_params():
    assert strike_from_params(PiecewiseLinearXY(0.5, -0.2, 10.0)) == pytest.approx(38.0)
    assert strike_from_params(PiecewiseLinearXY(0.5, 0.0, 0.0)) == 0.0


def test_strike_from_params_is_affine(rng):
    for _ in range(20):
        p = PiecewiseLinearXY(*rng.normal(size=3))
        q = PiecewiseLinearXY(*rng.normal(size=3))
        both = PiecewiseLinearXY(p.a1 + q.a1, p.a2 + q.a2, p.b + q.b)
        assert strike_from_params(both) == pytest.approx(strike_from_params(p) + strike_from_params(q))
        assert strike_from_params(p) == eval_piecewise(p, -140.0)


def test_params_reject_non_finite():
    with pytest.raises(ValueError):
        PiecewiseLinearXY(np.nan, 0.0, 0.0)


def test_fit_piecewise_exact_recovery():
    truth = PiecewiseLinearXY(0.3, -0.1, 12.0)
    y = np.concatenate([np.linspace(150.0, 1.0, 17), np.linspace(-3.0, -140.0, 9)])
    fit = fit_piecewise(np.column_stack([y, eval_piecewise(truth, y)]))
    np.testing.assert_allclose(fit.params.to_array(), truth.to_array(), atol=1e-9)
    assert fit.residual <= 1e-9


def test_fit_piecewise_needs_both_sides():
    y = np.linspace(10.0, 100.0, 10)
    with pytest.raises(InsufficientSamplesError):
        fit_piecewise(np.column_stack([y, y]))


def test_fit_piecewise_matches_normal_equations(rng):
    truth = PiecewiseLinearXY(0.2, -0.3, 4.0)
    y = rng.uniform(-140.0, 150.0, 80)
    x = eval_piecewise(truth, y) + rng.normal(0.0, 1.0, y.size)
    fit = fit_piecewise(np.column_stack([y, x]))
    pre = y >= 0.0
    design = np.column_stack([np.where(pre, y, 0.0), np.where(pre, 0.0, y), np.ones_like(y)])
    expected = np.linalg.solve(design.T @ design, design.T @ x)
    np.testing.assert_allclose(fit.params.to_array(), expected, atol=1e-8)


def test_trajectory_loss_identical_is_zero():
    p = PiecewiseLinearXY(0.1, -0.4, 3.0)
    assert trajectory_loss(p, p) == 0.0
    assert trajectory_loss(p, p, step=1.0) == 0.0


def test_trajectory_loss_counts_grid_points():
    truth = PiecewiseLinearXY(0.1, -0.2, 5.0)
    shifted = PiecewiseLinearXY(0.1, -0.2, 7.5)
    assert trajectory_loss(shifted, truth) == pytest.approx(24 * 2.5)


def test_trajectory_loss_matches_brute_force(rng):
    for _ in range(10):
        p = PiecewiseLinearXY(*rng.normal(size=3))
        q = PiecewiseLinearXY(*rng.normal(size=3))
        total = 0.0
        for y in range(140, -11, -1):
            total += abs((p.a1 * y + p.b) - (q.a1 * y + q.b))
        for y in range(-70, -141, -1):
            total += abs((p.a2 * y + p.b) - (q.a2 * y + q.b))
        assert trajectory_loss(p, q, step=1.0) == pytest.approx(total, abs=1e-10)
        assert trajectory_loss(p, q) == pytest.approx(trajectory_loss(q, p))


@pytest.mark.parametrize("step", [0.0, -10.0, 7.0])
def test_trajectory_loss_rejects_bad_step(step):
    p = PiecewiseLinearXY(0.0, 0.0, 0.0)
    with pytest.raises(ConfigError):
        trajectory_loss(p, p, step=step)


def _projectile(times, x0=5.0, vx=40.0, y0=150.0, vy=-600.0, z0=30.0, bounce_y=-40.0, restitution=1.0):
    """Ball path with one table contact at bounce_y (ball radius 2 cm)"""
    tb = (y0 - bounce_y) / -vy
    vz0 = (2.0 - z0 + 0.5 * G * tb ** 2) / tb
    vz_up = -restitution * (vz0 - G * tb)
    dt = times - tb
    z = np.where(times <= tb, z0 + vz0 * times - 0.5 * G * times ** 2, 2.0 + vz_up * dt - 0.5 * G * dt ** 2)
    return np.column_stack([x0 + vx * times, y0 + vy * times, z]), tb, vz_up


def test_fit_servo_recovers_pre_bounce_coefficients():
    t = np.arange(11) / 100.0
    positions = np.column_stack([2.0 + 50.0 * t, 150.0 - 500.0 * t, 30.0 + 100.0 * t - 0.5 * G * t ** 2])
    estimate = fit_servo_estimate(t, positions)
    x_curve, y_curve, z_curve = estimate.pre_bounce
    assert x_curve.coefficients() == pytest.approx((0.0, 50.0, 2.0), abs=1e-9)
    assert y_curve.coefficients() == pytest.approx((0.0, -500.0, 150.0), abs=1e-9)
    assert z_curve.coefficients() == pytest.approx((-0.5 * G, 100.0, 30.0), rel=1e-9, abs=1e-9)
    assert not estimate.post_refit


def test_fit_servo_mirrors_velocity_at_contact():
    # contact at t = 0.3 s with vertical speed -300 cm/s
    vz0 = -300.0 + G * 0.3
    z0 = 2.0 - vz0 * 0.3 + 0.5 * G * 0.3 ** 2
    t = np.arange(11) / 100.0
    positions = np.column_stack([np.zeros_like(t), 150.0 - 500.0 * t, z0 + vz0 * t - 0.5 * G * t ** 2])
    estimate = fit_servo_estimate(t, positions)
    assert estimate.bounce_time == pytest.approx(0.3, abs=1e-9)
    pre_v = estimate.pre_bounce[2].velocity(estimate.bounce_time)
    post_v = estimate.post_bounce[2].velocity(estimate.bounce_time)
    assert pre_v == pytest.approx(-300.0, abs=1e-6)
    assert post_v == pytest.approx(300.0, abs=1e-6)


def test_fit_servo_refits_after_observed_bounce():
    t = np.arange(50) / 100.0
    positions, tb, vz_up = _projectile(t)
    bounce = detect_bounce_index(positions[:, 2])
    assert bounce == 32
    estimate = fit_servo_estimate(t, positions, bounce)
    assert estimate.post_refit
    t_star = 290.0 / 600.0
    expected_z = 2.0 + vz_up * (t_star - tb) - 0.5 * G * (t_star - tb) ** 2
    assert estimate.strike_time == pytest.approx(t_star, abs=1e-6)
    assert estimate.strike_point == pytest.approx((5.0 + 40.0 * t_star, expected_z), abs=1e-6)


def test_fit_servo_noisy_strike_point(rng):
    t = np.arange(50) / 100.0
    positions, tb, vz_up = _projectile(t)
    noisy = positions + rng.normal(0.0, 0.5, positions.shape)
    estimate = fit_servo_estimate(t, noisy, 32)
    t_star = 290.0 / 600.0
    expected_z = 2.0 + vz_up * (t_star - tb) - 0.5 * G * (t_star - tb) ** 2
    assert estimate.strike_point[0] == pytest.approx(5.0 + 40.0 * t_star, abs=1.5)
    assert estimate.strike_point[1] == pytest.approx(expected_z, abs=1.5)


def test_fit_servo_needs_three_samples():
    t = np.array([0.0, 0.01])
    with pytest.raises(InsufficientSamplesError):
        fit_servo_estimate(t, np.zeros((2, 3)))


def test_fit_servo_no_strike():
    t = np.arange(10) / 100.0
    positions = np.column_stack([np.zeros_like(t), 100.0 + 300.0 * t + 500.0 * t ** 2, np.full_like(t, 50.0)])
    with pytest.raises(NoStrikeError):
        fit_servo_estimate(t, positions)


def test_detect_bounce_index():
    assert detect_bounce_index(np.array([10.0, 6.5, 3.0, 2.5, 4.0, 8.0])) == 3
    assert detect_bounce_index(np.array([30.0, 20.0, 10.0])) is None


def test_interpolate_crossing():
    times = np.arange(4, dtype=float)
    positions = np.column_stack([[0.0, 10.0, 20.0, 30.0], [0.0, -100.0, -150.0, -200.0], np.zeros(4)])
    t, point = interpolate_crossing(times, positions)
    assert t == pytest.approx(1.8)
    np.testing.assert_allclose(point, [18.0, -140.0, 0.0])

    positions[2, 1] = -140.0
    t, point = interpolate_crossing(times, positions)
    assert t == 2.0

    with pytest.raises(NoStrikeError):
        interpolate_crossing(times[:2], positions[:2])


def test_solve_quadratic_time():
    curve = QuadraticCurve(1.0, 0.0, -4.0)
    assert solve_quadratic_time(curve, 0.0, 0.0) == pytest.approx(2.0)
    assert solve_quadratic_time(curve, 0.0, -5.0) == pytest.approx(-2.0)
    assert solve_quadratic_time(curve, -10.0, 0.0) is None
    assert solve_quadratic_time(QuadraticCurve(0.0, 2.0, 0.0), 4.0, 0.0) == pytest.approx(2.0)
