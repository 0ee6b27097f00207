import json
import math

import numpy as np
import pytest

from strikesim.config.robot_registry import HOME_PADDLE_POSITION_CM, JOINT_ORDER, READY_PADDLE_POSITION_CM
from strikesim.robot.controller import (
    WorkspaceController,
    brake_velocity,
    check_joint_trace,
    constrain_velocity,
    min_norm_joint_velocity,
    step_joints,
)
from strikesim.robot.kinematics import (
    NUM_JOINTS,
    JointLimits,
    JointState,
    forward_kinematics,
    load_robot,
    rotation_about,
    spatial_jacobian,
)
from strikesim.utils.validation import ConfigError, LimitViolationError

A1 = JOINT_ORDER.index("A1")


def _uniform_limits(velocity=10.0, acceleration=20.0, types=None):
    n = NUM_JOINTS
    return JointLimits(
        names=tuple(JOINT_ORDER),
        types=types or ("prismatic",) * n,
        position_min=np.full(n, -1000.0),
        position_max=np.full(n, 1000.0),
        velocity_max=np.full(n, velocity),
        acceleration_max=np.full(n, acceleration),
    )


def _svd_pinv(J):
    u, s, vt = np.linalg.svd(J, full_matrices=False)
    inv = np.where(s > 1e-12 * s.max(), 1.0 / np.where(s == 0, 1.0, s), 0.0)
    return vt.T @ np.diag(inv) @ u.T


def _grid_max_beta(cmd, prev, limits, dt, resolution=1e-6):
    betas = np.linspace(-1.0, 1.0, int(round(2.0 / resolution)) + 1)
    feasible = np.ones(betas.size, dtype=bool)
    for c, p, vmax, amax in zip(cmd, prev, limits.velocity_max, limits.acceleration_max):
        v = betas * c
        feasible &= (np.abs(v) <= vmax + 1e-12) & (np.abs(v - p) <= amax * dt + 1e-12)
    return betas[feasible].max() if feasible.any() else None


def test_default_limits_match_table(robot):
    limits = robot.limits
    assert limits.position_max[0] == pytest.approx(100.0)
    assert limits.velocity_max[0] == pytest.approx(110.0)
    assert limits.acceleration_max[0] == pytest.approx(1500.0)
    assert limits.position_max[A1] == pytest.approx(math.radians(170.0))
    assert limits.velocity_max[A1] == pytest.approx(math.radians(85.0))
    assert limits.acceleration_max[A1] == pytest.approx(math.radians(3.69e3))
    np.testing.assert_array_equal(limits.position_min, -limits.position_max)


def test_limits_reject_inverted_bounds():
    with pytest.raises(ConfigError):
        JointLimits(tuple(JOINT_ORDER), ("prismatic",) * NUM_JOINTS, np.ones(NUM_JOINTS), np.zeros(NUM_JOINTS),
                    np.ones(NUM_JOINTS), np.ones(NUM_JOINTS))
    with pytest.raises(ConfigError):
        _uniform_limits(velocity=0.0)


def test_forward_kinematics_home_pose(robot):
    pose = forward_kinematics(robot.chain, np.zeros(NUM_JOINTS))
    np.testing.assert_allclose(pose.position, HOME_PADDLE_POSITION_CM, atol=1e-9)
    np.testing.assert_allclose(pose.normal, [0.0, 0.0, 1.0], atol=1e-12)


def test_forward_kinematics_prismatic_shift(robot):
    theta = np.zeros(NUM_JOINTS)
    theta[0] = 50.0
    pose = forward_kinematics(robot.chain, theta)
    np.testing.assert_allclose(pose.position, np.add(HOME_PADDLE_POSITION_CM, [50.0, 0.0, 0.0]), atol=1e-9)


def test_forward_kinematics_ready_pose_faces_opponent(robot):
    pose = forward_kinematics(robot.chain, robot.ready_theta, robot.limits)
    np.testing.assert_allclose(pose.position, READY_PADDLE_POSITION_CM, atol=1e-9)
    np.testing.assert_allclose(pose.normal, [0.0, 1.0, 0.0], atol=1e-12)


def test_forward_kinematics_base_rotation(robot):
    theta = robot.ready_theta.copy()
    theta[A1] = math.radians(170.0)
    pose = forward_kinematics(robot.chain, theta, robot.limits)
    pivot = np.array([0.0, -210.0, 0.0])
    ready = np.array(READY_PADDLE_POSITION_CM)
    expected = pivot + rotation_about(np.array([0.0, 0.0, 1.0]), math.radians(170.0)) @ (ready - pivot)
    np.testing.assert_allclose(pose.position, expected, atol=1e-9)


def test_forward_kinematics_rejects_out_of_limit(robot):
    theta = robot.ready_theta.copy()
    theta[A1] = math.radians(175.0)
    with pytest.raises(LimitViolationError):
        forward_kinematics(robot.chain, theta, robot.limits)


def test_jacobian_prismatic_columns_are_axes(robot):
    J = spatial_jacobian(robot.chain, np.zeros(NUM_JOINTS))
    np.testing.assert_array_equal(J[:, 0], [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(J[:, 1], [0.0, 1.0, 0.0])
    # paddle on the A1 axis has no moment arm
    np.testing.assert_allclose(J[:, A1], 0.0, atol=1e-12)


def test_jacobian_matches_finite_differences(robot, rng):
    limits = robot.limits
    h = 1e-6
    for _ in range(100):
        theta = rng.uniform(0.9 * limits.position_min, 0.9 * limits.position_max)
        J = spatial_jacobian(robot.chain, theta)
        fd = np.zeros_like(J)
        for i in range(NUM_JOINTS):
            step = np.zeros(NUM_JOINTS)
            step[i] = h
            fd[:, i] = (forward_kinematics(robot.chain, theta + step).position
                        - forward_kinematics(robot.chain, theta - step).position) / (2 * h)
        assert np.abs(J - fd).max() / np.abs(J).max() <= 1e-6


def test_min_norm_examples():
    J = np.hstack([np.eye(3), np.zeros((3, 6))])
    np.testing.assert_allclose(min_norm_joint_velocity(J, [1.0, 2.0, 3.0]), [1, 2, 3, 0, 0, 0, 0, 0, 0], atol=1e-12)
    np.testing.assert_allclose(min_norm_joint_velocity(np.array([[1.0, 1.0]]), [2.0]), [1.0, 1.0])


def test_min_norm_matches_svd_oracle(rng):
    for _ in range(1000):
        J = rng.normal(size=(3, 9))
        U = rng.normal(size=3)
        np.testing.assert_allclose(min_norm_joint_velocity(J, U), _svd_pinv(J) @ U, atol=1e-8)


def test_min_norm_is_residual_optimal_and_shortest(rng):
    # rank-2 task so the residual is nonzero
    J = rng.normal(size=(3, 9))
    J[2] = 0.0
    U = rng.normal(size=3)
    theta_dot = min_norm_joint_velocity(J, U)
    best = np.linalg.norm(J @ theta_dot - U)
    _, _, vt = np.linalg.svd(J)
    null_space = vt[2:]
    for _ in range(1000):
        w = theta_dot + rng.normal(scale=0.5, size=9)
        assert best <= np.linalg.norm(J @ w - U) + 1e-10
        same_residual = theta_dot + null_space.T @ rng.normal(size=null_space.shape[0])
        assert np.linalg.norm(theta_dot) <= np.linalg.norm(same_residual) + 1e-12


def test_constrain_velocity_velocity_bound(robot):
    cmd = np.zeros(NUM_JOINTS)
    cmd[A1] = math.radians(200.0)
    scaled, beta = constrain_velocity(cmd, np.zeros(NUM_JOINTS), robot.limits)
    assert beta == pytest.approx(0.425)
    assert scaled[A1] == pytest.approx(math.radians(85.0))


def test_constrain_velocity_inside_envelope(robot):
    cmd = 0.1 * robot.limits.velocity_max
    scaled, beta = constrain_velocity(cmd, np.zeros(NUM_JOINTS), robot.limits)
    assert beta == 1.0
    np.testing.assert_array_equal(scaled, cmd)


def test_constrain_velocity_braking_binds_acceleration():
    limits = _uniform_limits(velocity=10.0, acceleration=20.0)
    prev = np.zeros(NUM_JOINTS)
    prev[0] = 10.0
    cmd = np.zeros(NUM_JOINTS)
    cmd[0] = -20.0
    scaled, beta = constrain_velocity(cmd, prev, limits, dt=0.1)
    assert abs(scaled[0] - prev[0]) == pytest.approx(20.0 * 0.1)
    assert beta == pytest.approx(_grid_max_beta(cmd, prev, limits, 0.1), abs=1e-6)


def test_constrain_velocity_matches_grid_scan(rng):
    limits = _uniform_limits(velocity=10.0, acceleration=40.0)
    for _ in range(10):
        cmd = rng.normal(scale=15.0, size=NUM_JOINTS)
        prev = rng.uniform(-2.0, 2.0, NUM_JOINTS)
        scaled, beta = constrain_velocity(cmd, prev, limits, dt=0.1)
        expected = _grid_max_beta(cmd, prev, limits, 0.1)
        if expected is None:
            assert beta == 0.0
            continue
        assert beta == pytest.approx(expected, abs=2e-6)
        np.testing.assert_allclose(scaled, beta * cmd)


def test_constrain_velocity_zero_command_joint_must_stop():
    limits = _uniform_limits(velocity=2.0, acceleration=1.0)
    prev = np.zeros(NUM_JOINTS)
    prev[0] = 1.0
    cmd = np.zeros(NUM_JOINTS)
    cmd[1] = 0.5
    scaled, beta = constrain_velocity(cmd, prev, limits, dt=0.1)
    assert beta == 0.0
    assert scaled[0] == pytest.approx(0.9)
    assert not scaled[1:].any()
    assert np.all(np.abs(scaled - prev) / 0.1 <= limits.acceleration_max + 1e-9)

    prev[0] = 0.05
    scaled, beta = constrain_velocity(cmd, prev, limits, dt=0.1)
    assert beta == pytest.approx(0.2)
    assert scaled[0] == 0.0
    assert scaled[1] == pytest.approx(0.1)


def test_brake_velocity_is_rate_limited():
    limits = _uniform_limits(velocity=10.0, acceleration=20.0)
    prev = np.zeros(NUM_JOINTS)
    prev[:3] = [5.0, -1.5, 2.0]
    braked = brake_velocity(prev, limits, dt=0.1)
    np.testing.assert_allclose(braked[:3], [3.0, 0.0, 0.0])
    assert not braked[3:].any()


def test_constrain_velocity_rejects_bad_dt(robot):
    with pytest.raises(ConfigError):
        constrain_velocity(np.ones(NUM_JOINTS), np.zeros(NUM_JOINTS), robot.limits, dt=0.0)


def test_step_joints_examples(robot):
    tds = np.zeros(NUM_JOINTS)
    tds[A1] = math.radians(10.0)
    theta, realized = step_joints(np.zeros(NUM_JOINTS), tds, 0.5, robot.limits)
    assert math.degrees(theta[A1]) == pytest.approx(0.5)
    assert math.degrees(realized[A1]) == pytest.approx(5.0)

    start = np.zeros(NUM_JOINTS)
    start[A1] = math.radians(169.5)
    tds[A1] = math.radians(85.0)
    theta, realized = step_joints(start, tds, 1.0, robot.limits)
    assert math.degrees(theta[A1]) == pytest.approx(170.0)
    assert math.degrees(realized[A1]) == pytest.approx(5.0)

    theta, realized = step_joints(start, tds, 0.0, robot.limits)
    np.testing.assert_array_equal(theta, start)
    assert not realized.any()


def test_step_joints_rejects_alpha_out_of_range(robot):
    with pytest.raises(ConfigError):
        step_joints(np.zeros(NUM_JOINTS), np.zeros(NUM_JOINTS), 1.5, robot.limits)


def test_check_joint_trace():
    limits = _uniform_limits(velocity=10.0, acceleration=20.0)
    zero = np.zeros(NUM_JOINTS)
    slow = np.full(NUM_JOINTS, 1.0)
    check_joint_trace([JointState(zero, zero, 0.0), JointState(zero, slow, 0.1)], limits)

    fast = np.full(NUM_JOINTS, 11.0)
    with pytest.raises(LimitViolationError):
        check_joint_trace([JointState(zero, fast, 0.0)], limits)
    jump = np.full(NUM_JOINTS, 5.0)
    with pytest.raises(LimitViolationError):
        check_joint_trace([JointState(zero, zero, 0.0), JointState(zero, jump, 0.1)], limits)
    with pytest.raises(LimitViolationError):
        check_joint_trace([JointState(np.full(NUM_JOINTS, 2000.0), zero, 0.0)], limits)


def test_controller_converges_within_limits(robot):
    controller = WorkspaceController(robot)
    goal = np.array([10.0, -140.0, 30.0])
    state = robot.ready_state()
    trace = [state]
    for k in range(20):
        outcome = controller.command(state, goal, 1.0)
        assert 0.0 <= outcome.beta <= 1.0
        state = JointState(outcome.theta_next, outcome.theta_dot, (k + 1) * 0.1)
        trace.append(state)
    check_joint_trace(trace, robot.limits)
    assert np.linalg.norm(controller.paddle_pose(state.theta).position - goal) < 1.0


def test_controller_zero_alpha_and_hold(robot):
    controller = WorkspaceController(robot)
    state = robot.ready_state()
    outcome = controller.command(state, [10.0, -140.0, 30.0], 0.0)
    np.testing.assert_array_equal(outcome.theta_next, robot.ready_theta)
    held = controller.hold(state)
    np.testing.assert_array_equal(held.theta_next, robot.ready_theta)
    assert not held.theta_dot.any()


def test_controller_brakes_within_custom_acceleration_limits(tmp_path):
    path = tmp_path / "robot.json"
    path.write_text(json.dumps({"version": "1.0", "limits": {"X1": {"acceleration": 0.1}}}))
    robot = load_robot(path)
    assert robot.limits.acceleration_max[0] == pytest.approx(10.0)
    controller = WorkspaceController(robot)
    moving = np.zeros(NUM_JOINTS)
    moving[0] = 50.0
    state = JointState(robot.ready_theta, moving, 0.0)
    for alpha in (0.0, 0.5, 1.0):
        outcome = controller.command(state, [10.0, -140.0, 30.0], alpha)
        check_joint_trace([state, JointState(outcome.theta_next, outcome.theta_dot, 0.1)], robot.limits)
    held = controller.hold(state)
    assert held.theta_dot[0] == pytest.approx(49.0)
    check_joint_trace([state, JointState(held.theta_next, held.theta_dot, 0.1)], robot.limits)


def test_interpolate_period(robot):
    controller = WorkspaceController(robot)
    state = robot.ready_state()
    outcome = controller.command(state, [10.0, -140.0, 30.0], 1.0)
    states = controller.interpolate_period(state, outcome, 10, 0.0, 0.01)
    assert len(states) == 10
    np.testing.assert_allclose(states[-1].theta, outcome.theta_next)
    assert states[0].timestamp == pytest.approx(0.01)
    assert states[-1].timestamp == pytest.approx(0.1)


def test_controller_rejects_bad_gain(robot):
    with pytest.raises(ConfigError):
        WorkspaceController(robot, gain=0.0)


def test_load_robot_overrides(tmp_path):
    path = tmp_path / "robot.json"
    path.write_text(json.dumps({"version": "1.0", "limits": {"X1": {"velocity": 0.5}}}))
    robot = load_robot(path)
    assert robot.limits.velocity_max[0] == pytest.approx(50.0)
    assert robot.limits.velocity_max[1] == pytest.approx(110.0)

    path.write_text(json.dumps({"version": "2.0"}))
    with pytest.raises(ConfigError):
        load_robot(path)
    path.write_text(json.dumps({"version": "1.0", "limits": {"Z9": {"velocity": 1.0}}}))
    with pytest.raises(ConfigError):
        load_robot(path)
    with pytest.raises(ConfigError):
        load_robot(tmp_path / "missing.json")
