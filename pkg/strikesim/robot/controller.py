"""
Closed-loop workspace controller

Desired paddle velocity U = K (goal - p) is mapped to joint velocities with
the minimum-norm pseudoinverse solution, shrunk by a single direction
preserving factor beta into the velocity / acceleration envelope, scaled by
the policy speed alpha and integrated with a clamped Euler step once per
command period.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from strikesim.robot.kinematics import (
    JointLimits,
    JointState,
    RobotModel,
    forward_kinematics,
    spatial_jacobian,
)
from strikesim.utils.validation import ConfigError, LimitViolationError, ValidationUtils

logger = logging.getLogger(__name__)

COMMAND_DT = 0.1  # s
TRACE_TOL = 1e-9
FEASIBILITY_TOL = 1e-12
ORIENTATION_WARN_DEG = 20.0


def min_norm_joint_velocity(jacobian, desired_velocity) -> np.ndarray:
    """Minimum-norm least-squares joint velocities for J theta_dot = U"""
    jacobian = ValidationUtils.require_finite(jacobian, "jacobian")
    desired_velocity = ValidationUtils.require_finite(desired_velocity, "desired_velocity").reshape(-1)
    return np.linalg.pinv(jacobian) @ desired_velocity


def smallest_singular_value(jacobian) -> float:
    return float(np.linalg.svd(np.asarray(jacobian, dtype=float), compute_uv=False)[-1])


def brake_velocity(theta_dot_prev, limits: JointLimits, dt: float = COMMAND_DT) -> np.ndarray:
    """Previous velocities ramped toward zero by at most amax * dt"""
    prev = ValidationUtils.require_finite(theta_dot_prev, "theta_dot_prev")
    step = limits.acceleration_max * dt
    return np.sign(prev) * np.maximum(np.abs(prev) - step, 0.0)


def constrain_velocity(theta_dot_cmd, theta_dot_prev, limits: JointLimits,
                       dt: float = COMMAND_DT) -> Tuple[np.ndarray, float]:
    """
    Scale a joint velocity command into the velocity / acceleration envelope

    Args:
        theta_dot_cmd: Commanded joint velocities
        theta_dot_prev: Velocities of the previous command period
        limits: Joint limits
        dt: Command period (s)

    Returns:
        Tuple: (beta * theta_dot_cmd, beta) with beta the largest value in
            [-1, 1] satisfying every joint's bounds. When no beta does
            (including a joint commanded to 0 that cannot stop within one
            period) the result is the rate-limited brake with beta = 0.
    """
    if not dt > 0:
        raise ConfigError("dt must be positive")
    cmd = ValidationUtils.require_finite(theta_dot_cmd, "theta_dot_cmd")
    prev = ValidationUtils.require_finite(theta_dot_prev, "theta_dot_prev")
    lo, hi = -1.0, 1.0
    feasible = True
    dv = limits.acceleration_max * dt
    for c, p, vmax, step in zip(cmd, prev, limits.velocity_max, dv):
        if c == 0.0:
            # beta cannot change this joint, its previous velocity must already be stoppable
            if abs(p) > step + FEASIBILITY_TOL:
                feasible = False
                break
            continue
        bound = vmax / abs(c)
        lo, hi = max(lo, -bound), min(hi, bound)
        a, b = (p - step) / c, (p + step) / c
        lo, hi = max(lo, min(a, b)), min(hi, max(a, b))
    if not feasible or lo > hi + FEASIBILITY_TOL:
        logger.warning("No feasible velocity scale for the command, braking at the acceleration limit")
        return brake_velocity(prev, limits, dt), 0.0
    beta = float(hi)
    return beta * cmd, beta


def step_joints(theta, theta_dot_star, alpha: float, limits: JointLimits,
                dt: float = COMMAND_DT) -> Tuple[np.ndarray, np.ndarray]:
    """
    Clamped Euler update theta + dt * alpha * theta_dot_star

    Returns:
        Tuple: (next positions, realized velocity = clamped displacement / dt)
    """
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    theta = np.asarray(theta, dtype=float)
    target = theta + dt * alpha * np.asarray(theta_dot_star, dtype=float)
    theta_next = limits.clamp(target)
    return theta_next, (theta_next - theta) / dt


def check_joint_trace(trace: Sequence[JointState], limits: JointLimits,
                      command_dt: float = COMMAND_DT, tol: float = TRACE_TOL) -> None:
    """
    Assert a per-timestep joint trace stays inside the limit envelope

    Velocities are piecewise constant over command periods, so accelerations
    are measured as velocity changes per command period.
    """
    prev = None
    for state in trace:
        if not limits.contains(state.theta, tol):
            raise LimitViolationError(f"Position limit violated at t={state.timestamp}")
        if np.any(np.abs(state.theta_dot) > limits.velocity_max + tol):
            raise LimitViolationError(f"Velocity limit violated at t={state.timestamp}")
        if prev is not None:
            accel = np.abs(state.theta_dot - prev.theta_dot) / command_dt
            if np.any(accel > limits.acceleration_max + tol):
                raise LimitViolationError(f"Acceleration limit violated at t={state.timestamp}")
        prev = state


@dataclass
class CommandOutcome:
    theta_next: np.ndarray
    theta_dot: np.ndarray
    beta: float
    alpha: float
    sigma_min: float


class WorkspaceController:
    """Executes goal commands on a RobotModel at the command rate"""

    def __init__(self, robot: RobotModel, gain: float = 1.0 / COMMAND_DT,
                 command_dt: float = COMMAND_DT):
        if gain <= 0 or command_dt <= 0:
            raise ConfigError("Controller gain and command period must be positive")
        self.robot = robot
        self.gain = gain
        self.command_dt = command_dt

    def paddle_pose(self, theta):
        return forward_kinematics(self.robot.chain, theta)

    def command(self, state: JointState, goal, alpha: float) -> CommandOutcome:
        """
        One command period towards a Cartesian goal

        Args:
            state: Joint state at the start of the period
            goal: Paddle-center goal (cm)
            alpha: Fraction of the allowed speed

        Returns:
            CommandOutcome: Positions at the end of the period and the
                realized velocity held during it
        """
        limits = self.robot.limits
        pose = self.paddle_pose(state.theta)
        desired = self.gain * (np.asarray(goal, dtype=float) - pose.position)
        jacobian = spatial_jacobian(self.robot.chain, state.theta)
        theta_dot = min_norm_joint_velocity(jacobian, desired)
        theta_dot_star, beta = constrain_velocity(theta_dot, state.theta_dot, limits, self.command_dt)

        # alpha shrinks the feasible command, which can leave the acceleration
        # envelope when the previous velocity was large; re-scale (or brake)
        velocity, _ = constrain_velocity(alpha * theta_dot_star, state.theta_dot, limits, self.command_dt)

        # alpha is already folded into velocity
        theta_next, realized = step_joints(state.theta, velocity, 1.0, limits, self.command_dt)
        sigma_min = smallest_singular_value(jacobian)
        self._log_orientation(pose.normal)
        return CommandOutcome(theta_next, realized, beta, alpha, sigma_min)

    def hold(self, state: JointState) -> CommandOutcome:
        """Period without a goal: the joints brake at the acceleration limit"""
        velocity = brake_velocity(state.theta_dot, self.robot.limits, self.command_dt)
        theta_next, realized = step_joints(state.theta, velocity, 1.0, self.robot.limits, self.command_dt)
        return CommandOutcome(theta_next, realized, 0.0, 0.0, math.nan)

    def interpolate_period(self, start: JointState, outcome: CommandOutcome,
                           steps: int, t0: float, step_dt: float) -> List[JointState]:
        """Per-timestep states inside a command period, excluding the start"""
        states = []
        for k in range(1, steps + 1):
            w = k / steps
            theta = start.theta + w * (outcome.theta_next - start.theta)
            states.append(JointState(theta, outcome.theta_dot, t0 + k * step_dt))
        return states

    @staticmethod
    def _log_orientation(normal: np.ndarray) -> None:
        deviation = math.degrees(math.acos(float(np.clip(normal[1], -1.0, 1.0))))
        if deviation > ORIENTATION_WARN_DEG:
            logger.debug(f"Paddle normal {deviation:.1f} deg away from the opponent direction")
