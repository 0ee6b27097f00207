"""
Discrete-time interception trials

A trial replays one segment at 100 Hz. Goals are computed at command
boundaries and held for one command period. Under the default "hold"
latency model the period stands in for the link latency: a goal uses the
observations up to its boundary and drives the robot from that boundary on.
Under the "observation" model the estimator inputs lag the boundary by the
latency instead.

Before servo_start the goals come from the anticipatory prediction (strike x
at a nominal z); from servo_start on they come from quadratic fits to the
observed post-hit ball. The trial ends when the ball crosses the strike
plane.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from strikesim.config.settings import PolicySpec, SimConfig
from strikesim.core.frames import STRIKE_PLANE_Y
from strikesim.core.results import GoalCommand, TrialResult
from strikesim.core.segment import Segment
from strikesim.models.predictors import PredictionMatrix
from strikesim.models.trajectory import BALL_RADIUS, detect_bounce_index, fit_servo_estimate
from strikesim.robot.controller import WorkspaceController, check_joint_trace
from strikesim.robot.kinematics import JointState, forward_kinematics
from strikesim.uncertainty.estimators import (
    PHASE_AT_HIT,
    PHASE_PRE_HIT,
    confidence_to_alpha,
    predicted_region,
)
from strikesim.utils.validation import ConfigError, StrikeSimError

logger = logging.getLogger(__name__)

PHASE_ANTICIPATORY = "anticipatory"
PHASE_SERVO = "servo"
SERVO_ALPHA = 1.0


@dataclass(frozen=True)
class ControllerPolicy:
    """Runtime form of a PolicySpec"""
    name: str
    kind: str
    alpha_1: float
    alpha_2: float
    proportional: bool = False
    estimator: Optional[str] = None

    @classmethod
    def from_spec(cls, spec: PolicySpec) -> "ControllerPolicy":
        return cls(spec.name, spec.kind, spec.alpha_1, spec.alpha_2,
                   spec.alpha_mode == "proportional", spec.estimator)

    @property
    def anticipates(self) -> bool:
        return self.kind != "servo_only"

    def alpha_for(self, prediction: PredictionMatrix, row: int, phase: str,
                  confidence: Optional[np.ndarray]) -> float:
        c = float(confidence[row]) if confidence is not None else 1.0
        return confidence_to_alpha(c, predicted_region(prediction, row), self.kind, phase,
                                   self.alpha_1, self.alpha_2, self.proportional)


def _check_timing(config: SimConfig) -> None:
    period = config.command_period
    if config.anticipatory_start > 0 or config.anticipatory_start % period:
        raise ConfigError("anticipatory_start must be a non-positive multiple of the command period")
    if (config.servo_start - config.anticipatory_start) % period:
        raise ConfigError("servo_start must lie on a command boundary")


def anticipatory_boundaries(config: SimConfig) -> List[int]:
    """Command boundaries that compute anticipatory goals"""
    if config.continuous_pre_hit_updates:
        return list(range(config.anticipatory_start, min(config.servo_start, 1), config.command_period))
    return sorted({config.anticipatory_start, 0} & set(range(config.anticipatory_start, config.servo_start)))


def _effective_boundary(config: SimConfig, t_c: int) -> int:
    """First command boundary at or after t_c + issue delay"""
    period = config.command_period
    offset = t_c + config.issue_delay - config.anticipatory_start
    return config.anticipatory_start + period * math.ceil(offset / period)


def _anticipatory_command(policy: ControllerPolicy, config: SimConfig, t_c: int,
                          prediction: PredictionMatrix, confidence: Optional[np.ndarray]) -> GoalCommand:
    observed = t_c - config.observation_delay
    row = PredictionMatrix.row_index(observed)
    strike_x = float(prediction.strike_points()[row])
    phase = PHASE_PRE_HIT if t_c < 0 else PHASE_AT_HIT
    alpha = policy.alpha_for(prediction, row, phase, confidence)
    return GoalCommand(
        computed_at=t_c,
        issued_at=_effective_boundary(config, t_c),
        observation_index=observed,
        phase=PHASE_ANTICIPATORY,
        goal=(strike_x, STRIKE_PLANE_Y, config.pre_hit_z_goal),
        alpha=alpha,
        prediction_row=row,
    )


def _servo_command(segment: Segment, config: SimConfig, t_c: int) -> Optional[GoalCommand]:
    observed = t_c - config.observation_delay
    times, positions = segment.ball_observations(observed)
    try:
        bounce = detect_bounce_index(positions[:, 2], BALL_RADIUS)
        estimate = fit_servo_estimate(times, positions, bounce, STRIKE_PLANE_Y, BALL_RADIUS)
    except StrikeSimError as e:
        logger.debug(f"{segment.segment_id}: servo fit at t={t_c} failed ({e}), keeping previous goal")
        return None
    x, z = estimate.strike_point
    return GoalCommand(
        computed_at=t_c,
        issued_at=_effective_boundary(config, t_c),
        observation_index=min(observed, positions.shape[0] - 1),
        phase=PHASE_SERVO,
        goal=(x, STRIKE_PLANE_Y, z),
        alpha=SERVO_ALPHA,
    )


def paddle_at(trace: List[JointState], controller: WorkspaceController, t: float, dt: float) -> np.ndarray:
    """Paddle center at a continuous time, joint positions interpolated between steps"""
    stamps = np.array([s.timestamp for s in trace])
    i = int(np.searchsorted(stamps, t * dt, side="right")) - 1
    i = min(max(i, 0), len(trace) - 2)
    w = (t * dt - stamps[i]) / (stamps[i + 1] - stamps[i])
    theta = trace[i].theta + w * (trace[i + 1].theta - trace[i].theta)
    return forward_kinematics(controller.robot.chain, theta).position


def end_distance(paddle: np.ndarray, ball: np.ndarray) -> float:
    """Paddle-to-ball distance in the strike plane (xz)"""
    return float(math.hypot(paddle[0] - ball[0], paddle[2] - ball[2]))


def is_hit(distance: float, paddle_radius: float) -> bool:
    return distance <= paddle_radius


def run_trial(segment: Segment, policy: ControllerPolicy, controller: WorkspaceController,
              config: SimConfig, prediction: Optional[PredictionMatrix] = None,
              confidence: Optional[np.ndarray] = None) -> TrialResult:
    """
    Run one interception trial

    Args:
        segment: Segment to replay
        policy: Controller policy
        controller: Workspace controller around the robot model
        config: Simulator timing
        prediction: Anticipatory prediction for the segment (required
            unless the policy is servo_only)
        confidence: Per-row confidence for proportional / gated policies

    Returns:
        TrialResult: Hit flag, end distance and the full joint / goal traces
    """
    _check_timing(config)
    if policy.anticipates and prediction is None:
        raise ConfigError(f"Policy {policy.name} needs an anticipatory prediction")
    crossing_time, ball = segment.strike_crossing(STRIKE_PLANE_Y)
    if crossing_time > config.max_post_hit_steps:
        raise ConfigError(f"{segment.segment_id}: crossing at t={crossing_time:.1f} exceeds the trial length")
    end_step = int(math.ceil(crossing_time))
    dt = config.dt
    period = config.command_period

    commands: Dict[int, List[GoalCommand]] = {}
    if policy.anticipates:
        for t_c in anticipatory_boundaries(config):
            command = _anticipatory_command(policy, config, t_c, prediction, confidence)
            commands.setdefault(t_c, []).append(command)

    robot = controller.robot
    state = JointState(robot.ready_theta, np.zeros_like(robot.ready_theta), config.anticipatory_start * dt)
    trace = [state]
    goal_trace: List[GoalCommand] = []
    active: Optional[GoalCommand] = None
    pending: List[GoalCommand] = []
    betas = []

    t_b = config.anticipatory_start
    while t_b < end_step:
        # goals computed here see observations up to t_b - observation_delay
        if t_b >= config.servo_start:
            command = _servo_command(segment, config, t_b)
            if command is not None:
                commands.setdefault(t_b, []).append(command)
        for command in commands.get(t_b, []):
            goal_trace.append(command)
            pending.append(command)
        ready = [c for c in pending if c.issued_at <= t_b]
        if ready:
            active = ready[-1]
            pending = [c for c in pending if c.issued_at > t_b]

        if active is None:
            outcome = controller.hold(state)
        else:
            outcome = controller.command(state, active.goal, active.alpha)
            betas.append(outcome.beta)
        states = controller.interpolate_period(state, outcome, period, t_b * dt, dt)
        trace.extend(states)
        state = states[-1]
        t_b += period

    trace = [s for s in trace if s.timestamp <= end_step * dt + 1e-12]
    check_joint_trace(trace, robot.limits, config.command_dt)

    paddle = paddle_at(trace, controller, crossing_time, dt)
    distance = end_distance(paddle, ball)
    hit = is_hit(distance, config.paddle_radius)
    logger.debug(f"{segment.segment_id} [{policy.name}]: distance={distance:.2f} cm hit={hit}")
    return TrialResult(
        segment_id=segment.segment_id,
        controller_id=policy.name,
        hit=hit,
        end_distance_to_goal=distance,
        joint_trace=tuple(trace),
        goal_trace=tuple(goal_trace),
        crossing_time=crossing_time,
        paddle_radius=config.paddle_radius,
        metadata={
            "min_beta": float(min(betas)) if betas else math.nan,
            "paddle_at_crossing": [float(v) for v in paddle],
            "ball_at_crossing": [float(v) for v in ball],
        },
    )


def failed_trial(segment_id: str, policy: ControllerPolicy, error: Exception,
                 paddle_radius: float) -> TrialResult:
    return TrialResult(
        segment_id=segment_id,
        controller_id=policy.name,
        hit=False,
        end_distance_to_goal=math.nan,
        paddle_radius=paddle_radius,
        error=f"{type(error).__name__}: {error}",
    )
