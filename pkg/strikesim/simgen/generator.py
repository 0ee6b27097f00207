"""
Synthetic segment generator

Each candidate segment is drawn from an opponent intent: the strike point the
opponent aims for, the bounce location and the spin (slope change at the
bounce). The post-hit ball follows the piecewise-linear xy model with a
projectile z and one table bounce. The pre-hit frames carry a synthetic
8-joint swing whose paddle yaw and tilt encode the intent, blended with
independent noise according to the configured predictability.

Candidates go through the validity rules (pose dropouts, paddle dropouts,
post-hit bounce side) before gap filling, low-pass filtering and ground-truth
fitting.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from strikesim.config.settings import GeneratorConfig
from strikesim.core.frames import DEFAULT_TABLE, STRIKE_PLANE_Y, Region
from strikesim.core.game_state import NUM_JOINTS, GameState
from strikesim.core.segment import FRAME_RATE, Segment
from strikesim.models.trajectory import (
    PiecewiseLinearXY,
    detect_bounce_index,
    eval_piecewise,
    fit_piecewise,
    interpolate_crossing,
)
from strikesim.robot.kinematics import rotation_about
from strikesim.utils.geometry_utils import (
    CameraModel,
    load_camera_rig,
    lowpass_filter,
    project_batch,
    triangulate_batch,
)
from strikesim.utils.validation import ConfigError, RejectedSegmentError

logger = logging.getLogger(__name__)

# Strike x ranges per region, kept 1 cm clear of the +-25 cm boundaries
REGION_TARGETS = {
    Region.LEFT: (-70.0, -26.0),
    Region.CENTER: (-24.0, 24.0),
    Region.RIGHT: (26.0, 70.0),
}
WEIGHT_ORDER = (Region.LEFT, Region.CENTER, Region.RIGHT)

HIT_X_RANGE = (-30.0, 30.0)
HIT_Z_RANGE = (20.0, 40.0)
NET_X_RANGE = (-40.0, 40.0)
OPPONENT_BOUNCE_Y_RANGE = (40.0, 100.0)
POST_CROSSING_FRAMES = 3
ANGLE_NOISE_PER_CM = 0.1  # rad of paddle angle noise per cm of sigma_obs
TARGET_SCALE = 70.0

RULE_POSE_DROPOUT = 1
RULE_PADDLE_DROPOUT = 2
RULE_BOUNCE = 3
RULE_TRUTH_FIT = 4

X_AXIS = np.array([1.0, 0.0, 0.0])
Z_AXIS = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class OpponentIntent:
    """
    What the opponent's stroke will do to the ball

    bounce_y is not range-checked here so that off-side bounces can be
    constructed and exercised against the validity rules; sample_intent
    only draws bounces on the robot half.
    """
    target_strike_x: float
    bounce_y: float
    spin_delta: float = 0.0
    swing_amplitude: float = 0.6
    sigma_obs: float = 1.0
    hit_x: float = 0.0
    hit_z: float = 30.0
    ball_speed: float = 550.0  # cm/s along -y

    def __post_init__(self):
        values = asdict(self)
        bad = [k for k, v in values.items() if not math.isfinite(v)]
        if bad:
            raise ConfigError(f"Intent fields must be finite: {bad}")
        if self.sigma_obs < 0:
            raise ConfigError("sigma_obs must be >= 0")
        if self.ball_speed <= 0:
            raise ConfigError("ball_speed must be positive")

    def params(self, hit_y: float) -> PiecewiseLinearXY:
        """Line parameters that start at the hit point and reach the target at the strike plane"""
        a1 = (self.hit_x - self.target_strike_x + STRIKE_PLANE_Y * self.spin_delta) / (hit_y - STRIKE_PLANE_Y)
        b = self.hit_x - a1 * hit_y
        return PiecewiseLinearXY(a1, a1 + self.spin_delta, b)


def sample_intent(config: GeneratorConfig, rng: np.random.Generator,
                  region: Optional[Region] = None) -> OpponentIntent:
    """
    Draw an intent; the region comes from the configured mix unless given

    Args:
        config: Generator settings
        rng: Random stream for this candidate
        region: Force the target region

    Returns:
        OpponentIntent: Intent with a bounce on the robot half
    """
    if region is None:
        weights = np.asarray(config.region_weights, dtype=float)
        region = WEIGHT_ORDER[int(rng.choice(3, p=weights / weights.sum()))]
    lo, hi = REGION_TARGETS[Region(region)]
    return OpponentIntent(
        target_strike_x=float(rng.uniform(lo, hi)),
        bounce_y=float(rng.uniform(*config.bounce_y_range)),
        spin_delta=float(rng.normal(0.0, config.spin_sigma)) if config.spin_sigma > 0 else 0.0,
        swing_amplitude=config.swing_amplitude,
        sigma_obs=config.sigma_obs,
        hit_x=float(rng.uniform(*HIT_X_RANGE)),
        hit_z=float(rng.uniform(*HIT_Z_RANGE)),
        ball_speed=float(rng.uniform(*config.ball_speed_range)),
    )


@dataclass
class CandidateSegment:
    """Observed but not yet validated segment"""
    intent: OpponentIntent
    params: PiecewiseLinearXY
    timesteps: np.ndarray  # pre-hit timesteps, ending at 0
    pose_joints: np.ndarray  # L x 8 x 3, NaN where dropped
    paddle_rotation: np.ndarray  # L x 3 x 3, NaN where dropped
    paddle_translation: np.ndarray  # L x 3, NaN where dropped
    pre_hit_ball: np.ndarray  # L x 3
    post_hit_ball: np.ndarray  # N x 3, row k at timestep k
    pose_missing: np.ndarray
    paddle_missing: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def pose_dropout(self) -> float:
        return float(self.pose_missing.mean())

    @property
    def paddle_dropout(self) -> float:
        return float(self.paddle_missing.mean())


@dataclass(frozen=True)
class ValidityVerdict:
    accepted: bool
    reason: str = ""
    rule: Optional[int] = None


def _post_hit_path(config: GeneratorConfig, intent: OpponentIntent, params: PiecewiseLinearXY) -> np.ndarray:
    """Noise-free post-hit ball, sampled at 100 Hz until just past the strike plane"""
    g, r, e = config.gravity, config.ball_radius, config.restitution
    vy = intent.ball_speed
    y0 = config.hit_y
    steps = int(math.ceil((y0 - STRIKE_PLANE_Y) / vy * FRAME_RATE)) + POST_CROSSING_FRAMES
    t = np.arange(steps + 1) / FRAME_RATE
    y = y0 - vy * t
    x = eval_piecewise(params, y)

    # z reaches the ball radius exactly at bounce_y, then leaves with restitution
    tb = (y0 - intent.bounce_y) / vy
    vz0 = (r - intent.hit_z + 0.5 * g * tb ** 2) / tb
    vz_up = -e * (vz0 - g * tb)
    dt = t - tb
    z = np.where(
        t <= tb,
        intent.hit_z + vz0 * t - 0.5 * g * t ** 2,
        r + vz_up * dt - 0.5 * g * dt ** 2,
    )
    return np.column_stack([x, y, z])


def _pre_hit_ball(config: GeneratorConfig, intent: OpponentIntent, times: np.ndarray,
                  rng: np.random.Generator) -> np.ndarray:
    """Incoming ball: crosses the net at the first frame and meets the paddle at t = 0"""
    g, r, e = config.gravity, config.ball_radius, config.restitution
    y0 = config.hit_y
    v_in = y0 / -times[0]
    x_net = rng.uniform(*NET_X_RANGE)
    y = y0 + v_in * times
    x = intent.hit_x + (intent.hit_x - x_net) * times / -times[0]

    t_bounce = (rng.uniform(*OPPONENT_BOUNCE_Y_RANGE) - y0) / v_in
    tau = -t_bounce
    w = (intent.hit_z - r + 0.5 * g * tau ** 2) / tau
    after = times - t_bounce
    before = t_bounce - times
    z = np.where(
        times >= t_bounce,
        r + w * after - 0.5 * g * after ** 2,
        r + (w / e) * before - 0.5 * g * before ** 2,
    )
    return np.column_stack([x, y, np.maximum(z, r)])


def _intent_codes(config: GeneratorConfig, intent: OpponentIntent, rng: np.random.Generator) -> Tuple[float, float]:
    """Swing codes: the intent blended with independent noise by the predictability"""
    rho = config.predictability
    mix = math.sqrt(max(0.0, 1.0 - rho ** 2))
    u_target = rho * intent.target_strike_x / TARGET_SCALE + mix * rng.normal()
    spin = intent.spin_delta / config.spin_sigma if config.spin_sigma > 0 else 0.0
    u_spin = rho * spin + mix * rng.normal()
    return float(u_target), float(u_spin)


def _swing(config: GeneratorConfig, intent: OpponentIntent, times: np.ndarray,
           rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Noise-free pose (L x 8 x 3), noisy paddle rotations and the wrist path"""
    length = times.size
    hit = np.array([intent.hit_x, config.hit_y, intent.hit_z])
    u_target, u_spin = _intent_codes(config, intent, rng)
    phi = intent.swing_amplitude * u_target

    s = np.arange(length - 1, -1, -1) / (length - 1)  # 1 at the first frame, 0 at the hit
    weight = (1.0 - s) ** 2
    yaw = weight * phi
    tilt = weight * 0.5 * u_spin
    angle_sigma = ANGLE_NOISE_PER_CM * intent.sigma_obs

    body_x = intent.hit_x + 30.0
    body_y = config.hit_y + 45.0
    pose = np.zeros((length, NUM_JOINTS, 3))
    rotations = np.zeros((length, 3, 3))
    wrist = np.zeros((length, 3))
    for i in range(length):
        torso = rotation_about(Z_AXIS, 0.3 * yaw[i])
        neck = np.array([body_x, body_y, 150.0])
        right_shoulder = neck + torso @ np.array([-20.0, 0.0, -5.0])
        left_shoulder = neck + torso @ np.array([20.0, 0.0, -5.0])
        # the approach path is intent-free; the cue rides on the yaw, which sharpens toward the hit
        wrist[i] = (hit + s[i] * np.array([35.0, 50.0, 10.0])
                    + s[i] * (1.0 - s[i]) * np.array([20.0 * math.sin(yaw[i]), 0.0, 10.0 * tilt[i]]))
        right_elbow = 0.5 * (right_shoulder + wrist[i]) + np.array([10.0 * math.sin(yaw[i]), 5.0, -10.0])
        left_elbow = left_shoulder + torso @ np.array([10.0, -5.0, -25.0])
        pose[i] = [
            neck + np.array([0.0, 0.0, 15.0]),  # head
            neck,
            right_shoulder,
            right_elbow,
            wrist[i],
            left_shoulder,
            left_elbow,
            np.array([body_x, body_y, 100.0]),  # pelvis
        ]
        noisy_yaw = yaw[i] + (rng.normal(0.0, angle_sigma) if angle_sigma > 0 else 0.0)
        noisy_tilt = tilt[i] + (rng.normal(0.0, angle_sigma) if angle_sigma > 0 else 0.0)
        rotations[i] = (rotation_about(Z_AXIS, noisy_yaw) @ rotation_about(X_AXIS, noisy_tilt)
                        @ rotation_about(X_AXIS, math.pi / 2))
    return pose, rotations, wrist


def _through_cameras(points: np.ndarray, cameras: Sequence[CameraModel], pixel_noise: float,
                     rng: np.random.Generator) -> np.ndarray:
    pixels = project_batch(cameras, points)
    if pixel_noise > 0:
        pixels = pixels + rng.normal(0.0, pixel_noise, pixels.shape)
    recovered, _ = triangulate_batch(cameras, pixels)
    return recovered


def _dropout_mask(length: int, rng: np.random.Generator, rate: float,
                  forced_fraction: Optional[float]) -> np.ndarray:
    mask = np.zeros(length, dtype=bool)
    if forced_fraction is not None:
        count = int(round(forced_fraction * length))
        mask[rng.choice(length, size=count, replace=False)] = True
        return mask
    if rate <= 0:
        return mask
    # per-segment dropout level, heavy tailed around the configured mean rate
    level = rng.beta(0.5, 0.5 * (1.0 - rate) / rate) if rate < 1 else 1.0
    return rng.random(length) < level


def simulate_candidate(config: GeneratorConfig, intent: OpponentIntent, rng: np.random.Generator,
                       cameras: Optional[Sequence[CameraModel]] = None,
                       dropout_fractions: Optional[Tuple[float, float]] = None) -> CandidateSegment:
    """
    Simulate and observe one candidate segment

    Args:
        config: Generator settings
        intent: Opponent intent
        rng: Random stream for this candidate
        cameras: Rig used when observing through cameras (default rig if None)
        dropout_fractions: Exact (pose, paddle) dropout fractions instead
            of the random dropout model

    Returns:
        CandidateSegment: Observations with dropped frames set to NaN
    """
    length = config.pre_hit_frames
    timesteps = np.arange(-(length - 1), 1)
    times = timesteps / FRAME_RATE
    params = intent.params(config.hit_y)

    post = _post_hit_path(config, intent, params)
    if config.ball_noise > 0:
        post = post + rng.normal(0.0, config.ball_noise, post.shape)

    ball = _pre_hit_ball(config, intent, times, rng)
    pose, rotations, wrist = _swing(config, intent, times, rng)
    if intent.sigma_obs > 0:
        pose = pose + rng.normal(0.0, intent.sigma_obs, pose.shape)
    translation = wrist + (rng.normal(0.0, intent.sigma_obs, wrist.shape) if intent.sigma_obs > 0 else 0.0)

    if config.observe_through_cameras:
        rig = list(cameras) if cameras is not None else load_camera_rig(config.camera_rig)
        points = np.vstack([pose.reshape(-1, 3), ball])
        recovered = _through_cameras(points, rig, config.pixel_noise, rng)
        pose = recovered[: length * NUM_JOINTS].reshape(length, NUM_JOINTS, 3)
        ball = recovered[length * NUM_JOINTS:]

    forced_pose, forced_paddle = dropout_fractions if dropout_fractions is not None else (None, None)
    pose_missing = _dropout_mask(length, rng, config.dropout_rate, forced_pose)
    paddle_missing = _dropout_mask(length, rng, config.dropout_rate, forced_paddle)
    pose[pose_missing] = np.nan
    rotations[paddle_missing] = np.nan
    translation[paddle_missing] = np.nan

    return CandidateSegment(
        intent=intent,
        params=params,
        timesteps=timesteps,
        pose_joints=pose,
        paddle_rotation=rotations,
        paddle_translation=translation,
        pre_hit_ball=ball,
        post_hit_ball=post,
        pose_missing=pose_missing,
        paddle_missing=paddle_missing,
    )


def validity_filter(candidate: CandidateSegment, config: GeneratorConfig) -> ValidityVerdict:
    """
    Apply the exclusion rules to a candidate

    Rule 1: too many frames without a pose. Rule 2: too many frames without
    a paddle pose. Rule 3: the post-hit ball does not bounce on the robot
    half of the table.
    """
    if candidate.pose_dropout > config.dropout_threshold or candidate.pose_missing.all():
        return ValidityVerdict(False, f"pose missing in {candidate.pose_dropout:.0%} of frames", RULE_POSE_DROPOUT)
    if candidate.paddle_dropout > config.dropout_threshold or candidate.paddle_missing.all():
        return ValidityVerdict(False, f"paddle missing in {candidate.paddle_dropout:.0%} of frames",
                               RULE_PADDLE_DROPOUT)

    post = candidate.post_hit_ball
    index = detect_bounce_index(post[:, 2], config.ball_radius)
    if index is None:
        return ValidityVerdict(False, "no table bounce detected after the hit", RULE_BOUNCE)
    x, y = post[index, 0], post[index, 1]
    if y >= DEFAULT_TABLE.net_y:
        return ValidityVerdict(False, f"ball bounces on the striker's side (y={y:.1f})", RULE_BOUNCE)
    if not DEFAULT_TABLE.on_table(x, y):
        return ValidityVerdict(False, f"ball bounces off the table at ({x:.1f}, {y:.1f})", RULE_BOUNCE)
    return ValidityVerdict(True)


def _fill_gaps(values: np.ndarray, method: str) -> np.ndarray:
    """Fill dropped frames of an L x D array along time"""
    frame = pd.DataFrame(values.reshape(values.shape[0], -1))
    if method == "linear":
        frame = frame.interpolate(method="linear", limit_direction="both")
    frame = frame.ffill().bfill()
    return frame.to_numpy().reshape(values.shape)


def clean_candidate(candidate: CandidateSegment, config: GeneratorConfig) -> Tuple[GameState, ...]:
    """Fill dropped frames and low-pass the positional channels"""
    length = candidate.timesteps.size
    window = min(config.filter_window, length if length % 2 else length - 1)
    pose = _fill_gaps(candidate.pose_joints, "linear")
    translation = _fill_gaps(candidate.paddle_translation, "linear")
    # rotations are carried over from the previous valid frame, never blended
    rotations = _fill_gaps(candidate.paddle_rotation, "hold")

    pose = lowpass_filter(pose, window)
    translation = lowpass_filter(translation, window)
    ball = lowpass_filter(candidate.pre_hit_ball, window)
    return tuple(
        GameState(pose[i], rotations[i], translation[i], ball[i], int(candidate.timesteps[i]))
        for i in range(length)
    )


def _intent_metadata(intent: OpponentIntent, params: PiecewiseLinearXY) -> Dict[str, Any]:
    return {
        "intent": {k: float(v) for k, v in asdict(intent).items()},
        "generating_params": params.to_dict(),
    }


def generate_segment(config: GeneratorConfig, intent: OpponentIntent, index: int = 0,
                     rng: Optional[np.random.Generator] = None,
                     cameras: Optional[Sequence[CameraModel]] = None,
                     dropout_fractions: Optional[Tuple[float, float]] = None) -> Segment:
    """
    Generate one accepted segment or raise RejectedSegmentError

    Args:
        config: Generator settings
        intent: Opponent intent
        index: Candidate index; names the segment and seeds its stream
        rng: Random stream (default: derived from (config.seed, index))
        cameras: Camera rig for observation
        dropout_fractions: Exact (pose, paddle) dropout fractions

    Returns:
        Segment: Validated, cleaned segment with fitted ground truth
    """
    rng = rng if rng is not None else np.random.default_rng([config.seed, index])
    segment_id = f"seg-{index:06d}"
    candidate = simulate_candidate(config, intent, rng, cameras, dropout_fractions)
    verdict = validity_filter(candidate, config)
    if not verdict.accepted:
        raise RejectedSegmentError(f"{segment_id}: {verdict.reason}", verdict.rule)

    frames = clean_candidate(candidate, config)
    post = candidate.post_hit_ball
    truth = fit_piecewise(post[:, [1, 0]], split_y=DEFAULT_TABLE.net_y)
    steps = np.arange(post.shape[0], dtype=float)
    _, crossing = interpolate_crossing(steps, post, STRIKE_PLANE_Y)

    metadata = _intent_metadata(intent, candidate.params)
    metadata.update({
        "index": index,
        "pose_dropout": candidate.pose_dropout,
        "paddle_dropout": candidate.paddle_dropout,
        "truth_residual": truth.residual,
    })
    try:
        return Segment(
            segment_id=segment_id,
            frames=frames,
            post_hit_ball=post,
            hit_index=len(frames) - 1,
            truth_params=truth.params,
            strike_point=(float(crossing[0]), float(crossing[2])),
            fit_tolerance=1e-6 + 6.0 * truth.residual,
            bounce_index=detect_bounce_index(post[:, 2], config.ball_radius),
            metadata=metadata,
        )
    except ValueError as e:
        raise RejectedSegmentError(f"{segment_id}: {e}", RULE_TRUTH_FIT) from e


def _generate_candidate(args: Tuple[GeneratorConfig, int, Optional[List[CameraModel]]]) -> Tuple[int, Any]:
    """Worker: (index, Segment) or (index, (rule, reason)) for a rejection"""
    config, index, cameras = args
    rng = np.random.default_rng([config.seed, index])
    intent = sample_intent(config, rng)
    try:
        return index, generate_segment(config, intent, index, rng, cameras)
    except RejectedSegmentError as e:
        return index, (e.rule, str(e))


def generate_segments(config: GeneratorConfig, jobs: int = 1,
                      cameras: Optional[Sequence[CameraModel]] = None) -> Tuple[List[Segment], Dict[str, Any]]:
    """
    Generate candidates in index order until segment_count are accepted

    Each candidate index has its own random stream, so the accepted set does
    not depend on the number of jobs.

    Returns:
        Tuple: (accepted segments in index order, generation stats)
    """
    target = config.segment_count
    max_attempts = config.max_attempts_factor * target
    rig = list(cameras) if cameras is not None else (
        load_camera_rig(config.camera_rig) if config.observe_through_cameras else None)

    accepted: List[Segment] = []
    rejected: Dict[int, int] = {}
    attempts = 0
    batch = max(16, 4 * jobs)
    executor = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        while len(accepted) < target and attempts < max_attempts:
            indices = range(attempts, min(attempts + max(batch, target - len(accepted)), max_attempts))
            tasks = [(config, i, rig) for i in indices]
            outputs = executor.map(_generate_candidate, tasks, chunksize=4) if executor else map(_generate_candidate, tasks)
            for index, output in outputs:
                attempts = index + 1
                if isinstance(output, Segment):
                    accepted.append(output)
                    if len(accepted) == target:
                        break
                else:
                    rule, reason = output
                    rejected[rule] = rejected.get(rule, 0) + 1
                    logger.debug(f"Rejected candidate {index}: {reason}")
            logger.debug(f"Generated {len(accepted)}/{target} segments ({attempts} candidates)")
    finally:
        if executor is not None:
            executor.shutdown()

    if len(accepted) < target:
        raise ConfigError(
            f"Only {len(accepted)} of {target} segments accepted after {attempts} candidates; "
            "the configured mix is infeasible"
        )
    if rejected:
        logger.warning(f"Rejected {sum(rejected.values())} candidates by rule: {dict(sorted(rejected.items()))}")
    stats = {"attempts": attempts, "rejected_by_rule": {str(k): v for k, v in sorted(rejected.items())}}
    return accepted, stats

