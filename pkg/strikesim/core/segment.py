"""
Segments: one validated exchange from the net crossing to the opponent's
hit, plus the post-hit ball path and its ground-truth trajectory
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from strikesim.core.frames import STRIKE_PLANE_Y, Region, classify_region
from strikesim.core.game_state import GameState, states_to_matrix
from strikesim.models.trajectory import PiecewiseLinearXY, interpolate_crossing, strike_from_params
from strikesim.utils.validation import ConfigError, ValidationUtils

logger = logging.getLogger(__name__)

SEGMENT_SCHEMA_VERSION = "1.0"
FRAME_RATE = 100.0  # Hz


@dataclass(frozen=True, eq=False)
class Segment:
    segment_id: str
    frames: Tuple[GameState, ...]
    post_hit_ball: np.ndarray  # row k is the ball at timestep k >= 0
    hit_index: int
    truth_params: PiecewiseLinearXY
    strike_point: Tuple[float, float]  # (x, z) at the strike plane
    fit_tolerance: float
    bounce_index: Optional[int] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValueError(f"Segment {self.segment_id} has no frames")
        steps = [f.timestep for f in frames]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError(f"Segment {self.segment_id} frames are not sorted by timestep")
        if not 0 <= self.hit_index < len(frames) or frames[self.hit_index].timestep != 0:
            raise ValueError(f"Segment {self.segment_id} hit_index must point at timestep 0")
        object.__setattr__(self, "frames", frames)

        ball = ValidationUtils.require_shape(self.post_hit_ball, (None, 3), "post_hit_ball").copy()
        ValidationUtils.require_finite(ball, "post_hit_ball")
        ball.setflags(write=False)
        object.__setattr__(self, "post_hit_ball", ball)
        object.__setattr__(self, "strike_point", (float(self.strike_point[0]), float(self.strike_point[1])))

        if self.fit_tolerance < 0:
            raise ValueError("fit_tolerance must be >= 0")
        gap = abs(strike_from_params(self.truth_params) - self.strike_point[0])
        if gap > self.fit_tolerance:
            raise ValueError(
                f"Segment {self.segment_id}: truth params miss the strike point by {gap:.3g} cm "
                f"(tolerance {self.fit_tolerance:.3g})"
            )

    @property
    def region(self) -> Region:
        return classify_region(self.strike_point[0])

    @property
    def pre_hit_frames(self) -> Tuple[GameState, ...]:
        return self.frames[: self.hit_index + 1]

    def pre_hit_matrix(self) -> np.ndarray:
        """L x 39 series ending at the hit frame"""
        return states_to_matrix(self.pre_hit_frames)

    def post_hit_times(self) -> np.ndarray:
        return np.arange(self.post_hit_ball.shape[0]) / FRAME_RATE

    def ball_observations(self, upto_step: int) -> Tuple[np.ndarray, np.ndarray]:
        """Post-hit (times, positions) with timestep <= upto_step"""
        count = max(0, min(upto_step + 1, self.post_hit_ball.shape[0]))
        return self.post_hit_times()[:count], self.post_hit_ball[:count]

    def strike_crossing(self, plane_y: float = STRIKE_PLANE_Y) -> Tuple[float, np.ndarray]:
        """(crossing timestep as a float, interpolated ball position)"""
        steps = np.arange(self.post_hit_ball.shape[0], dtype=float)
        return interpolate_crossing(steps, self.post_hit_ball, plane_y)


def _state_to_dict(state: GameState) -> Dict[str, Any]:
    return {
        "timestep": state.timestep,
        "pose_joints": state.pose_joints.tolist(),
        "paddle_rotation": state.paddle_rotation.tolist(),
        "paddle_translation": state.paddle_translation.tolist(),
        "ball_position": state.ball_position.tolist(),
    }


def segment_to_dict(segment: Segment) -> Dict[str, Any]:
    return {
        "version": SEGMENT_SCHEMA_VERSION,
        "segment_id": segment.segment_id,
        "hit_index": segment.hit_index,
        "bounce_index": segment.bounce_index,
        "truth_params": segment.truth_params.to_dict(),
        "strike_point": list(segment.strike_point),
        "fit_tolerance": segment.fit_tolerance,
        "metadata": segment.metadata,
        "frames": [_state_to_dict(f) for f in segment.frames],
        "post_hit_ball": segment.post_hit_ball.tolist(),
    }


def segment_from_dict(data: Dict[str, Any]) -> Segment:
    version = data.get("version")
    if version != SEGMENT_SCHEMA_VERSION:
        raise ConfigError(f"Unsupported segment schema version: {version!r}")
    params = data["truth_params"]
    return Segment(
        segment_id=data["segment_id"],
        frames=tuple(GameState(**frame) for frame in data["frames"]),
        post_hit_ball=np.asarray(data["post_hit_ball"], dtype=float),
        hit_index=int(data["hit_index"]),
        truth_params=PiecewiseLinearXY(params["a1"], params["a2"], params["b"]),
        strike_point=tuple(data["strike_point"]),
        fit_tolerance=float(data["fit_tolerance"]),
        bounce_index=data.get("bounce_index"),
        metadata=data.get("metadata", {}),
    )


def save_segment(segment: Segment, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(segment_to_dict(segment), sort_keys=True), encoding="utf-8")
    return path


def load_segment(path: Union[str, Path]) -> Segment:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"Failed to parse segment {path}: {e}") from e
    return segment_from_dict(data)
