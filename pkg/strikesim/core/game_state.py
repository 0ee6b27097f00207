"""
One 100 Hz frame of the opponent's state and its flat 39-vector encoding

Layout: 8 pose joints x (x, y, z), paddle rotation row-major (9),
paddle translation (3), ball position (3).
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from strikesim.utils.validation import ShapeMismatchError, ValidationUtils

POSE_JOINTS = [
    "head", "neck", "right_shoulder", "right_elbow", "right_wrist",
    "left_shoulder", "left_elbow", "pelvis",
]
NUM_JOINTS = len(POSE_JOINTS)
STATE_DIM = NUM_JOINTS * 3 + 9 + 3 + 3

POSE_SLICE = slice(0, 24)
ROTATION_SLICE = slice(24, 33)
TRANSLATION_SLICE = slice(33, 36)
BALL_SLICE = slice(36, 39)

ROTATION_TOL = 1e-9


def _frozen(value, shape, name) -> np.ndarray:
    arr = ValidationUtils.require_shape(value, shape, name).copy()
    ValidationUtils.require_finite(arr, name)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GameState:
    pose_joints: np.ndarray
    paddle_rotation: np.ndarray
    paddle_translation: np.ndarray
    ball_position: np.ndarray
    timestep: int

    def __post_init__(self):
        object.__setattr__(self, "pose_joints", _frozen(self.pose_joints, (NUM_JOINTS, 3), "pose_joints"))
        rotation = _frozen(self.paddle_rotation, (3, 3), "paddle_rotation")
        if not np.allclose(rotation @ rotation.T, np.eye(3), atol=ROTATION_TOL, rtol=0.0):
            raise ValueError("Paddle rotation is not orthonormal")
        if abs(np.linalg.det(rotation) - 1.0) > ROTATION_TOL:
            raise ValueError("Paddle rotation must have determinant +1")
        object.__setattr__(self, "paddle_rotation", rotation)
        object.__setattr__(self, "paddle_translation", _frozen(self.paddle_translation, (3,), "paddle_translation"))
        object.__setattr__(self, "ball_position", _frozen(self.ball_position, (3,), "ball_position"))
        object.__setattr__(self, "timestep", int(self.timestep))

    def __eq__(self, other) -> bool:
        if not isinstance(other, GameState):
            return NotImplemented
        return (
            self.timestep == other.timestep
            and np.array_equal(self.pose_joints, other.pose_joints)
            and np.array_equal(self.paddle_rotation, other.paddle_rotation)
            and np.array_equal(self.paddle_translation, other.paddle_translation)
            and np.array_equal(self.ball_position, other.ball_position)
        )

    __hash__ = None


def flatten_state(state: GameState) -> np.ndarray:
    """Flatten a GameState into its 39-vector"""
    return np.concatenate([
        state.pose_joints.reshape(-1),
        state.paddle_rotation.reshape(-1),
        state.paddle_translation,
        state.ball_position,
    ])


def unflatten_state(vector: Sequence[float], timestep: int = 0) -> GameState:
    """Inverse of flatten_state"""
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (STATE_DIM,):
        raise ShapeMismatchError(f"State vector has shape {vector.shape}, expected ({STATE_DIM},)")
    return GameState(
        pose_joints=vector[POSE_SLICE].reshape(NUM_JOINTS, 3),
        paddle_rotation=vector[ROTATION_SLICE].reshape(3, 3),
        paddle_translation=vector[TRANSLATION_SLICE],
        ball_position=vector[BALL_SLICE],
        timestep=timestep,
    )


def states_to_matrix(states: Sequence[GameState]) -> np.ndarray:
    """Stack states into an L x 39 series"""
    if not states:
        return np.empty((0, STATE_DIM))
    return np.vstack([flatten_state(s) for s in states])
