"""
Kinematic model of the KUKA LBR iiwa on the Ridgeback base

Nine joints: two prismatic base joints (X1, Y1) and seven revolute arm joints
(A1..A7). Internally positions are cm for prismatic joints and rad for
revolute joints; the registry tables are converted on load.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from strikesim.config.robot_registry import (
    JOINT_ORDER,
    READY_CONFIGURATION_DEG,
    load_robot_config,
)
from strikesim.utils.validation import ConfigError, LimitViolationError, ValidationUtils

logger = logging.getLogger(__name__)

NUM_JOINTS = len(JOINT_ORDER)
LIMIT_TOL = 1e-9


def _to_internal(joint_type: str, value: float, length_scale: float) -> float:
    return value * length_scale if joint_type == "prismatic" else math.radians(value)


@dataclass(frozen=True, eq=False)
class JointLimits:
    names: Tuple[str, ...]
    types: Tuple[str, ...]
    position_min: np.ndarray
    position_max: np.ndarray
    velocity_max: np.ndarray
    acceleration_max: np.ndarray

    def __post_init__(self):
        n = len(self.names)
        for name in ("position_min", "position_max", "velocity_max", "acceleration_max"):
            arr = ValidationUtils.require_shape(getattr(self, name), (n,), name).copy()
            ValidationUtils.require_finite(arr, name)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.position_min >= self.position_max):
            raise ConfigError("Joint position min must be below max")
        if np.any(self.velocity_max <= 0) or np.any(self.acceleration_max <= 0):
            raise ConfigError("Joint velocity and acceleration limits must be positive")

    @classmethod
    def from_table(cls, table: Dict[str, Dict[str, Any]]) -> "JointLimits":
        """Build limits from a registry-style table (m / deg units)"""
        missing = [name for name in JOINT_ORDER if name not in table]
        if missing:
            raise ConfigError(f"Joint limits missing for {missing}")
        types, pos, vel, acc = [], [], [], []
        for name in JOINT_ORDER:
            entry = table[name]
            jtype = entry["type"]
            types.append(jtype)
            pos.append(_to_internal(jtype, entry["position"], 100.0))
            vel.append(_to_internal(jtype, entry["velocity"], 100.0))
            acc.append(_to_internal(jtype, entry["acceleration"], 100.0))
        pos = np.array(pos)
        return cls(tuple(JOINT_ORDER), tuple(types), -pos, pos, np.array(vel), np.array(acc))

    def contains(self, theta: np.ndarray, tol: float = LIMIT_TOL) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.position_min - tol) and np.all(theta <= self.position_max + tol))

    def clamp(self, theta: np.ndarray) -> np.ndarray:
        return np.clip(theta, self.position_min, self.position_max)


@dataclass(frozen=True, eq=False)
class JointState:
    theta: np.ndarray
    theta_dot: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        for name in ("theta", "theta_dot"):
            arr = ValidationUtils.require_shape(getattr(self, name), (NUM_JOINTS,), name).copy()
            ValidationUtils.require_finite(arr, name)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def to_dict(self) -> Dict[str, Any]:
        return {"timestamp": self.timestamp, "theta": self.theta.tolist(), "theta_dot": self.theta_dot.tolist()}


@dataclass(frozen=True)
class JointDescriptor:
    name: str
    joint_type: str
    axis: Tuple[float, float, float]
    offset: Tuple[float, float, float]


@dataclass(frozen=True)
class PaddlePose:
    position: np.ndarray
    normal: np.ndarray


@dataclass(frozen=True)
class KinematicChain:
    joints: Tuple[JointDescriptor, ...]
    base_mount: Tuple[float, float, float]
    tool_offset: Tuple[float, float, float]
    paddle_normal_local: Tuple[float, float, float] = (0.0, 0.0, 1.0)

    @classmethod
    def from_config(cls, chain: Dict[str, Any]) -> "KinematicChain":
        joints = []
        for entry in chain["joints"]:
            axis = np.asarray(entry["axis"], dtype=float)
            norm = np.linalg.norm(axis)
            if norm == 0:
                raise ConfigError(f"Joint {entry['name']} has a zero axis")
            joints.append(JointDescriptor(
                name=entry["name"],
                joint_type=entry["type"],
                axis=tuple(axis / norm),
                offset=tuple(float(v) for v in entry["offset_cm"]),
            ))
        if [j.name for j in joints] != JOINT_ORDER:
            raise ConfigError(f"Chain joints must be ordered {JOINT_ORDER}")
        return cls(
            joints=tuple(joints),
            base_mount=tuple(float(v) for v in chain["base_mount_cm"]),
            tool_offset=tuple(float(v) for v in chain["tool_offset_cm"]),
            paddle_normal_local=tuple(float(v) for v in chain.get("paddle_normal_local", (0.0, 0.0, 1.0))),
        )


def rotation_about(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a unit axis"""
    x, y, z = axis
    c, s = math.cos(angle), math.sin(angle)
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def _chain_pass(chain: KinematicChain, theta: np.ndarray):
    """World-frame joint axes, joint origins and paddle pose"""
    rotation = np.eye(3)
    position = np.array(chain.base_mount, dtype=float)
    axes = np.zeros((NUM_JOINTS, 3))
    origins = np.zeros((NUM_JOINTS, 3))
    for i, joint in enumerate(chain.joints):
        position = position + rotation @ np.array(joint.offset)
        axis = np.array(joint.axis)
        axes[i] = rotation @ axis
        origins[i] = position
        if joint.joint_type == "prismatic":
            position = position + axes[i] * theta[i]
        else:
            rotation = rotation @ rotation_about(axis, theta[i])
    paddle = position + rotation @ np.array(chain.tool_offset)
    normal = rotation @ np.array(chain.paddle_normal_local)
    return axes, origins, PaddlePose(paddle, normal)


def forward_kinematics(chain: KinematicChain, theta, limits: Optional[JointLimits] = None) -> PaddlePose:
    """
    Paddle center and normal for a joint configuration

    Args:
        chain: Kinematic chain
        theta: 9 joint positions (cm / rad)
        limits: When given, configurations outside the limits are rejected

    Returns:
        PaddlePose: World position (cm) and unit normal
    """
    theta = ValidationUtils.require_shape(theta, (NUM_JOINTS,), "theta")
    if limits is not None and not limits.contains(theta):
        raise LimitViolationError("Joint configuration outside position limits")
    return _chain_pass(chain, theta)[2]


def spatial_jacobian(chain: KinematicChain, theta) -> np.ndarray:
    """3 x 9 positional Jacobian of the paddle center"""
    theta = ValidationUtils.require_shape(theta, (NUM_JOINTS,), "theta")
    axes, origins, pose = _chain_pass(chain, theta)
    jacobian = np.zeros((3, NUM_JOINTS))
    for i, joint in enumerate(chain.joints):
        if joint.joint_type == "prismatic":
            jacobian[:, i] = axes[i]
        else:
            jacobian[:, i] = np.cross(axes[i], pose.position - origins[i])
    return jacobian


@dataclass(frozen=True)
class RobotModel:
    """Chain, limits and the shared ready configuration"""
    chain: KinematicChain
    limits: JointLimits
    ready_theta: np.ndarray = field(repr=False)

    def ready_state(self) -> JointState:
        return JointState(self.ready_theta, np.zeros(NUM_JOINTS), 0.0)


def ready_configuration(types: Tuple[str, ...]) -> np.ndarray:
    return np.array([
        _to_internal(jtype, READY_CONFIGURATION_DEG[name], 100.0)
        for name, jtype in zip(JOINT_ORDER, types)
    ])


def load_robot(path=None) -> RobotModel:
    """Load the robot model from the registry, optionally overridden by a config file"""
    config = load_robot_config(path)
    limits = JointLimits.from_table(config["limits"])
    chain = KinematicChain.from_config(config["chain"])
    ready = ready_configuration(limits.types)
    if not limits.contains(ready):
        raise ConfigError("Ready configuration lies outside the joint limits")
    pose = forward_kinematics(chain, ready)
    logger.debug(f"Robot loaded, ready paddle at {np.round(pose.position, 3).tolist()}")
    return RobotModel(chain=chain, limits=limits, ready_theta=ready)
