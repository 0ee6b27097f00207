"""
Robot and Policy Registry for strikesim

Effective joint limits of the KUKA LBR iiwa 14 R820 mounted on a Ridgeback
base, the nominal chain geometry used for kinematics, the shared ready
configuration, and the controller presets used by the benchmark tables.
Values are stored in the units of the source tables (metres / degrees) and
converted by the robot package on load.
"""

import copy
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from strikesim.utils.validation import ConfigError

ROBOT_CONFIG_VERSION = "1.0"

# Effective joint limits, verbatim.
# prismatic: position m, acceleration m/s^2, velocity m/s
# revolute: position deg, acceleration deg/s^2, velocity deg/s
JOINT_LIMITS_TABLE: Dict[str, Dict[str, Any]] = {
    "X1": {"type": "prismatic", "position": 1.0, "acceleration": 15.0, "velocity": 1.1},
    "Y1": {"type": "prismatic", "position": 1.0, "acceleration": 15.0, "velocity": 1.1},
    "A1": {"type": "revolute", "position": 170.0, "acceleration": 3.69e3, "velocity": 85.0},
    "A2": {"type": "revolute", "position": 120.0, "acceleration": 3.47e3, "velocity": 85.0},
    "A3": {"type": "revolute", "position": 170.0, "acceleration": 7.42e3, "velocity": 100.0},
    "A4": {"type": "revolute", "position": 120.0, "acceleration": 1.37e4, "velocity": 75.0},
    "A5": {"type": "revolute", "position": 170.0, "acceleration": 3.79e4, "velocity": 130.0},
    "A6": {"type": "revolute", "position": 120.0, "acceleration": 3.81e5, "velocity": 135.0},
    "A7": {"type": "revolute", "position": 175.0, "acceleration": 5.72e5, "velocity": 135.0},
}

JOINT_ORDER: List[str] = ["X1", "Y1", "A1", "A2", "A3", "A4", "A5", "A6", "A7"]

# Nominal LBR iiwa 14 link offsets (cm) between consecutive joint frames.
# Bending joints rotate about x so the arm reaches towards +y (the opponent).
CHAIN_GEOMETRY: Dict[str, Any] = {
    "version": ROBOT_CONFIG_VERSION,
    "base_mount_cm": [0.0, -210.0, -58.0],
    "joints": [
        {"name": "X1", "type": "prismatic", "axis": [1.0, 0.0, 0.0], "offset_cm": [0.0, 0.0, 0.0]},
        {"name": "Y1", "type": "prismatic", "axis": [0.0, 1.0, 0.0], "offset_cm": [0.0, 0.0, 0.0]},
        {"name": "A1", "type": "revolute", "axis": [0.0, 0.0, 1.0], "offset_cm": [0.0, 0.0, 0.0]},
        {"name": "A2", "type": "revolute", "axis": [1.0, 0.0, 0.0], "offset_cm": [0.0, 0.0, 36.0]},
        {"name": "A3", "type": "revolute", "axis": [0.0, 0.0, 1.0], "offset_cm": [0.0, 0.0, 20.45]},
        {"name": "A4", "type": "revolute", "axis": [1.0, 0.0, 0.0], "offset_cm": [0.0, 0.0, 21.55]},
        {"name": "A5", "type": "revolute", "axis": [0.0, 0.0, 1.0], "offset_cm": [0.0, 0.0, 18.45]},
        {"name": "A6", "type": "revolute", "axis": [1.0, 0.0, 0.0], "offset_cm": [0.0, 0.0, 21.55]},
        {"name": "A7", "type": "revolute", "axis": [0.0, 0.0, 1.0], "offset_cm": [0.0, 0.0, 8.1]},
    ],
    # flange (4.5 cm) + paddle handle to paddle center (17.4 cm)
    "tool_offset_cm": [0.0, 0.0, 21.9],
    "paddle_normal_local": [0.0, 0.0, 1.0],
}

# Home pose at the zero configuration, fixed by CHAIN_GEOMETRY.
HOME_PADDLE_POSITION_CM = [0.0, -210.0, 90.0]
HOME_PADDLE_NORMAL = [0.0, 0.0, 1.0]

# Ready pose shared by every policy: paddle at (0, -140, 20) facing +y.
READY_CONFIGURATION_DEG: Dict[str, float] = {
    "X1": 0.0, "Y1": 0.0, "A1": 0.0, "A2": 0.0, "A3": 0.0,
    "A4": -90.0, "A5": 0.0, "A6": 0.0, "A7": 0.0,
}
READY_PADDLE_POSITION_CM = [0.0, -140.0, 20.0]

# Controller presets (alpha_1 at t=-10, alpha_2 at t=0)
POLICY_PRESETS: Dict[str, Dict[str, Any]] = {
    "servo_only": {
        "alpha_1": 0.0,
        "alpha_2": 0.0,
        "description": "Baseline visual servoing controller",
    },
    "anticipatory": {
        "alpha_1": 1.0,
        "alpha_2": 1.0,
        "description": "Basic anticipatory controller",
    },
    "uncertainty_aware": {
        "alpha_1": 0.6,
        "alpha_2": 1.0,
        "description": "Uncertainty-aware anticipatory controller, center-gated",
    },
}

POLICY_ALIASES: Dict[str, str] = {
    "baseline": "servo_only",
    "basic_anticipatory": "anticipatory",
}


def canonical_policy_name(name: str) -> str:
    """Map policy aliases onto the canonical preset names"""
    return POLICY_ALIASES.get(name, name)


def get_joint_limits_table() -> Dict[str, Dict[str, Any]]:
    return copy.deepcopy(JOINT_LIMITS_TABLE)


def get_chain_geometry() -> Dict[str, Any]:
    return copy.deepcopy(CHAIN_GEOMETRY)


def get_policy_preset(name: str) -> Dict[str, Any]:
    """
    Get a controller preset by name

    Args:
        name: Preset name or alias

    Returns:
        Dict: Preset with alpha_1, alpha_2 and description
    """
    key = canonical_policy_name(name)
    if key not in POLICY_PRESETS:
        raise ConfigError(f"Unknown policy preset: {name}")
    return dict(POLICY_PRESETS[key])


def get_available_presets() -> Dict[str, Any]:
    """Get all presets with their count"""
    return {
        "presets": copy.deepcopy(POLICY_PRESETS),
        "aliases": dict(POLICY_ALIASES),
        "count": len(POLICY_PRESETS),
    }


def load_robot_config(path: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
    """
    Load joint limits and chain geometry, optionally overridden by a file

    Args:
        path: JSON or TOML file with optional `limits` and `chain` sections
            and a mandatory `version`

    Returns:
        Dict: {"version", "limits", "chain"} with registry defaults filled in
    """
    config = {
        "version": ROBOT_CONFIG_VERSION,
        "limits": get_joint_limits_table(),
        "chain": get_chain_geometry(),
    }
    if path is None:
        return config

    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Robot config not found: {path}")
    try:
        if path.suffix == ".toml":
            with path.open("rb") as fh:
                data = tomllib.load(fh)
        else:
            data = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"Failed to parse robot config {path}: {e}") from e

    if data.get("version") != ROBOT_CONFIG_VERSION:
        raise ConfigError(
            f"Robot config {path} has version {data.get('version')!r}, expected {ROBOT_CONFIG_VERSION!r}"
        )
    for name, limits in data.get("limits", {}).items():
        if name not in config["limits"]:
            raise ConfigError(f"Unknown joint in robot config: {name}")
        config["limits"][name].update(limits)
    if "chain" in data:
        config["chain"].update(data["chain"])
    return config
