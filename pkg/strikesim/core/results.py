"""Per-trial outcomes of the interception simulator"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from strikesim.robot.kinematics import JointState

DEFAULT_PADDLE_RADIUS = 8.0  # cm


@dataclass(frozen=True)
class GoalCommand:
    computed_at: int  # command boundary whose observations produced the goal
    issued_at: int  # timestep the robot starts executing it
    observation_index: int  # newest observation used
    phase: str  # "anticipatory" or "servo"
    goal: Tuple[float, float, float]
    alpha: float
    prediction_row: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "computed_at": self.computed_at,
            "issued_at": self.issued_at,
            "observation_index": self.observation_index,
            "phase": self.phase,
            "goal": list(self.goal),
            "alpha": self.alpha,
            "prediction_row": self.prediction_row,
        }


@dataclass(frozen=True, eq=False)
class TrialResult:
    segment_id: str
    controller_id: str
    hit: bool
    end_distance_to_goal: float  # NaN when the trial failed
    joint_trace: Tuple[JointState, ...] = ()
    goal_trace: Tuple[GoalCommand, ...] = ()
    crossing_time: float = math.nan  # timesteps after the hit
    paddle_radius: float = DEFAULT_PADDLE_RADIUS
    error: Optional[str] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.error is None:
            if not self.end_distance_to_goal >= 0:
                raise ValueError("end_distance_to_goal must be >= 0")
            if self.hit and self.end_distance_to_goal > self.paddle_radius:
                raise ValueError("A hit requires the ball within the paddle radius")
        elif self.hit:
            raise ValueError("Failed trials cannot be hits")
        object.__setattr__(self, "joint_trace", tuple(self.joint_trace))
        object.__setattr__(self, "goal_trace", tuple(self.goal_trace))

    def summary_row(self) -> Dict[str, Any]:
        return {
            "segment_id": self.segment_id,
            "controller_id": self.controller_id,
            "hit": self.hit,
            "end_distance_to_goal": self.end_distance_to_goal,
            "crossing_time": self.crossing_time,
            "commands": len(self.goal_trace),
            "error": self.error or "",
        }


def commands_as_dicts(result: TrialResult) -> List[Dict[str, Any]]:
    return [command.to_dict() for command in result.goal_trace]
