"""
Typed settings for strikesim

Pydantic models for every configurable part of an experiment: the synthetic
generator, the simulator timing, predictors, uncertainty estimators,
controller policies and alpha sweeps. Experiment specs are read from TOML or
JSON files.
"""

import json
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from strikesim.config.robot_registry import canonical_policy_name, get_policy_preset
from strikesim.utils.validation import ConfigError

SPEC_VERSION = "1.0"

PolicyKind = Literal["servo_only", "anticipatory", "uncertainty_aware"]
PredictorKind = Literal["knn", "noisy_oracle", "ensemble"]
EstimatorKind = Literal["knn_error", "ensemble", "conformal", "time_to_hit"]
LatencyModel = Literal["hold", "observation"]


class SimConfig(BaseModel):
    """Timing of the 100 Hz evaluation loop (all values in timesteps unless noted)"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    rate_hz: float = 100.0
    command_period: int = 10
    latency: int = 10
    # hold: goals use observations up to their boundary and are held for one
    # command period, any latency beyond that period delays the issue;
    # observation: estimator inputs lag the boundary by `latency` steps
    latency_model: LatencyModel = "hold"
    servo_start: int = 10
    anticipatory_start: int = -10
    paddle_radius: float = 8.0  # cm
    pre_hit_z_goal: float = 20.0  # cm above the table
    position_gain: Optional[float] = None  # 1/s, defaults to 1 / command period
    continuous_pre_hit_updates: bool = False
    max_post_hit_steps: int = 300

    @field_validator("command_period", "latency", "max_post_hit_steps")
    @classmethod
    def _positive_int(cls, v: int) -> int:
        if v <= 0:
            raise ValueError("periods must be positive integers")
        return v

    @field_validator("paddle_radius", "rate_hz")
    @classmethod
    def _positive(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("must be positive")
        return v

    @model_validator(mode="after")
    def _ordered_phases(self) -> "SimConfig":
        if self.anticipatory_start >= self.servo_start:
            raise ValueError("anticipatory_start must precede servo_start")
        return self

    @property
    def dt(self) -> float:
        return 1.0 / self.rate_hz

    @property
    def command_dt(self) -> float:
        return self.command_period / self.rate_hz

    @property
    def observation_delay(self) -> int:
        """Steps between a command boundary and the newest observation it may use"""
        return self.latency if self.latency_model == "observation" else 0

    @property
    def issue_delay(self) -> int:
        """Steps between computing a goal and the robot executing it"""
        if self.latency_model == "observation":
            return 0
        return max(0, self.latency - self.command_period)

    @property
    def gain(self) -> float:
        return self.position_gain if self.position_gain is not None else 1.0 / self.command_dt


class GeneratorConfig(BaseModel):
    """Synthetic segment generator settings"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    version: str = SPEC_VERSION
    seed: int = 0
    segment_count: int = 2226
    # left / center / right; default mirrors the right-skewed lab distribution
    region_weights: Tuple[float, float, float] = (41.0, 81.0, 101.0)
    predictability: float = 0.8
    gravity: float = 981.0  # cm/s^2
    restitution: float = 0.9
    ball_radius: float = 2.0  # cm
    ball_noise: float = 0.25  # cm, post-hit ball path
    sigma_obs: float = 1.0  # cm, pre-hit pose noise
    swing_amplitude: float = 0.6  # rad
    spin_sigma: float = 0.08  # std of a2 - a1
    pre_hit_frames: int = 40
    ball_speed_range: Tuple[float, float] = (450.0, 650.0)  # cm/s along -y
    bounce_y_range: Tuple[float, float] = (-70.0, -10.0)
    hit_y: float = 150.0
    dropout_rate: float = 0.02
    dropout_threshold: float = 0.2
    filter_window: int = 5
    observe_through_cameras: bool = True
    pixel_noise: float = 0.5
    camera_rig: Optional[str] = None
    split_fractions: Tuple[float, float, float] = (0.7, 0.1, 0.2)  # train / calibration / test
    max_attempts_factor: int = 10

    @field_validator("region_weights")
    @classmethod
    def _weights(cls, v: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(w < 0 for w in v) or sum(v) <= 0:
            raise ValueError("region weights must be >= 0 with positive sum")
        return v

    @field_validator("restitution")
    @classmethod
    def _restitution(cls, v: float) -> float:
        if not 0.0 < v <= 1.0:
            raise ValueError("restitution must lie in (0, 1]")
        return v

    @field_validator("predictability", "dropout_rate", "dropout_threshold")
    @classmethod
    def _unit_interval(cls, v: float) -> float:
        if not 0.0 <= v <= 1.0:
            raise ValueError("must lie in [0, 1]")
        return v

    @field_validator("ball_noise", "sigma_obs", "pixel_noise", "spin_sigma")
    @classmethod
    def _non_negative(cls, v: float) -> float:
        if v < 0:
            raise ValueError("noise scales must be >= 0")
        return v

    @field_validator("segment_count", "pre_hit_frames", "max_attempts_factor")
    @classmethod
    def _count(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be >= 1")
        return v

    @field_validator("filter_window")
    @classmethod
    def _odd_window(cls, v: int) -> int:
        if v < 1 or v % 2 == 0:
            raise ValueError("filter window must be odd and >= 1")
        return v

    @model_validator(mode="after")
    def _consistent(self) -> "GeneratorConfig":
        if self.pre_hit_frames < 31:
            raise ValueError("pre_hit_frames must cover all 30 prediction rows plus the hit frame")
        lo, hi = self.bounce_y_range
        if not -137.0 < lo <= hi < 0.0:
            raise ValueError("bounce_y_range must lie on the robot half of the table")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9 or any(f < 0 for f in self.split_fractions):
            raise ValueError("split fractions must be non-negative and sum to 1")
        return self


class PredictorSpec(BaseModel):
    """Anticipatory predictor definition"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: PredictorKind = "knn"
    k: int = 5
    window: int = 10
    noise_sigma: float = 1.5  # cm of parameter noise per pre-hit row (noisy oracle)
    sigma_schedule: Optional[List[float]] = None
    strike_bias: float = 0.0
    center_pull: float = 0.0
    members: int = 5
    member_kind: Literal["knn", "noisy_oracle"] = "knn"
    seed: int = 0

    @field_validator("k", "window")
    @classmethod
    def _at_least_one(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be >= 1")
        return v

    @field_validator("noise_sigma")
    @classmethod
    def _sigma(cls, v: float) -> float:
        if v < 0:
            raise ValueError("noise sigma must be >= 0")
        return v

    @field_validator("center_pull")
    @classmethod
    def _pull(cls, v: float) -> float:
        if not 0.0 <= v <= 1.0:
            raise ValueError("center_pull must lie in [0, 1]")
        return v

    @model_validator(mode="after")
    def _members(self) -> "PredictorSpec":
        if self.kind == "ensemble" and self.members < 2:
            raise ValueError("ensembles need at least 2 members")
        if self.sigma_schedule is not None:
            if len(self.sigma_schedule) != 30 or any(s < 0 for s in self.sigma_schedule):
                raise ValueError("sigma_schedule needs 30 non-negative entries")
        return self


class UncertaintySpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    estimators: List[EstimatorKind] = Field(
        default_factory=lambda: ["knn_error", "ensemble", "conformal", "time_to_hit"]
    )
    conformal_alpha: float = 0.1
    knn_error_k: int = 10
    kappa: Optional[float] = None
    kappa_floor: float = 1.0  # cm
    ensemble_members: int = 5

    @field_validator("conformal_alpha")
    @classmethod
    def _alpha(cls, v: float) -> float:
        if not 0.0 < v < 1.0:
            raise ValueError("conformal miscoverage must lie in (0, 1)")
        return v


class PolicySpec(BaseModel):
    """Controller policy: which gating rule and which speeds"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    kind: PolicyKind
    alpha_1: float = 0.0
    alpha_2: float = 0.0
    alpha_mode: Literal["constant", "proportional"] = "constant"
    estimator: Optional[EstimatorKind] = None

    @field_validator("kind", mode="before")
    @classmethod
    def _alias(cls, v: str) -> str:
        return canonical_policy_name(v)

    @field_validator("alpha_1", "alpha_2")
    @classmethod
    def _alpha(cls, v: float) -> float:
        if not 0.0 <= v <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        return v

    @model_validator(mode="after")
    def _estimator(self) -> "PolicySpec":
        if self.alpha_mode == "proportional" and self.estimator is None:
            raise ValueError("proportional alpha needs an uncertainty estimator")
        return self

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "PolicySpec":
        kind = canonical_policy_name(name)
        preset = get_policy_preset(kind)
        fields = {"name": kind, "kind": kind,
                  "alpha_1": preset["alpha_1"], "alpha_2": preset["alpha_2"]}
        fields.update(overrides)
        return cls(**fields)


def default_policies() -> List[PolicySpec]:
    return [PolicySpec.from_preset(name) for name in ("servo_only", "anticipatory", "uncertainty_aware")]


class SweepSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    policy: PolicyKind = "uncertainty_aware"
    alpha_1_grid: List[float] = Field(default_factory=lambda: [0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
    alpha_2_grid: List[float] = Field(default_factory=lambda: [0.0, 0.2, 0.4, 0.6, 0.8, 1.0])

    @field_validator("policy", mode="before")
    @classmethod
    def _alias(cls, v: str) -> str:
        return canonical_policy_name(v)

    @field_validator("alpha_1_grid", "alpha_2_grid")
    @classmethod
    def _grid(cls, v: List[float]) -> List[float]:
        if not v or any(not 0.0 <= a <= 1.0 for a in v):
            raise ValueError("alpha grids must be non-empty with values in [0, 1]")
        return v


class ExperimentSpec(BaseModel):
    """Everything one reproducible experiment needs"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    version: str = SPEC_VERSION
    seed: int
    dataset: GeneratorConfig = Field(default_factory=GeneratorConfig)
    dataset_path: Optional[str] = None
    predictor: PredictorSpec = Field(default_factory=PredictorSpec)
    uncertainty: UncertaintySpec = Field(default_factory=UncertaintySpec)
    policies: List[PolicySpec] = Field(default_factory=default_policies)
    sweep: SweepSpec = Field(default_factory=SweepSpec)
    sim: SimConfig = Field(default_factory=SimConfig)
    robot_config: Optional[str] = None
    output_dir: str = "runs/default"
    jobs: int = 1

    @field_validator("seed")
    @classmethod
    def _seed(cls, v: int) -> int:
        if not 0 <= v < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        return v

    @field_validator("jobs")
    @classmethod
    def _jobs(cls, v: int) -> int:
        if v < 1:
            raise ValueError("jobs must be >= 1")
        return v


def load_experiment_spec(path: Optional[Union[str, Path]] = None, **overrides) -> ExperimentSpec:
    """
    Load an experiment spec from TOML/JSON, applying keyword overrides

    Args:
        path: Spec file; None starts from defaults
        overrides: Top-level fields replacing file values (None values ignored)

    Returns:
        ExperimentSpec: Validated spec
    """
    data = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Experiment config not found: {path}")
        try:
            if path.suffix == ".toml":
                with path.open("rb") as fh:
                    data = tomllib.load(fh)
            else:
                data = json.loads(path.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"Failed to parse {path}: {e}") from e

    if "jobs" not in data and os.getenv("STRIKESIM_JOBS"):
        data["jobs"] = int(os.environ["STRIKESIM_JOBS"])
    data.update({key: value for key, value in overrides.items() if value is not None})
    if "seed" in data and "dataset" in data and "seed" not in data["dataset"]:
        data["dataset"] = {**data["dataset"], "seed": data["seed"]}
    elif "seed" in data and "dataset" not in data:
        data["dataset"] = {"seed": data["seed"]}
    if data.get("version", SPEC_VERSION) != SPEC_VERSION:
        raise ConfigError(f"Unsupported experiment spec version: {data.get('version')}")
    return ExperimentSpec(**data)
