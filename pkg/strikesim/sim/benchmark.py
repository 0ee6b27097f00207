"""
Benchmark and alpha sweeps over a set of segments

Every policy sees the same segments, predictions and confidences. Trials are
independent and may run in worker processes; results are always ordered by
segment id so output does not depend on the number of jobs.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from strikesim.config.settings import PolicySpec, SimConfig
from strikesim.core.metrics import MetricsTable, aggregate_metrics
from strikesim.core.results import TrialResult
from strikesim.core.segment import Segment
from strikesim.models.predictors import PredictionMatrix
from strikesim.robot.controller import WorkspaceController
from strikesim.robot.kinematics import RobotModel
from strikesim.sim.simulator import ControllerPolicy, failed_trial, run_trial
from strikesim.utils.validation import ConfigError, InsufficientSamplesError, StrikeSimError

logger = logging.getLogger(__name__)

PolicyLike = Union[PolicySpec, ControllerPolicy]
Confidences = Mapping[str, Mapping[str, np.ndarray]]  # estimator -> segment id -> per-row confidence


@dataclass
class PolicyRun:
    policy: ControllerPolicy
    results: List[TrialResult]
    metrics: MetricsTable

    @property
    def hits(self) -> int:
        return int(sum(r.hit for r in self.results))

    @property
    def failures(self) -> int:
        return int(sum(r.error is not None for r in self.results))

    def mean_end_distance(self) -> float:
        distances = [r.end_distance_to_goal for r in self.results if r.error is None]
        return float(np.mean(distances)) if distances else math.nan


def _as_policy(policy: PolicyLike) -> ControllerPolicy:
    return policy if isinstance(policy, ControllerPolicy) else ControllerPolicy.from_spec(policy)


def _trial_task(args) -> TrialResult:
    segment, policy, robot, config, prediction, confidence = args
    controller = WorkspaceController(robot, config.gain, config.command_dt)
    try:
        return run_trial(segment, policy, controller, config, prediction, confidence)
    except StrikeSimError as e:
        logger.error(f"Trial {segment.segment_id} [{policy.name}] failed: {e}")
        return failed_trial(segment.segment_id, policy, e, config.paddle_radius)


def _confidence_for(policy: ControllerPolicy, segment_id: str,
                    confidences: Optional[Confidences]) -> Optional[np.ndarray]:
    if policy.estimator is None:
        return None
    if confidences is None or policy.estimator not in confidences:
        if policy.proportional:
            raise ConfigError(f"Policy {policy.name} needs confidences from {policy.estimator}")
        return None
    return confidences[policy.estimator][segment_id]


def _run_trials(tasks: List[tuple], jobs: int) -> List[TrialResult]:
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            return list(executor.map(_trial_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    return [_trial_task(t) for t in tasks]


def _policy_tasks(segments: Sequence[Segment], policy: ControllerPolicy, robot: RobotModel,
                  config: SimConfig, predictions: Optional[Mapping[str, PredictionMatrix]],
                  confidences: Optional[Confidences]) -> List[tuple]:
    if policy.anticipates and predictions is None:
        raise ConfigError(f"Policy {policy.name} needs predictions")
    return [
        (s, policy, robot, config,
         predictions[s.segment_id] if policy.anticipates else None,
         _confidence_for(policy, s.segment_id, confidences))
        for s in segments
    ]


def run_benchmark(segments: Sequence[Segment], policies: Sequence[PolicyLike], robot: RobotModel,
                  config: SimConfig, predictions: Optional[Mapping[str, PredictionMatrix]] = None,
                  confidences: Optional[Confidences] = None, jobs: int = 1) -> Dict[str, PolicyRun]:
    """
    Run every policy on every segment

    Args:
        segments: Benchmark segments
        policies: Policies to compare
        robot: Robot model shared by all policies
        config: Simulator timing
        predictions: Anticipatory prediction per segment id
        confidences: Per-estimator, per-segment confidences
        jobs: Worker processes

    Returns:
        Dict: Policy name to its trial results and metrics table
    """
    if not segments:
        raise InsufficientSamplesError("Benchmark needs at least one segment")
    if not policies:
        raise ConfigError("Benchmark needs at least one policy")
    ordered = sorted(segments, key=lambda s: s.segment_id)
    regions = {s.segment_id: s.region for s in ordered}

    runs: Dict[str, PolicyRun] = {}
    for spec in policies:
        policy = _as_policy(spec)
        if policy.name in runs:
            raise ConfigError(f"Duplicate policy name {policy.name!r}")
        results = _run_trials(_policy_tasks(ordered, policy, robot, config, predictions, confidences), jobs)
        run = PolicyRun(policy, results, aggregate_metrics(results, regions))
        runs[policy.name] = run
        logger.info(
            f"Policy {policy.name}: {run.hits}/{len(results)} hits, "
            f"mean end distance {run.mean_end_distance():.2f} cm, {run.failures} failed trials"
        )
    return runs


def trials_frame(runs: Mapping[str, PolicyRun]) -> pd.DataFrame:
    """Per-trial rows for every policy, ordered by policy then segment id"""
    rows = [r.summary_row() for name in runs for r in runs[name].results]
    return pd.DataFrame(rows, columns=["segment_id", "controller_id", "hit", "end_distance_to_goal",
                                       "crossing_time", "commands", "error"])


@dataclass
class SweepResult:
    best: Tuple[float, float]
    grid: pd.DataFrame  # alpha_1, alpha_2, total, hits, mean_end_distance

    def best_row(self) -> Dict:
        a1, a2 = self.best
        match = self.grid[(self.grid["alpha_1"] == a1) & (self.grid["alpha_2"] == a2)]
        return match.iloc[0].to_dict()


def select_best_cell(grid: pd.DataFrame) -> Tuple[float, float]:
    """Most hits, then lower mean end distance (NaN last), then lower alpha_1, then lower alpha_2"""
    ranked = grid.sort_values(
        ["hits", "mean_end_distance", "alpha_1", "alpha_2"],
        ascending=[False, True, True, True],
        na_position="last",
        kind="mergesort",
    )
    top = ranked.iloc[0]
    return float(top["alpha_1"]), float(top["alpha_2"])


def sweep_alphas(segments: Sequence[Segment], template: PolicyLike, alpha_1_grid: Sequence[float],
                 alpha_2_grid: Sequence[float], robot: RobotModel, config: SimConfig,
                 predictions: Optional[Mapping[str, PredictionMatrix]] = None,
                 confidences: Optional[Confidences] = None, jobs: int = 1) -> SweepResult:
    """
    Exhaustive (alpha_1, alpha_2) grid search on a calibration set

    Args:
        segments: Calibration segments
        template: Policy whose speeds are swept
        alpha_1_grid, alpha_2_grid: Candidate speeds in [0, 1]

    Returns:
        SweepResult: Selected cell and the full grid
    """
    if not segments:
        raise InsufficientSamplesError("Alpha sweep needs a non-empty calibration set")
    if not alpha_1_grid or not alpha_2_grid:
        raise ConfigError("Alpha grids must be non-empty")
    if any(not 0.0 <= a <= 1.0 for a in list(alpha_1_grid) + list(alpha_2_grid)):
        raise ConfigError("Alpha grid values must lie in [0, 1]")
    base = _as_policy(template)
    ordered = sorted(segments, key=lambda s: s.segment_id)

    cells = [(float(a1), float(a2)) for a1 in alpha_1_grid for a2 in alpha_2_grid]
    tasks, spans = [], []
    for a1, a2 in cells:
        policy = ControllerPolicy(f"{base.name}[{a1:g},{a2:g}]", base.kind, a1, a2, base.proportional, base.estimator)
        cell_tasks = _policy_tasks(ordered, policy, robot, config, predictions, confidences)
        spans.append((len(tasks), len(tasks) + len(cell_tasks)))
        tasks.extend(cell_tasks)
    results = _run_trials(tasks, jobs)

    rows = []
    for (a1, a2), (start, stop) in zip(cells, spans):
        cell = results[start:stop]
        distances = [r.end_distance_to_goal for r in cell if r.error is None]
        rows.append({
            "alpha_1": a1,
            "alpha_2": a2,
            "total": len(cell),
            "hits": int(sum(r.hit for r in cell)),
            "mean_end_distance": float(np.mean(distances)) if distances else math.nan,
        })
    grid = pd.DataFrame(rows, columns=["alpha_1", "alpha_2", "total", "hits", "mean_end_distance"])
    best = select_best_cell(grid)
    logger.info(f"Sweep over {len(cells)} cells selected alpha_1={best[0]:g}, alpha_2={best[1]:g}")
    return SweepResult(best, grid)
