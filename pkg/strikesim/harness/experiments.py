"""
Experiment commands: generate, fit, benchmark, diagnose and sweep

Each command is a function of an ExperimentSpec. Outputs go under
spec.output_dir and carry provenance (config hash, seed, versions), so a
rerun with the same spec writes the same bytes.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from strikesim.config.settings import ExperimentSpec, PolicySpec
from strikesim.core.metrics import median_strike_errors
from strikesim.core.segment import Segment
from strikesim.models.model_manager import PredictorManager
from strikesim.models.predictors import NUM_ROWS, BasePredictor, EnsemblePredictor, PredictionMatrix
from strikesim.robot.kinematics import load_robot
from strikesim.sim.benchmark import PolicyRun, SweepResult, run_benchmark, sweep_alphas, trials_frame
from strikesim.simgen.dataset import Dataset, generate_dataset, load_dataset, save_dataset
from strikesim.uncertainty.diagnostics import DiagnosticsAccumulator, strike_error_table
from strikesim.uncertainty.estimators import UncertaintySuite, strike_errors
from strikesim.utils.io_utils import provenance, write_csv, write_json
from strikesim.utils.validation import ConfigError, InsufficientSamplesError, ValidationUtils

logger = logging.getLogger(__name__)

PREDICTOR_KEY = "anticipatory"


@dataclass
class FittedModels:
    predictor: BasePredictor
    suite: UncertaintySuite


def _out(spec: ExperimentSpec, *parts: str) -> Path:
    return Path(spec.output_dir).joinpath(*parts)


def _provenance(spec: ExperimentSpec) -> Dict[str, Any]:
    return provenance(spec, spec.seed)


def validate_spec(spec: ExperimentSpec, command: str) -> None:
    """Run the pre-flight checks for a command, raising ConfigError on failure"""
    parameters: Dict[str, Any] = {"seed": spec.seed, "region_weights": list(spec.dataset.region_weights)}
    if command == "benchmark":
        parameters["policies"] = [p.kind for p in spec.policies]
    if command in ("diagnose", "fit"):
        parameters["estimators"] = list(spec.uncertainty.estimators)
    if command == "sweep":
        parameters["alpha_grid"] = list(spec.sweep.alpha_1_grid) + list(spec.sweep.alpha_2_grid)
    result = ValidationUtils().validate_experiment_parameters(parameters)
    for warning in result["warnings"]:
        logger.warning(warning)
    if not result["valid"]:
        raise ConfigError("; ".join(result["errors"]))


def resolve_dataset(spec: ExperimentSpec) -> Dataset:
    """Load spec.dataset_path, or generate the configured dataset in memory"""
    if spec.dataset_path is not None:
        path = Path(spec.dataset_path)
        if not path.exists():
            raise ConfigError(f"Dataset path does not exist: {path}")
        return load_dataset(path)
    return generate_dataset(spec.dataset, jobs=spec.jobs)


def cmd_generate(spec: ExperimentSpec) -> Dataset:
    """Generate the dataset and write it with its manifest"""
    validate_spec(spec, "generate")
    dataset = generate_dataset(spec.dataset, jobs=spec.jobs)
    target = Path(spec.dataset_path) if spec.dataset_path is not None else _out(spec, "dataset")
    save_dataset(dataset, target, _provenance(spec))
    return dataset


def _ensemble_for(spec: ExperimentSpec, predictor: BasePredictor, manager: PredictorManager,
                  train: Sequence[Segment]) -> EnsemblePredictor:
    if isinstance(predictor, EnsemblePredictor):
        return predictor
    members = spec.uncertainty.ensemble_members
    member_kind = "noisy_oracle" if spec.predictor.kind == "noisy_oracle" else "knn"
    ensemble_spec = spec.predictor.model_copy(update={"kind": "ensemble", "members": members,
                                                      "member_kind": member_kind})
    return manager.build(ensemble_spec, train)


def fit_models(spec: ExperimentSpec, dataset: Dataset, manager: Optional[PredictorManager] = None) -> FittedModels:
    """Fit the predictor on train and the uncertainty estimators on calibration"""
    manager = manager or PredictorManager()
    train = dataset.split("train")
    calibration = dataset.split("calibration")
    if not calibration:
        raise InsufficientSamplesError("The dataset has no calibration split")
    predictor = manager.fit(PREDICTOR_KEY, spec.predictor, train)
    cal_predictions = predictor.predict_segments(calibration)

    estimators = list(spec.uncertainty.estimators)
    ensemble = _ensemble_for(spec, predictor, manager, train) if "ensemble" in estimators else None
    suite = UncertaintySuite(estimators).fit(
        calibration,
        cal_predictions,
        conformal_alpha=spec.uncertainty.conformal_alpha,
        knn_k=spec.uncertainty.knn_error_k,
        window=spec.predictor.window,
        ensemble=ensemble,
        kappa=spec.uncertainty.kappa,
        kappa_floor=spec.uncertainty.kappa_floor,
    )
    return FittedModels(predictor, suite)


def cmd_fit(spec: ExperimentSpec, dataset: Optional[Dataset] = None) -> FittedModels:
    """Fit predictor and estimators and persist them as JSON artifacts"""
    validate_spec(spec, "fit")
    dataset = dataset if dataset is not None else resolve_dataset(spec)
    manager = PredictorManager()
    models = fit_models(spec, dataset, manager)
    info = _provenance(spec)
    manager.save(PREDICTOR_KEY, _out(spec, "models", "predictor.json"), info)
    write_json(_out(spec, "models", "uncertainty.json"), models.suite.to_dict(), info)
    return models


def _confidences(models: Optional[FittedModels], estimators: Sequence[str], segments: Sequence[Segment],
                 predictions: Dict[str, PredictionMatrix]) -> Dict[str, Dict[str, np.ndarray]]:
    if models is None:
        return {}
    return {e: models.suite.confidences(e, segments, predictions) for e in estimators}


def _policy_estimators(policies: Sequence[PolicySpec]) -> List[str]:
    return sorted({p.estimator for p in policies if p.estimator is not None})


def cmd_benchmark(spec: ExperimentSpec, dataset: Optional[Dataset] = None) -> Dict[str, PolicyRun]:
    """
    Run every configured policy on the test split

    Writes benchmark/trials.csv (one row per policy and segment),
    benchmark/metrics.json and one benchmark/table_<policy>.csv per policy
    in the Total / # hit / End dist. to goal layout.
    """
    if not spec.policies:
        raise ConfigError("No policies configured")
    validate_spec(spec, "benchmark")
    dataset = dataset if dataset is not None else resolve_dataset(spec)
    test = dataset.split("test")
    if not test:
        raise InsufficientSamplesError("The dataset has no test split")

    needs_prediction = any(p.kind != "servo_only" for p in spec.policies)
    models = fit_models(spec, dataset) if needs_prediction else None
    predictions = models.predictor.predict_segments(test) if models else None
    confidences = _confidences(models, _policy_estimators(spec.policies), test, predictions)

    robot = load_robot(spec.robot_config)
    runs = run_benchmark(test, spec.policies, robot, spec.sim, predictions, confidences, spec.jobs)

    info = _provenance(spec)
    write_csv(_out(spec, "benchmark", "trials.csv"), trials_frame(runs), info)
    write_json(_out(spec, "benchmark", "metrics.json"),
               {name: run.metrics.to_dict() for name, run in runs.items()}, info)
    for name, run in runs.items():
        table = run.metrics.formatted().reset_index().rename(columns={"index": "region"})
        write_csv(_out(spec, "benchmark", f"table_{name}.csv"), table, info)
    return runs


def _conformal_summary(models: FittedModels, test: Sequence[Segment],
                       predictions: Dict[str, PredictionMatrix]) -> Dict[str, Any]:
    errors = np.stack([strike_errors(predictions[s.segment_id], s) for s in test])
    widths = np.array([models.suite.conformal[r].quantile for r in range(NUM_ROWS)])
    return {
        "half_width": widths.tolist(),
        "coverage": (errors <= widths[None, :]).mean(axis=0).tolist(),
    }


def cmd_diagnose(spec: ExperimentSpec, dataset: Optional[Dataset] = None) -> Dict[str, Any]:
    """
    Confidence-versus-error diagnostics on the test split

    Writes diagnostics/confidence_<estimator>.csv per estimator,
    diagnostics/median_error_by_frame.csv and diagnostics/summary.json.
    """
    if not spec.uncertainty.estimators:
        raise ConfigError("No uncertainty estimators configured")
    validate_spec(spec, "diagnose")
    dataset = dataset if dataset is not None else resolve_dataset(spec)
    test = dataset.split("test")
    if len(test) < 1:
        raise InsufficientSamplesError("The dataset has no test split")
    models = fit_models(spec, dataset)
    predictions = models.predictor.predict_segments(test)
    info = _provenance(spec)

    reports = {}
    for estimator in spec.uncertainty.estimators:
        accumulator = DiagnosticsAccumulator(estimator)
        accumulator.add_segments(test, predictions, models.suite.confidences(estimator, test, predictions))
        report = accumulator.report()
        write_csv(_out(spec, "diagnostics", f"confidence_{estimator}.csv"), report.scatter, info)
        reports[estimator] = report.to_dict()

    errors = strike_error_table(test, predictions)
    medians = median_strike_errors(errors, {s.segment_id: s.region for s in test})
    write_csv(_out(spec, "diagnostics", "median_error_by_frame.csv"), medians.reset_index(), info)

    summary: Dict[str, Any] = {"estimators": reports, "test_segments": len(test)}
    if "conformal" in spec.uncertainty.estimators:
        summary["conformal"] = _conformal_summary(models, test, predictions)
    if models.suite.kappa is not None:
        summary["kappa"] = models.suite.kappa
    write_json(_out(spec, "diagnostics", "summary.json"), summary, info)
    return {"summary": summary, "median_errors": medians}


def _sweep_template(spec: ExperimentSpec) -> PolicySpec:
    for policy in spec.policies:
        if policy.kind == spec.sweep.policy:
            return policy
    return PolicySpec.from_preset(spec.sweep.policy)


def cmd_sweep(spec: ExperimentSpec, dataset: Optional[Dataset] = None) -> SweepResult:
    """Grid search of (alpha_1, alpha_2) on the calibration split"""
    validate_spec(spec, "sweep")
    dataset = dataset if dataset is not None else resolve_dataset(spec)
    calibration = dataset.split("calibration")
    if not calibration:
        raise InsufficientSamplesError("The dataset has no calibration split")
    template = _sweep_template(spec)
    models = fit_models(spec, dataset)
    predictions = models.predictor.predict_segments(calibration)
    confidences = _confidences(models, _policy_estimators([template]), calibration, predictions)

    robot = load_robot(spec.robot_config)
    result = sweep_alphas(calibration, template, spec.sweep.alpha_1_grid, spec.sweep.alpha_2_grid,
                          robot, spec.sim, predictions, confidences, spec.jobs)

    info = _provenance(spec)
    write_csv(_out(spec, "sweep", "grid.csv"), result.grid, info)
    write_json(_out(spec, "sweep", "best.json"),
               {"policy": template.name, "alpha_1": result.best[0], "alpha_2": result.best[1],
                "cell": result.best_row()}, info)
    return result


COMMANDS = {
    "generate": cmd_generate,
    "fit": cmd_fit,
    "benchmark": cmd_benchmark,
    "diagnose": cmd_diagnose,
    "sweep": cmd_sweep,
}
