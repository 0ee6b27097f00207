"""
Confidence proxies for anticipatory predictions

Four estimators, each reporting a raw uncertainty in cm and a confidence on a
common scale, plus the mapping from confidence and predicted region to the
controller speed alpha.

- knn_error: kNN regression of the absolute strike error from the inputs
- ensemble: spread of the member strike points
- conformal: split-conformal interval half-width
- time_to_hit: confidence decaying with the prediction horizon
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from strikesim.config.robot_registry import canonical_policy_name
from strikesim.core.frames import STRIKE_PLANE_Y, Region, classify_region
from strikesim.core.segment import Segment
from strikesim.models.predictors import NUM_ROWS, EnsemblePredictor, PredictionMatrix, WindowedKnnModel
from strikesim.utils.validation import ConfigError, InsufficientSamplesError

logger = logging.getLogger(__name__)

PHASE_PRE_HIT = "pre_hit"
PHASE_AT_HIT = "at_hit"


def confidence_from_uncertainty(uncertainty):
    """Squash a non-negative uncertainty (cm) to (0, 1]"""
    u = np.asarray(uncertainty, dtype=float)
    c = 1.0 / (1.0 + u)
    return float(c) if c.ndim == 0 else c


@dataclass(frozen=True)
class ConfidenceReport:
    estimator: str
    confidence: float
    uncertainty: float  # cm
    half_width: Optional[float] = None  # cm

    def __post_init__(self):
        if not math.isfinite(self.confidence):
            raise ValueError("confidence must be finite")
        if self.half_width is not None and not self.half_width >= 0:
            raise ValueError("interval half-width must be >= 0")


def strike_errors(prediction: PredictionMatrix, segment: Segment) -> np.ndarray:
    """Absolute strike x error per row"""
    return np.abs(prediction.strike_points() - segment.strike_point[0])


class KnnErrorModel:
    """Per-row kNN regression of |strike error| from the pre-hit window"""

    def __init__(self, k: int = 10, window: int = 10):
        self.model = WindowedKnnModel(k, window)

    def fit(self, segments: Sequence[Segment], predictions: Dict[str, PredictionMatrix]) -> "KnnErrorModel":
        errors = np.stack([strike_errors(predictions[s.segment_id], s) for s in segments]) \
            if segments else np.empty((0, NUM_ROWS))
        self.model.fit([s.pre_hit_matrix() for s in segments], errors)
        logger.info(f"kNN error model fit on {len(segments)} segments (k={self.model.k})")
        return self

    def fit_features(self, series: Sequence[np.ndarray], abs_errors) -> "KnnErrorModel":
        """Fit from raw series and an n x 30 (or n,) error array"""
        abs_errors = np.asarray(abs_errors, dtype=float)
        if abs_errors.ndim == 1:
            abs_errors = np.tile(abs_errors[:, None], (1, NUM_ROWS))
        self.model.fit(list(series), abs_errors)
        return self

    def to_dict(self) -> Dict[str, Any]:
        return self.model.to_dict()

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "KnnErrorModel":
        model = cls()
        model.model = WindowedKnnModel.from_dict(data)
        return model


def knn_error_estimate(error_model: KnnErrorModel, X) -> np.ndarray:
    """Predicted mean absolute strike error (cm) for each of the 30 rows"""
    return error_model.model.predict_batch([X])[0]


def member_strike_points(member_outputs: Sequence[PredictionMatrix]) -> np.ndarray:
    return np.stack([m.strike_points() for m in member_outputs])


def ensemble_uncertainty(member_outputs: Sequence[PredictionMatrix]) -> np.ndarray:
    """Population std of the member strike points, per row (cm)"""
    if len(member_outputs) < 2:
        raise ConfigError("Ensemble uncertainty needs at least 2 members")
    return member_strike_points(member_outputs).std(axis=0, ddof=0)


@dataclass(frozen=True, eq=False)
class ConformalCalibration:
    scores: np.ndarray  # sorted ascending, |strike error| in cm
    alpha: float

    def __post_init__(self):
        scores = np.sort(np.asarray(self.scores, dtype=float).reshape(-1))
        if scores.size == 0:
            raise InsufficientSamplesError("Conformal calibration needs at least one score")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"Conformal miscoverage must lie in (0, 1), got {self.alpha}")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)

    @property
    def quantile(self) -> float:
        """The ceil((n+1)(1-alpha))-th smallest score, +inf past n"""
        n = self.scores.size
        index = math.ceil(round((n + 1) * (1.0 - self.alpha), 9))
        return math.inf if index > n else float(self.scores[index - 1])

    def to_dict(self) -> Dict[str, Any]:
        return {"alpha": self.alpha, "scores": self.scores.tolist()}


def conformal_interval(calibration: ConformalCalibration, point_prediction: float) -> Tuple[float, float]:
    q = calibration.quantile
    return (point_prediction - q, point_prediction + q)


def calibrate_conformal(segments: Sequence[Segment], predictions: Dict[str, PredictionMatrix],
                        alpha: float) -> Dict[int, ConformalCalibration]:
    """One split-conformal calibration per prediction row"""
    if not segments:
        raise InsufficientSamplesError("Conformal calibration needs a non-empty calibration split")
    errors = np.stack([strike_errors(predictions[s.segment_id], s) for s in segments])
    return {row: ConformalCalibration(errors[:, row], alpha) for row in range(NUM_ROWS)}


def time_to_hit_confidence(pre_hit_timestep, kappa: float):
    """c(i) = 1 / (1 + kappa * i); c(0) = 1"""
    i = np.asarray(pre_hit_timestep, dtype=float)
    if np.any(i < 0):
        raise ValueError("Pre-hit timestep must be >= 0")
    if kappa < 0:
        raise ConfigError("kappa must be >= 0")
    c = 1.0 / (1.0 + kappa * i)
    return float(c) if c.ndim == 0 else c


def fit_time_to_hit_kappa(median_errors: Sequence[float], rows: Optional[Sequence[int]] = None,
                          floor: float = 1.0) -> float:
    """
    Calibrate kappa from a median-error-versus-horizon line

    With median error ~ e0 + s*i, kappa = s / max(e0, floor) so that
    1/c(i) - 1 is proportional to the excess error over the zero-horizon
    error.
    """
    errors = np.asarray(median_errors, dtype=float)
    rows = np.arange(errors.size) if rows is None else np.asarray(rows, dtype=float)
    if errors.size < 2:
        raise InsufficientSamplesError("kappa calibration needs at least two horizons")
    fit = stats.linregress(rows, errors)
    kappa = max(fit.slope, 0.0) / max(fit.intercept, floor)
    logger.info(f"time-to-hit kappa={kappa:.4f} (slope={fit.slope:.3f}, intercept={fit.intercept:.3f}, r={fit.rvalue:.3f})")
    return float(kappa)


def confidence_to_alpha(confidence: float, region: Region, policy: str, phase: str,
                        alpha_1: float, alpha_2: float, proportional: bool = False) -> float:
    """
    Controller speed for an anticipatory command

    Args:
        confidence: Confidence in (0, 1] (used only when proportional)
        region: Region of the predicted strike point
        policy: servo_only / anticipatory / uncertainty_aware (or aliases)
        phase: "pre_hit" (alpha_1) or "at_hit" (alpha_2)
        alpha_1, alpha_2: Policy speeds
        proportional: Scale the phase speed by the confidence

    Returns:
        float: alpha in [0, 1]
    """
    kind = canonical_policy_name(policy)
    if phase not in (PHASE_PRE_HIT, PHASE_AT_HIT):
        raise ConfigError(f"Unknown command phase: {phase}")
    if kind == "servo_only":
        return 0.0
    if kind not in ("anticipatory", "uncertainty_aware"):
        raise ConfigError(f"Unknown policy: {policy}")
    if phase == PHASE_AT_HIT:
        alpha = alpha_2
    elif kind == "uncertainty_aware" and Region(region) == Region.CENTER:
        return 0.0
    else:
        alpha = alpha_1
    if proportional:
        alpha *= float(np.clip(confidence, 0.0, 1.0))
    return float(alpha)


def predicted_region(prediction: PredictionMatrix, row: int) -> Region:
    return classify_region(float(prediction.values[row, 1] * STRIKE_PLANE_Y + prediction.values[row, 2]))


ESTIMATORS = ("knn_error", "ensemble", "conformal", "time_to_hit")


class UncertaintySuite:
    """Fitted state of every configured estimator"""

    def __init__(self, estimators: Sequence[str] = ESTIMATORS):
        unknown = [e for e in estimators if e not in ESTIMATORS]
        if unknown:
            raise ConfigError(f"Unknown uncertainty estimators: {unknown}")
        self.estimators = list(estimators)
        self.knn_error: Optional[KnnErrorModel] = None
        self.ensemble = None
        self.conformal: Dict[int, ConformalCalibration] = {}
        self.kappa: Optional[float] = None

    def fit(self, calibration: Sequence[Segment], predictions: Dict[str, PredictionMatrix],
            conformal_alpha: float = 0.1, knn_k: int = 10, window: int = 10,
            ensemble=None, kappa: Optional[float] = None, kappa_floor: float = 1.0) -> "UncertaintySuite":
        """
        Fit the estimators on the calibration split

        Args:
            calibration: Calibration segments (not used for predictor training)
            predictions: Predictor output for the calibration segments
            ensemble: EnsemblePredictor for the ensemble estimator
            kappa: Fixed time-to-hit kappa; fit from median errors when None
        """
        if not calibration:
            raise InsufficientSamplesError("Uncertainty estimators need a calibration split")
        if "knn_error" in self.estimators:
            self.knn_error = KnnErrorModel(min(knn_k, len(calibration)), window).fit(calibration, predictions)
        if "ensemble" in self.estimators:
            if ensemble is None:
                raise ConfigError("The ensemble estimator needs an ensemble predictor")
            self.ensemble = ensemble
        if "conformal" in self.estimators:
            self.conformal = calibrate_conformal(calibration, predictions, conformal_alpha)
        if "time_to_hit" in self.estimators:
            if kappa is None:
                errors = np.stack([strike_errors(predictions[s.segment_id], s) for s in calibration])
                kappa = fit_time_to_hit_kappa(np.median(errors, axis=0), floor=kappa_floor)
            self.kappa = kappa
        return self

    def uncertainties(self, estimator: str, segments: Sequence[Segment],
                      predictions: Dict[str, PredictionMatrix]) -> Dict[str, np.ndarray]:
        """Raw uncertainty (cm, or kappa*i for time_to_hit) per segment and row"""
        if estimator not in self.estimators:
            raise ConfigError(f"Estimator {estimator!r} is not configured")
        rows = np.arange(NUM_ROWS)
        if estimator == "knn_error":
            values = self.knn_error.model.predict_batch([s.pre_hit_matrix() for s in segments]) if segments else []
            return {s.segment_id: v for s, v in zip(segments, values)}
        if estimator == "ensemble":
            per_member = self.ensemble.member_outputs(segments)
            return {s.segment_id: ensemble_uncertainty([out[s.segment_id] for out in per_member]) for s in segments}
        if estimator == "conformal":
            widths = np.array([self.conformal[r].quantile for r in rows])
            return {s.segment_id: widths.copy() for s in segments}
        return {s.segment_id: self.kappa * rows.astype(float) for s in segments}

    def confidences(self, estimator: str, segments: Sequence[Segment],
                    predictions: Dict[str, PredictionMatrix]) -> Dict[str, np.ndarray]:
        """Confidence in (0, 1] per segment and row"""
        return {k: confidence_from_uncertainty(v)
                for k, v in self.uncertainties(estimator, segments, predictions).items()}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "estimators": self.estimators,
            "knn_error": self.knn_error.to_dict() if self.knn_error else None,
            "ensemble": self.ensemble.to_dict() if self.ensemble is not None else None,
            "conformal": {str(r): c.to_dict() for r, c in self.conformal.items()},
            "kappa": self.kappa,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "UncertaintySuite":
        suite = cls(data["estimators"])
        if data.get("knn_error"):
            suite.knn_error = KnnErrorModel.from_dict(data["knn_error"])
        if data.get("ensemble"):
            suite.ensemble = EnsemblePredictor.from_dict(data["ensemble"])
        suite.conformal = {int(r): ConformalCalibration(np.asarray(c["scores"]), c["alpha"])
                           for r, c in data.get("conformal", {}).items()}
        suite.kappa = data.get("kappa")
        return suite
