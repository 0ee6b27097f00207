"""
Anticipatory predictors

A predictor maps an L x 39 pre-hit series to a 30 x 3 PredictionMatrix whose
row i holds the (a1, a2, b) estimate made i frames before the hit.

Implementations:
- KnnPredictor: one standardized kNN regressor per row over the 10-frame
  window ending i frames before the hit
- NoisyOracle: ground truth plus row-dependent Gaussian noise, with optional
  bias towards a chosen strike region
- EnsemblePredictor: mean and population spread over member predictors
"""

import hashlib
import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.metrics.pairwise import euclidean_distances
from sklearn.model_selection import KFold
from sklearn.preprocessing import StandardScaler

from strikesim.core.frames import STRIKE_PLANE_Y
from strikesim.core.game_state import STATE_DIM
from strikesim.core.segment import Segment
from strikesim.models.trajectory import PiecewiseLinearXY
from strikesim.utils.validation import ConfigError, ShapeMismatchError, ValidationUtils

logger = logging.getLogger(__name__)

NUM_ROWS = 30
DEFAULT_WINDOW = 10
# (a1, a2, b) noise scale: slopes in cm/cm contribute ~140x to the strike x
PARAM_NOISE_SCALE = np.array([1.0 / 140.0, 1.0 / 140.0, 1.0])


class PredictionMatrix:
    """30 x 3 trajectory parameters; row i is predicted i frames before the hit"""

    def __init__(self, values):
        values = ValidationUtils.require_shape(values, (NUM_ROWS, 3), "prediction matrix").copy()
        ValidationUtils.require_finite(values, "prediction matrix")
        values.setflags(write=False)
        self.values = values

    @staticmethod
    def row_index(timestep: int) -> int:
        """Row for a prediction issued at pre-hit timestep t (|t| clamped to 29)"""
        return min(abs(int(timestep)), NUM_ROWS - 1)

    def params(self, row: int) -> PiecewiseLinearXY:
        return PiecewiseLinearXY.from_array(self.values[row])

    def params_at(self, timestep: int) -> PiecewiseLinearXY:
        return self.params(self.row_index(timestep))

    def strike_points(self, strike_y: float = STRIKE_PLANE_Y) -> np.ndarray:
        return self.values[:, 1] * strike_y + self.values[:, 2]

    def to_list(self) -> List[List[float]]:
        return self.values.tolist()

    def __eq__(self, other) -> bool:
        return isinstance(other, PredictionMatrix) and np.array_equal(self.values, other.values)

    __hash__ = None


def segment_rng(seed: int, segment_id: str) -> np.random.Generator:
    """Per-segment generator independent of iteration order"""
    digest = int.from_bytes(hashlib.sha256(segment_id.encode("utf-8")).digest()[:8], "big")
    return np.random.default_rng([int(seed), digest])


def window_features(X: np.ndarray, row: int, window: int = DEFAULT_WINDOW) -> np.ndarray:
    """
    Flattened window of `window` frames ending `row` frames before the hit

    Rows beyond the available history reuse the earliest computable window;
    windows reaching before the first frame repeat it.
    """
    length = X.shape[0]
    end = max(length - 1 - row, 0)
    idx = np.clip(np.arange(end - window + 1, end + 1), 0, None)
    return X[idx].reshape(-1)


def _check_series(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != STATE_DIM or X.shape[0] < 1:
        raise ShapeMismatchError(f"Pre-hit series has shape {X.shape}, expected (L>=1, {STATE_DIM})")
    return X


class KnnRegressor:
    """Unweighted kNN mean over z-scored features, ties broken by dataset order"""

    def __init__(self, k: int = 5):
        if k < 1:
            raise ConfigError("k must be >= 1")
        self.k = k
        self.scaler: Optional[StandardScaler] = None
        self._train: Optional[np.ndarray] = None
        self.targets: Optional[np.ndarray] = None

    def fit(self, features, targets, scaler: Optional[StandardScaler] = None) -> "KnnRegressor":
        features = np.asarray(features, dtype=float)
        targets = np.asarray(targets, dtype=float)
        if features.ndim != 2 or features.shape[0] == 0:
            raise ShapeMismatchError("kNN needs a non-empty 2D feature matrix")
        if targets.shape[0] != features.shape[0]:
            raise ShapeMismatchError(f"{features.shape[0]} feature rows for {targets.shape[0]} targets")
        if self.k > features.shape[0]:
            raise ConfigError(f"k={self.k} exceeds the dataset size {features.shape[0]}")
        self.scaler = scaler if scaler is not None else StandardScaler().fit(features)
        self._train = self.scaler.transform(features)
        self.targets = targets
        return self

    def neighbors(self, queries) -> np.ndarray:
        if self._train is None:
            raise ConfigError("KnnRegressor used before fit")
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        if queries.shape[1] != self._train.shape[1]:
            raise ShapeMismatchError(f"Query width {queries.shape[1]}, expected {self._train.shape[1]}")
        distances = euclidean_distances(self.scaler.transform(queries), self._train)
        return np.argsort(distances, axis=1, kind="stable")[:, : self.k]

    def predict(self, queries) -> np.ndarray:
        return self.targets[self.neighbors(queries)].mean(axis=1)


def _scaler_from_state(mean, scale) -> StandardScaler:
    scaler = StandardScaler()
    scaler.mean_ = np.asarray(mean, dtype=float)
    scaler.scale_ = np.asarray(scale, dtype=float)
    scaler.var_ = scaler.scale_ ** 2
    scaler.n_features_in_ = scaler.mean_.size
    return scaler


class BasePredictor(ABC):
    """Common interface for anticipatory predictors"""

    kind = "base"

    @abstractmethod
    def predict(self, X) -> PredictionMatrix:
        """Predict from an L x 39 pre-hit series"""

    def predict_segment(self, segment: Segment) -> PredictionMatrix:
        return self.predict(segment.pre_hit_matrix())

    def predict_segments(self, segments: Sequence[Segment]) -> Dict[str, PredictionMatrix]:
        return {s.segment_id: self.predict_segment(s) for s in segments}

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        """Serializable form"""


class WindowedKnnModel:
    """Per-row kNN regressors over pre-hit windows (shared by predictor and error model)"""

    def __init__(self, k: int = 5, window: int = DEFAULT_WINDOW):
        if window < 1:
            raise ConfigError("window must be >= 1")
        self.k = k
        self.window = window
        self.series: List[np.ndarray] = []
        self.targets: Optional[np.ndarray] = None  # n x 30 x d
        self.row_stats: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
        self.regressors: Dict[int, KnnRegressor] = {}

    def row_features(self, series: Sequence[np.ndarray], row: int) -> np.ndarray:
        return np.stack([window_features(X, row, self.window) for X in series])

    def fit(self, series: Sequence[np.ndarray], targets: np.ndarray) -> "WindowedKnnModel":
        if not series:
            raise ConfigError("Cannot fit a kNN model on an empty dataset")
        if self.k > len(series):
            raise ConfigError(f"k={self.k} exceeds the dataset size {len(series)}")
        self.series = [_check_series(X) for X in series]
        self.targets = np.asarray(targets, dtype=float)
        self.row_stats = {}
        for row in range(NUM_ROWS):
            scaler = StandardScaler().fit(self.row_features(self.series, row))
            self.row_stats[row] = (scaler.mean_, scaler.scale_)
        self._build_regressors()
        return self

    def _build_regressors(self) -> None:
        # scalers and standardized training windows are fixed until the next fit
        self.regressors = {}
        for row, (mean, scale) in self.row_stats.items():
            self.regressors[row] = KnnRegressor(self.k).fit(
                self.row_features(self.series, row), self.targets[:, row], scaler=_scaler_from_state(mean, scale)
            )

    def regressor(self, row: int) -> KnnRegressor:
        if row not in self.regressors:
            raise ConfigError(f"No kNN regressor for row {row}, fit the model first")
        return self.regressors[row]

    def predict_batch(self, series: Sequence[np.ndarray]) -> np.ndarray:
        if self.targets is None:
            raise ConfigError("kNN model used before fit")
        series = [_check_series(X) for X in series]
        out = np.zeros((len(series), NUM_ROWS) + self.targets.shape[2:])
        for row in range(NUM_ROWS):
            out[:, row] = self.regressor(row).predict(self.row_features(series, row))
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "window": self.window,
            "series": [X.tolist() for X in self.series],
            "targets": self.targets.tolist(),
            "standardization": {str(r): {"mean": m.tolist(), "scale": s.tolist()}
                                for r, (m, s) in self.row_stats.items()},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "WindowedKnnModel":
        model = cls(int(data["k"]), int(data["window"]))
        model.series = [np.asarray(X, dtype=float) for X in data["series"]]
        model.targets = np.asarray(data["targets"], dtype=float)
        model.row_stats = {int(r): (np.asarray(v["mean"]), np.asarray(v["scale"]))
                           for r, v in data["standardization"].items()}
        model._build_regressors()
        return model


class KnnPredictor(BasePredictor):
    kind = "knn"

    def __init__(self, k: int = 5, window: int = DEFAULT_WINDOW, seed: int = 0):
        self.model = WindowedKnnModel(k, window)
        self.seed = seed
        self.train_ids: List[str] = []

    def fit(self, segments: Sequence[Segment]) -> "KnnPredictor":
        targets = np.stack([np.tile(s.truth_params.to_array(), (NUM_ROWS, 1)) for s in segments]) \
            if segments else np.empty((0, NUM_ROWS, 3))
        self.model.fit([s.pre_hit_matrix() for s in segments], targets)
        self.train_ids = [s.segment_id for s in segments]
        logger.info(f"kNN predictor fit on {len(segments)} segments (k={self.model.k}, window={self.model.window})")
        return self

    def predict(self, X) -> PredictionMatrix:
        return PredictionMatrix(self.model.predict_batch([X])[0])

    def predict_segments(self, segments: Sequence[Segment]) -> Dict[str, PredictionMatrix]:
        if not segments:
            return {}
        values = self.model.predict_batch([s.pre_hit_matrix() for s in segments])
        return {s.segment_id: PredictionMatrix(v) for s, v in zip(segments, values)}

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "seed": self.seed, "train_ids": self.train_ids, **self.model.to_dict()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "KnnPredictor":
        predictor = cls(int(data["k"]), int(data["window"]), int(data.get("seed", 0)))
        predictor.model = WindowedKnnModel.from_dict(data)
        predictor.train_ids = list(data.get("train_ids", []))
        return predictor


def linear_sigma_schedule(slope: float) -> np.ndarray:
    return slope * np.arange(NUM_ROWS, dtype=float)


class NoisyOracle(BasePredictor):
    """Ground truth with Gaussian parameter noise sigma_i per row"""

    kind = "noisy_oracle"

    def __init__(self, noise_sigma: float = 1.5, sigma_schedule: Optional[Sequence[float]] = None,
                 strike_bias: float = 0.0, center_pull: float = 0.0, seed: int = 0):
        schedule = linear_sigma_schedule(noise_sigma) if sigma_schedule is None else np.asarray(sigma_schedule, float)
        if schedule.shape != (NUM_ROWS,) or np.any(schedule < 0):
            raise ConfigError("sigma schedule needs 30 non-negative entries")
        if not 0.0 <= center_pull <= 1.0:
            raise ConfigError("center_pull must lie in [0, 1]")
        self.sigma_schedule = schedule
        self.noise_sigma = noise_sigma
        self.strike_bias = strike_bias
        self.center_pull = center_pull
        self.seed = seed

    def predict(self, X) -> PredictionMatrix:
        raise ConfigError("The noisy oracle predicts from segments, not feature series")

    def predict_segment(self, segment: Segment) -> PredictionMatrix:
        rng = segment_rng(self.seed, segment.segment_id)
        noise = rng.standard_normal((NUM_ROWS, 3)) * self.sigma_schedule[:, None] * PARAM_NOISE_SCALE
        values = segment.truth_params.to_array()[None, :] + noise
        if self.center_pull or self.strike_bias:
            strike = values[:, 1] * STRIKE_PLANE_Y + values[:, 2]
            shifted = (1.0 - self.center_pull) * strike + self.strike_bias
            values[:, 2] += shifted - strike
        return PredictionMatrix(values)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "noise_sigma": self.noise_sigma,
            "sigma_schedule": self.sigma_schedule.tolist(),
            "strike_bias": self.strike_bias,
            "center_pull": self.center_pull,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NoisyOracle":
        return cls(data.get("noise_sigma", 0.0), data["sigma_schedule"], data.get("strike_bias", 0.0),
                   data.get("center_pull", 0.0), int(data.get("seed", 0)))


def combine_member_outputs(outputs: Sequence[PredictionMatrix]) -> Tuple[PredictionMatrix, np.ndarray]:
    """Element-wise mean and population std across member outputs"""
    if len(outputs) < 2:
        raise ConfigError("An ensemble needs at least 2 members")
    shapes = {np.shape(o.values) for o in outputs}
    if len(shapes) != 1:
        raise ShapeMismatchError(f"Ensemble member outputs disagree in shape: {shapes}")
    stacked = np.stack([o.values for o in outputs])
    return PredictionMatrix(stacked.mean(axis=0)), stacked.std(axis=0, ddof=0)


def ensemble_predict(members: Sequence[BasePredictor], X: Union[Segment, np.ndarray]) -> Tuple[PredictionMatrix, np.ndarray]:
    """
    Mean and spread of the members' predictions for one input

    A Segment is routed through each member's predict_segment, so oracle
    members work. A bare L x 39 series only suits members that predict from
    pose; the noisy oracle raises ConfigError for it.
    """
    if isinstance(X, Segment):
        return ensemble_predict_segment(members, X)
    return combine_member_outputs([m.predict(X) for m in members])


def ensemble_predict_segment(members: Sequence[BasePredictor], segment: Segment) -> Tuple[PredictionMatrix, np.ndarray]:
    return combine_member_outputs([m.predict_segment(segment) for m in members])


class EnsemblePredictor(BasePredictor):
    kind = "ensemble"

    def __init__(self, members: Sequence[BasePredictor]):
        if len(members) < 2:
            raise ConfigError("An ensemble needs at least 2 members")
        self.members = list(members)

    def predict(self, X) -> PredictionMatrix:
        return ensemble_predict(self.members, X)[0]

    def predict_segment(self, segment: Segment) -> PredictionMatrix:
        return ensemble_predict_segment(self.members, segment)[0]

    def member_outputs(self, segments: Sequence[Segment]) -> List[Dict[str, PredictionMatrix]]:
        return [m.predict_segments(segments) for m in self.members]

    def predict_segments(self, segments: Sequence[Segment]) -> Dict[str, PredictionMatrix]:
        per_member = self.member_outputs(segments)
        return {s.segment_id: combine_member_outputs([out[s.segment_id] for out in per_member])[0]
                for s in segments}

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "members": [m.to_dict() for m in self.members]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EnsemblePredictor":
        return cls([predictor_from_dict(m) for m in data["members"]])


def fit_knn_ensemble(segments: Sequence[Segment], members: int = 5, k: int = 5,
                     window: int = DEFAULT_WINDOW, seed: int = 0) -> EnsemblePredictor:
    """Train one kNN member per fold, each on the remaining folds"""
    if members < 2:
        raise ConfigError("An ensemble needs at least 2 members")
    if len(segments) < members:
        raise ConfigError(f"{len(segments)} segments cannot be split into {members} folds")
    folds = KFold(n_splits=members, shuffle=True, random_state=seed)
    fitted = []
    for j, (train_idx, _) in enumerate(folds.split(np.arange(len(segments)))):
        fitted.append(KnnPredictor(k, window, seed + j).fit([segments[i] for i in train_idx]))
    return EnsemblePredictor(fitted)


def noisy_oracle_ensemble(members: int, noise_sigma: float, seed: int = 0, **kwargs) -> EnsemblePredictor:
    return EnsemblePredictor([NoisyOracle(noise_sigma, seed=seed + j, **kwargs) for j in range(members)])


def predictor_from_dict(data: Dict[str, Any]) -> BasePredictor:
    kind = data.get("kind")
    if kind == "knn":
        return KnnPredictor.from_dict(data)
    if kind == "noisy_oracle":
        return NoisyOracle.from_dict(data)
    if kind == "ensemble":
        return EnsemblePredictor.from_dict(data)
    raise ConfigError(f"Unknown predictor kind: {kind}")
