"""
Predictor lifecycle: build from a PredictorSpec, fit, persist and reload

Fitted predictors are kept in memory under a key so the harness can reuse
them across benchmark, sweep and diagnostics runs.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

from strikesim.config.settings import PredictorSpec
from strikesim.core.segment import Segment
from strikesim.models.predictors import (
    BasePredictor,
    KnnPredictor,
    NoisyOracle,
    fit_knn_ensemble,
    noisy_oracle_ensemble,
    predictor_from_dict,
)
from strikesim.utils.io_utils import write_json
from strikesim.utils.validation import ConfigError

logger = logging.getLogger(__name__)

PREDICTOR_ARTIFACT_VERSION = "1.0"


class PredictorManager:
    """Manages fitting and loading of anticipatory predictors"""

    def __init__(self):
        self.loaded_predictors: Dict[str, BasePredictor] = {}
        self.predictor_metadata: Dict[str, Dict[str, Any]] = {}

    def _oracle_kwargs(self, spec: PredictorSpec) -> Dict[str, Any]:
        return {
            "sigma_schedule": spec.sigma_schedule,
            "strike_bias": spec.strike_bias,
            "center_pull": spec.center_pull,
        }

    def build(self, spec: PredictorSpec, train_segments: Sequence[Segment] = ()) -> BasePredictor:
        """
        Build (and fit when needed) a predictor from its spec

        Args:
            spec: Predictor definition
            train_segments: Training split; required for kNN-based kinds

        Returns:
            BasePredictor: Ready-to-use predictor
        """
        if spec.kind == "noisy_oracle":
            return NoisyOracle(spec.noise_sigma, seed=spec.seed, **self._oracle_kwargs(spec))
        if spec.kind == "ensemble" and spec.member_kind == "noisy_oracle":
            return noisy_oracle_ensemble(spec.members, spec.noise_sigma, seed=spec.seed, **self._oracle_kwargs(spec))
        if not train_segments:
            raise ConfigError(f"Predictor kind {spec.kind!r} needs training segments")
        if spec.kind == "knn":
            return KnnPredictor(spec.k, spec.window, spec.seed).fit(train_segments)
        return fit_knn_ensemble(train_segments, spec.members, spec.k, spec.window, spec.seed)

    def fit(self, key: str, spec: PredictorSpec, train_segments: Sequence[Segment] = ()) -> BasePredictor:
        predictor = self.build(spec, train_segments)
        self.loaded_predictors[key] = predictor
        self.predictor_metadata[key] = {
            "kind": spec.kind,
            "spec": spec.model_dump(mode="json"),
            "train_size": len(train_segments),
        }
        logger.info(f"Predictor {key} ready ({spec.kind}, {len(train_segments)} training segments)")
        return predictor

    def get_predictor(self, key: str) -> Optional[BasePredictor]:
        return self.loaded_predictors.get(key)

    def get_loaded_predictors(self) -> Dict[str, Dict[str, Any]]:
        return {key: dict(meta) for key, meta in self.predictor_metadata.items()}

    def unload_predictor(self, key: str) -> None:
        self.loaded_predictors.pop(key, None)
        self.predictor_metadata.pop(key, None)

    def save(self, key: str, path: Union[str, Path], provenance_info: Optional[Dict[str, Any]] = None) -> Path:
        if key not in self.loaded_predictors:
            raise ConfigError(f"No predictor loaded under {key!r}")
        payload = {
            "version": PREDICTOR_ARTIFACT_VERSION,
            "metadata": self.predictor_metadata.get(key, {}),
            "predictor": self.loaded_predictors[key].to_dict(),
        }
        return write_json(path, payload, provenance_info)

    def load(self, key: str, path: Union[str, Path]) -> BasePredictor:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Predictor artifact not found: {path}")
        data = json.loads(path.read_text(encoding="utf-8"))
        if data.get("version") != PREDICTOR_ARTIFACT_VERSION:
            raise ConfigError(f"Unsupported predictor artifact version: {data.get('version')!r}")
        predictor = predictor_from_dict(data["predictor"])
        self.loaded_predictors[key] = predictor
        self.predictor_metadata[key] = dict(data.get("metadata", {}))
        logger.info(f"Loaded predictor {key} from {path}")
        return predictor
