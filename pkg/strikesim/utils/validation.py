"""
Validation utilities and error types for strikesim

Guards for numerical inputs (finiteness, shapes, ranges) shared by every
package, plus dict-style parameter reports consumed by the command line
before an experiment starts.
"""

import math
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple

import logging

import numpy as np

logger = logging.getLogger(__name__)


class StrikeSimError(Exception):
    """Base class for all strikesim errors"""


class ConfigError(StrikeSimError, ValueError):
    """Invalid configuration or usage"""


class ShapeMismatchError(StrikeSimError, ValueError):
    """Array with an unexpected shape or width"""


class InsufficientSamplesError(StrikeSimError, ValueError):
    """Too few samples for a fit"""


class NoStrikeError(StrikeSimError):
    """Trajectory never reaches the strike plane"""


class LimitViolationError(StrikeSimError):
    """Joint trace outside the position/velocity/acceleration envelope"""


class RejectedSegmentError(StrikeSimError):
    """Candidate segment failed a validity rule"""

    def __init__(self, message: str, rule: int):
        super().__init__(message)
        self.rule = rule


class SingularityError(StrikeSimError):
    """Degenerate linear system; `condition` holds the diagnostic"""

    def __init__(self, message: str, condition: float = math.inf):
        super().__init__(f"{message} (condition={condition:.3e})")
        self.condition = condition


class ValidationUtils:
    """Utility functions for input validation of numerical data and parameters"""

    def __init__(self):
        self.valid_policies = {
            'servo_only', 'anticipatory', 'uncertainty_aware',
            'baseline', 'basic_anticipatory'
        }
        self.valid_predictors = {'knn', 'noisy_oracle', 'ensemble'}
        self.valid_estimators = {'knn_error', 'ensemble', 'conformal', 'time_to_hit'}

    def validate_numerical_input(self, value: Any, min_val: Optional[float] = None,
                                 max_val: Optional[float] = None,
                                 allow_negative: bool = True) -> bool:
        """
        Validate a scalar numerical input

        Args:
            value: Value to validate
            min_val: Minimum allowed value
            max_val: Maximum allowed value
            allow_negative: Whether negative values are allowed

        Returns:
            bool: True if valid, False otherwise
        """
        if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
            return False
        value = float(value)
        if not math.isfinite(value):
            return False
        if not allow_negative and value < 0:
            return False
        if min_val is not None and value < min_val:
            return False
        if max_val is not None and value > max_val:
            return False
        return True

    @staticmethod
    def require_finite(value: Any, name: str) -> np.ndarray:
        """Return `value` as a float array, raising ValueError on NaN/inf"""
        arr = np.asarray(value, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} must be finite")
        return arr

    @staticmethod
    def require_shape(value: Any, shape: Tuple[Optional[int], ...], name: str) -> np.ndarray:
        """Return `value` as a float array of the given shape (None = any size)"""
        arr = np.asarray(value, dtype=float)
        if arr.ndim != len(shape) or any(
            expected is not None and actual != expected
            for actual, expected in zip(arr.shape, shape)
        ):
            raise ShapeMismatchError(f"{name} has shape {arr.shape}, expected {shape}")
        return arr

    def validate_region_weights(self, weights: Sequence[float]) -> bool:
        """Region mix weights must be three non-negative numbers with positive sum"""
        if len(weights) != 3:
            return False
        if not all(self.validate_numerical_input(w, allow_negative=False) for w in weights):
            return False
        return sum(weights) > 0

    def validate_alpha_grid(self, grid: Iterable[float]) -> bool:
        values = list(grid)
        return bool(values) and all(self.validate_numerical_input(a, 0.0, 1.0) for a in values)

    def validate_experiment_parameters(self, parameters: Dict[str, Any]) -> Dict[str, Any]:
        """
        Validate experiment parameters before a command runs

        Args:
            parameters: Flat dict with optional keys `policies`, `estimators`,
                `predictor`, `region_weights`, `alpha_grid`, `seed`

        Returns:
            Dict: Validation result with `valid`, `errors` and `warnings`
        """
        result = {"valid": True, "errors": [], "warnings": []}

        if 'policies' in parameters:
            policies = parameters['policies']
            if not policies:
                result["errors"].append("Policy list is empty")
            for policy in policies or []:
                if policy not in self.valid_policies:
                    result["errors"].append(f"Unknown policy: {policy}")

        if 'estimators' in parameters:
            estimators = parameters['estimators']
            if not estimators:
                result["errors"].append("Estimator set is empty")
            for estimator in estimators or []:
                if estimator not in self.valid_estimators:
                    result["errors"].append(f"Unknown uncertainty estimator: {estimator}")

        if 'predictor' in parameters and parameters['predictor'] not in self.valid_predictors:
            result["errors"].append(f"Unknown predictor kind: {parameters['predictor']}")

        if 'region_weights' in parameters:
            if not self.validate_region_weights(parameters['region_weights']):
                result["errors"].append("Region weights must be 3 non-negative values with positive sum")

        if 'alpha_grid' in parameters:
            if not self.validate_alpha_grid(parameters['alpha_grid']):
                result["errors"].append("Alpha grid must be non-empty with values in [0, 1]")

        if 'seed' in parameters:
            seed = parameters['seed']
            if seed is None:
                result["errors"].append("Seed is mandatory")
            elif not self.validate_numerical_input(seed, 0, 2**64 - 1, False):
                result["errors"].append("Seed must be an unsigned 64-bit integer")

        result["valid"] = not result["errors"]
        return result
