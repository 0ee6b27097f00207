"""
Confidence-versus-residual diagnostics

Checks whether an estimator's confidence tracks the size of the strike error
it is attached to. Reports Pearson and Spearman coefficients and keeps the
raw scatter for external plotting.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from strikesim.core.segment import Segment
from strikesim.models.predictors import NUM_ROWS, PredictionMatrix
from strikesim.uncertainty.estimators import strike_errors
from strikesim.utils.validation import InsufficientSamplesError, ShapeMismatchError

logger = logging.getLogger(__name__)

MIN_DIAGNOSTIC_SAMPLES = 3
ZERO_SPREAD_TOL = 1e-9  # spreads below this (relative, floor 1) count as constant
SCATTER_COLUMNS = ["segment_id", "row", "estimator", "confidence", "abs_strike_error"]


@dataclass
class CorrelationReport:
    estimator: str
    n: int
    pearson: float
    spearman: float
    defined: bool
    scatter: pd.DataFrame = field(repr=False)
    reason: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "estimator": self.estimator,
            "n": self.n,
            "pearson": None if math.isnan(self.pearson) else self.pearson,
            "spearman": None if math.isnan(self.spearman) else self.spearman,
            "defined": self.defined,
            "reason": self.reason,
        }


def _constant(values: np.ndarray) -> bool:
    return float(np.ptp(values)) <= ZERO_SPREAD_TOL * max(1.0, float(np.max(np.abs(values))))


def confidence_residual_diagnostics(confidences, errors, segment_ids: Optional[Sequence[str]] = None,
                                    estimator: str = "unknown",
                                    rows: Optional[Sequence[int]] = None) -> CorrelationReport:
    """
    Correlate confidences with absolute strike errors

    Args:
        confidences: Paired confidence samples
        errors: Paired absolute strike errors (cm)
        segment_ids: Optional segment id per sample for the scatter table
        estimator: Estimator name recorded in the report
        rows: Optional prediction row per sample

    Returns:
        CorrelationReport: Coefficients are NaN and defined is False when
        either input has zero variance
    """
    c = np.asarray(confidences, dtype=float).reshape(-1)
    e = np.asarray(errors, dtype=float).reshape(-1)
    if c.shape != e.shape:
        raise ShapeMismatchError(f"{c.size} confidences paired with {e.size} errors")
    if c.size < MIN_DIAGNOSTIC_SAMPLES:
        raise InsufficientSamplesError(f"Diagnostics need >= {MIN_DIAGNOSTIC_SAMPLES} samples, got {c.size}")
    ids = list(segment_ids) if segment_ids is not None else [""] * c.size
    row_values = list(rows) if rows is not None else [-1] * c.size
    if len(ids) != c.size or len(row_values) != c.size:
        raise ShapeMismatchError("segment_ids/rows must pair with the samples")

    scatter = pd.DataFrame({
        "segment_id": ids,
        "row": row_values,
        "estimator": estimator,
        "confidence": c,
        "abs_strike_error": e,
    }, columns=SCATTER_COLUMNS)

    reason = None
    if _constant(c):
        reason = "confidence has zero variance"
    elif _constant(e):
        reason = "strike error has zero variance"
    if reason is not None:
        logger.info(f"{estimator}: correlation undefined ({reason})")
        return CorrelationReport(estimator, int(c.size), math.nan, math.nan, False, scatter, reason)

    pearson = float(stats.pearsonr(c, e)[0])
    spearman = float(stats.spearmanr(c, e)[0])
    logger.info(f"{estimator}: n={c.size} pearson={pearson:.3f} spearman={spearman:.3f}")
    return CorrelationReport(estimator, int(c.size), pearson, spearman, True, scatter)


class DiagnosticsAccumulator:
    """Collects paired samples from partial runs; merge() combines shards"""

    def __init__(self, estimator: str):
        self.estimator = estimator
        self._frames: List[pd.DataFrame] = []

    def add(self, confidences, errors, segment_ids: Sequence[str], rows: Sequence[int]) -> None:
        frame = pd.DataFrame({
            "segment_id": list(segment_ids),
            "row": list(rows),
            "estimator": self.estimator,
            "confidence": np.asarray(confidences, dtype=float).reshape(-1),
            "abs_strike_error": np.asarray(errors, dtype=float).reshape(-1),
        }, columns=SCATTER_COLUMNS)
        self._frames.append(frame)

    def add_segments(self, segments: Sequence[Segment], predictions: Mapping[str, PredictionMatrix],
                     confidences: Mapping[str, np.ndarray]) -> None:
        """Add every (segment, row) pair"""
        for segment in segments:
            self.add(confidences[segment.segment_id], strike_errors(predictions[segment.segment_id], segment),
                     [segment.segment_id] * NUM_ROWS, range(NUM_ROWS))

    def merge(self, other: "DiagnosticsAccumulator") -> "DiagnosticsAccumulator":
        if other.estimator != self.estimator:
            raise ValueError(f"Cannot merge {other.estimator} diagnostics into {self.estimator}")
        merged = DiagnosticsAccumulator(self.estimator)
        merged._frames = self._frames + other._frames
        return merged

    @property
    def n(self) -> int:
        return int(sum(len(f) for f in self._frames))

    def samples(self) -> pd.DataFrame:
        """All samples in a canonical order, independent of insertion order"""
        if not self._frames:
            return pd.DataFrame(columns=SCATTER_COLUMNS)
        data = pd.concat(self._frames, ignore_index=True)
        return data.sort_values(["segment_id", "row"], kind="mergesort").reset_index(drop=True)

    def report(self) -> CorrelationReport:
        data = self.samples()
        return confidence_residual_diagnostics(data["confidence"].to_numpy(), data["abs_strike_error"].to_numpy(),
                                               data["segment_id"].tolist(), self.estimator, data["row"].tolist())


def strike_error_table(segments: Sequence[Segment], predictions: Mapping[str, PredictionMatrix]) -> pd.DataFrame:
    """Long table of |strike error| with columns segment_id, frame, abs_error"""
    records = []
    for segment in sorted(segments, key=lambda s: s.segment_id):
        errors = strike_errors(predictions[segment.segment_id], segment)
        records.extend({"segment_id": segment.segment_id, "frame": row, "abs_error": float(err)}
                       for row, err in enumerate(errors))
    return pd.DataFrame(records, columns=["segment_id", "frame", "abs_error"])
