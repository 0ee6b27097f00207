"""
Metric aggregation over trial results

Per region (Right / Center / Left) and overall: trial count, hit count and
the end distance to goal over hits, reported as mean and half a population
standard deviation. Optional per-frame median strike errors follow the same
region columns.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Sequence, Union

import pandas as pd

from strikesim.core.frames import REGION_ORDER, Region
from strikesim.core.results import TrialResult

logger = logging.getLogger(__name__)

ALL_ROW = "All"
ROW_ORDER = [r.value for r in REGION_ORDER] + [ALL_ROW]

METRICS_METADATA = {
    "std_convention": "population",
    "distance_spread": "0.5 * std over hit trials",
    "strike_error": "absolute x error at the strike plane",
}


@dataclass
class MetricsTable:
    table: pd.DataFrame
    strike_errors: Optional[pd.DataFrame] = None
    metadata: Dict[str, Any] = field(default_factory=lambda: dict(METRICS_METADATA))

    def row(self, name: str) -> Dict[str, Any]:
        return self.table.loc[name].to_dict()

    def formatted(self) -> pd.DataFrame:
        """Total / # hit / End dist. to goal layout"""
        def fmt(r):
            if not r["distance_defined"]:
                return "n/a"
            return f"{r['end_dist_mean']:.2f} ± {r['end_dist_half_std']:.2f}"
        return pd.DataFrame({
            "Total": self.table["total"],
            "# hit": self.table["hits"],
            "End dist. to goal": self.table.apply(fmt, axis=1),
        })

    def to_dict(self) -> Dict[str, Any]:
        rows = {}
        for name, r in self.table.iterrows():
            rows[name] = {
                "total": int(r["total"]),
                "hits": int(r["hits"]),
                "errors": int(r["errors"]),
                "end_dist_mean": None if not r["distance_defined"] else float(r["end_dist_mean"]),
                "end_dist_half_std": None if not r["distance_defined"] else float(r["end_dist_half_std"]),
                "distance_defined": bool(r["distance_defined"]),
            }
        out = {"regions": rows, "metadata": dict(self.metadata)}
        if self.strike_errors is not None:
            out["median_strike_error"] = {
                str(frame): {k: (None if pd.isna(v) else float(v)) for k, v in row.items()}
                for frame, row in self.strike_errors.iterrows()
            }
        return out


def _region_lookup(results: Sequence[TrialResult],
                   regions: Union[Mapping[str, Region], Sequence[Region]]) -> Dict[str, str]:
    if isinstance(regions, Mapping):
        lookup = {k: Region(v).value for k, v in regions.items()}
    else:
        if len(regions) != len(results):
            raise ValueError("One region per result is required")
        lookup = {r.segment_id: Region(g).value for r, g in zip(results, regions)}
    missing = [r.segment_id for r in results if r.segment_id not in lookup]
    if missing:
        raise ValueError(f"No region for segments {missing[:5]}")
    return lookup


def _bucket_stats(frame: pd.DataFrame) -> Dict[str, Any]:
    hits = frame.loc[frame["hit"], "end_distance_to_goal"].to_numpy(dtype=float)
    defined = hits.size > 0
    return {
        "total": int(len(frame)),
        "hits": int(hits.size),
        "errors": int(frame["failed"].sum()),
        "end_dist_mean": float(hits.mean()) if defined else math.nan,
        "end_dist_half_std": float(0.5 * hits.std(ddof=0)) if defined else math.nan,
        "distance_defined": defined,
    }


def median_strike_errors(errors: pd.DataFrame, regions: Mapping[str, Region]) -> pd.DataFrame:
    """
    Median absolute strike error per prediction frame

    Args:
        errors: Long frame with columns segment_id, frame, abs_error
        regions: Region of each segment's true strike point

    Returns:
        pd.DataFrame: Index frame, columns Right / Center / Left / All
    """
    data = errors.copy()
    data["region"] = data["segment_id"].map(lambda s: Region(regions[s]).value)
    by_region = data.pivot_table(index="frame", columns="region", values="abs_error", aggfunc="median")
    by_region[ALL_ROW] = data.groupby("frame")["abs_error"].median()
    return by_region.reindex(columns=ROW_ORDER).sort_index()


def aggregate_metrics(results: Sequence[TrialResult],
                      regions: Union[Mapping[str, Region], Sequence[Region]],
                      strike_errors: Optional[pd.DataFrame] = None) -> MetricsTable:
    """
    Aggregate trial results into a per-region metrics table

    Args:
        results: Trial results (any order)
        regions: Region per segment id, or one region per result
        strike_errors: Optional long frame of per-frame strike errors

    Returns:
        MetricsTable: Rows Right / Center / Left / All
    """
    if not results:
        raise ValueError("Cannot aggregate an empty result list")
    lookup = _region_lookup(results, regions)
    frame = pd.DataFrame([{
        "segment_id": r.segment_id,
        "region": lookup[r.segment_id],
        "hit": bool(r.hit),
        "failed": r.error is not None,
        "end_distance_to_goal": r.end_distance_to_goal,
    } for r in results]).sort_values("segment_id", kind="mergesort").reset_index(drop=True)

    rows = {}
    for name in ROW_ORDER[:-1]:
        rows[name] = _bucket_stats(frame[frame["region"] == name])
    rows[ALL_ROW] = _bucket_stats(frame)
    table = pd.DataFrame.from_dict(rows, orient="index").reindex(ROW_ORDER)
    empty = [name for name, r in rows.items() if r["total"] == 0]
    if empty:
        logger.debug(f"Empty region buckets: {empty}")

    medians = median_strike_errors(strike_errors, lookup) if strike_errors is not None else None
    return MetricsTable(table=table, strike_errors=medians)
