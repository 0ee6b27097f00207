"""
Generated datasets: accepted segments, train / calibration / test splits and
the manifest that records how they were produced
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from strikesim.config.settings import GeneratorConfig
from strikesim.core.frames import Region
from strikesim.core.segment import Segment, load_segment, save_segment
from strikesim.simgen.generator import generate_segments
from strikesim.utils.geometry_utils import CameraModel
from strikesim.utils.io_utils import config_hash, read_json, write_json
from strikesim.utils.validation import ConfigError

logger = logging.getLogger(__name__)

MANIFEST_VERSION = "1.0"
SPLIT_NAMES = ("train", "calibration", "test")
SPLIT_STREAM = 7919  # separates the split shuffle from the per-candidate streams


@dataclass
class Dataset:
    segments: List[Segment]
    manifest: Dict[str, Any]
    splits: Dict[str, List[str]]

    def __post_init__(self):
        self._by_id = {s.segment_id: s for s in self.segments}
        if len(self._by_id) != len(self.segments):
            raise ConfigError("Dataset contains duplicate segment ids")

    def __len__(self) -> int:
        return len(self.segments)

    def get(self, segment_id: str) -> Segment:
        return self._by_id[segment_id]

    def split(self, name: str) -> List[Segment]:
        """Segments of a split, sorted by id"""
        if name not in self.splits:
            raise ConfigError(f"Dataset has no {name!r} split")
        return [self._by_id[i] for i in self.splits[name]]

    def regions(self) -> Dict[str, Region]:
        return {s.segment_id: s.region for s in self.segments}


def region_counts(segments: Sequence[Segment]) -> Dict[str, int]:
    counts = {r.value: 0 for r in Region}
    for segment in segments:
        counts[segment.region.value] += 1
    return counts


def split_dataset(segment_ids: Sequence[str], fractions: Sequence[float], seed: int) -> Dict[str, List[str]]:
    """
    Seeded shuffle into train / calibration / test

    Args:
        segment_ids: Ids to split
        fractions: (train, calibration, test) fractions summing to 1
        seed: Dataset seed

    Returns:
        Dict: Split name to sorted ids
    """
    if len(fractions) != len(SPLIT_NAMES):
        raise ConfigError(f"Expected {len(SPLIT_NAMES)} split fractions, got {len(fractions)}")
    ids = sorted(segment_ids)
    order = np.random.default_rng([seed, SPLIT_STREAM]).permutation(len(ids))
    n_train = int(round(fractions[0] * len(ids)))
    n_cal = int(round(fractions[1] * len(ids)))
    n_cal = min(n_cal, len(ids) - n_train)
    cuts = [0, n_train, n_train + n_cal, len(ids)]
    return {
        name: sorted(ids[i] for i in order[cuts[k]:cuts[k + 1]])
        for k, name in enumerate(SPLIT_NAMES)
    }


def build_manifest(config: GeneratorConfig, segments: Sequence[Segment], splits: Dict[str, List[str]],
                   stats: Dict[str, Any]) -> Dict[str, Any]:
    return {
        "version": MANIFEST_VERSION,
        "seed": config.seed,
        "config_hash": config_hash(config),
        "generator": config.model_dump(mode="json"),
        "segment_count": len(segments),
        "region_counts": region_counts(segments),
        "attempts": stats.get("attempts"),
        "rejected_by_rule": stats.get("rejected_by_rule", {}),
        "segments": [s.segment_id for s in segments],
        "splits": splits,
    }


def generate_dataset(config: GeneratorConfig, jobs: int = 1,
                     cameras: Optional[Sequence[CameraModel]] = None) -> Dataset:
    """
    Generate a deterministic dataset with its manifest and splits

    Args:
        config: Generator settings
        jobs: Worker processes
        cameras: Camera rig override

    Returns:
        Dataset: Segments, manifest and splits
    """
    segments, stats = generate_segments(config, jobs=jobs, cameras=cameras)
    splits = split_dataset([s.segment_id for s in segments], config.split_fractions, config.seed)
    manifest = build_manifest(config, segments, splits, stats)
    logger.info(
        f"Generated {len(segments)} segments from {stats['attempts']} candidates "
        f"(regions {manifest['region_counts']})"
    )
    return Dataset(segments, manifest, splits)


def save_dataset(dataset: Dataset, path: Union[str, Path],
                 provenance_info: Optional[Dict[str, Any]] = None) -> Path:
    """Write segments/<id>.json and manifest.json under path"""
    root = Path(path)
    for segment in dataset.segments:
        save_segment(segment, root / "segments" / f"{segment.segment_id}.json")
    write_json(root / "manifest.json", dataset.manifest, provenance_info)
    logger.info(f"Saved {len(dataset)} segments to {root}")
    return root


def load_dataset(path: Union[str, Path]) -> Dataset:
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"Dataset manifest not found: {manifest_path}")
    manifest = read_json(manifest_path)
    if manifest.get("version") != MANIFEST_VERSION:
        raise ConfigError(f"Unsupported dataset manifest version: {manifest.get('version')!r}")
    segments = []
    for segment_id in manifest["segments"]:
        segment_path = root / "segments" / f"{segment_id}.json"
        if not segment_path.exists():
            raise ConfigError(f"Segment listed in manifest is missing: {segment_path}")
        segments.append(load_segment(segment_path))
    logger.info(f"Loaded {len(segments)} segments from {root}")
    return Dataset(segments, manifest, {k: list(v) for k, v in manifest["splits"].items()})
