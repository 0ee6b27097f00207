"""
Output helpers: provenance, JSON documents and CSV tables

Every artifact carries the config hash, seed and package versions. Output is
deterministic (sorted keys, no timestamps) so reruns compare byte for byte.
"""

import hashlib
import json
import logging
import platform
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

import strikesim

logger = logging.getLogger(__name__)


def _jsonable(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None if np.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def canonical_json(value: Any) -> str:
    return json.dumps(_jsonable(value), sort_keys=True, separators=(",", ":"))


def config_hash(config: Any) -> str:
    """SHA-256 of the canonical JSON form of a config"""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def provenance(config: Any, seed: Optional[int] = None) -> Dict[str, Any]:
    return {
        "config_hash": config_hash(config),
        "seed": seed,
        "strikesim_version": strikesim.__version__,
        "numpy_version": np.__version__,
        "pandas_version": pd.__version__,
        "python_version": platform.python_version(),
    }


def write_json(path: Union[str, Path], payload: Dict[str, Any],
               provenance_info: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = dict(_jsonable(payload))
    if provenance_info is not None:
        document["provenance"] = provenance_info
    path.write_text(json.dumps(document, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    logger.debug(f"Wrote {path}")
    return path


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_csv(path: Union[str, Path], frame: pd.DataFrame,
              provenance_info: Optional[Dict[str, Any]] = None) -> Path:
    """Write a CSV preceded by `# key: value` provenance lines"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        for key, value in sorted((provenance_info or {}).items()):
            fh.write(f"# {key}: {value}\n")
        frame.to_csv(fh, index=False, float_format="%.6f", lineterminator="\n")
    logger.debug(f"Wrote {path} ({len(frame)} rows)")
    return path


def read_csv(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")
