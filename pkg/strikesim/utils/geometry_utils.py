"""
Geometry utilities for strikesim

Pinhole projection, DLT triangulation (single point and vectorized batch),
camera rig loading and the zero-phase moving-average low-pass filter.
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from strikesim.utils.validation import (
    ConfigError,
    InsufficientSamplesError,
    ShapeMismatchError,
    SingularityError,
    ValidationUtils,
)

logger = logging.getLogger(__name__)

CAMERA_RIG_VERSION = "1.0"
SINGULAR_RTOL = 1e-10
CENTER_TOL = 1e-9  # cm


@dataclass(frozen=True, eq=False)
class CameraModel:
    projection_matrix: np.ndarray
    image_size: Tuple[int, int]  # (width, height) in pixels
    camera_id: str = "cam0"

    def __post_init__(self):
        P = ValidationUtils.require_shape(self.projection_matrix, (3, 4), "projection_matrix").copy()
        ValidationUtils.require_finite(P, "projection_matrix")
        if np.linalg.matrix_rank(P) != 3:
            raise ConfigError(f"Camera {self.camera_id} projection matrix must have rank 3")
        P.setflags(write=False)
        object.__setattr__(self, "projection_matrix", P)
        object.__setattr__(self, "image_size", (int(self.image_size[0]), int(self.image_size[1])))

    def center(self) -> np.ndarray:
        """Camera center: the right null vector of P"""
        _, _, vt = np.linalg.svd(self.projection_matrix)
        c = vt[-1]
        if abs(c[3]) < 1e-15:
            return np.full(3, np.inf)
        return c[:3] / c[3]

    def in_bounds(self, u: float, v: float) -> bool:
        return 0.0 <= u <= self.image_size[0] and 0.0 <= v <= self.image_size[1]

    def to_dict(self) -> Dict:
        return {"id": self.camera_id, "projection_matrix": self.projection_matrix.tolist(),
                "image_size": list(self.image_size)}


@dataclass(frozen=True)
class PixelObservation:
    camera_id: str
    u: float
    v: float
    frame: int = 0


def project(camera: CameraModel, point) -> Tuple[float, float]:
    """
    Project a 3D point to pixel coordinates

    Args:
        camera: Camera model
        point: 3D point (cm)

    Returns:
        Tuple: (u, v) in pixels
    """
    point = ValidationUtils.require_shape(point, (3,), "point")
    x = camera.projection_matrix @ np.append(point, 1.0)
    if not x[2] > 0:
        raise ValueError(f"Point has non-positive depth {x[2]:.3g} for camera {camera.camera_id}")
    return float(x[0] / x[2]), float(x[1] / x[2])


def observe(camera: CameraModel, point, frame: int = 0) -> PixelObservation:
    """Project a point into an in-bounds PixelObservation"""
    u, v = project(camera, point)
    if not camera.in_bounds(u, v):
        raise ValueError(f"Projection ({u:.1f}, {v:.1f}) outside camera {camera.camera_id} image")
    return PixelObservation(camera.camera_id, u, v, frame)


def _camera_lookup(cameras: Union[Sequence[CameraModel], Mapping[str, CameraModel]]) -> Dict[str, CameraModel]:
    if isinstance(cameras, Mapping):
        return dict(cameras)
    return {c.camera_id: c for c in cameras}


def _dlt_rows(P: np.ndarray, u, v) -> np.ndarray:
    # u*P3 - P1 and v*P3 - P2, each scaled to unit norm so the system does
    # not depend on the scale of P
    rows = np.stack([np.multiply.outer(u, P[2]) - P[0], np.multiply.outer(v, P[2]) - P[1]], axis=-2)
    return rows / np.linalg.norm(rows, axis=-1, keepdims=True)


def _check_distinct_centers(cams: List[CameraModel]) -> None:
    centers = np.array([c.center() for c in cams])
    if np.all(np.isfinite(centers)) and np.all(np.abs(centers - centers[0]) <= CENTER_TOL):
        raise SingularityError("All cameras share one center, rays cannot intersect", math.inf)


def _reprojection_rms(Ps: Sequence[np.ndarray], pixels: np.ndarray, point: np.ndarray) -> float:
    errors = []
    hom = np.append(point, 1.0)
    for P, (u, v) in zip(Ps, pixels):
        x = P @ hom
        errors.append((x[0] / x[2] - u) ** 2 + (x[1] / x[2] - v) ** 2)
    return float(np.sqrt(np.mean(errors)))


def triangulate_dlt(observations: Sequence[PixelObservation],
                    cameras: Union[Sequence[CameraModel], Mapping[str, CameraModel]]) -> Tuple[np.ndarray, float]:
    """
    Triangulate one 3D point with the Direct Linear Transformation

    Args:
        observations: Pixel observations of the point, one per camera
        cameras: Cameras by id (or a list of cameras carrying ids)

    Returns:
        Tuple: (3D point, RMS reprojection residual in pixels)
    """
    if len(observations) < 2:
        raise InsufficientSamplesError(f"Triangulation needs >= 2 views, got {len(observations)}")
    lookup = _camera_lookup(cameras)
    try:
        cams = [lookup[o.camera_id] for o in observations]
    except KeyError as e:
        raise ConfigError(f"Unknown camera id {e}") from e
    _check_distinct_centers(cams)

    A = np.vstack([_dlt_rows(c.projection_matrix, o.u, o.v) for c, o in zip(cams, observations)])
    # columns equilibrated (a world-coordinate rescaling) before the SVD
    scale = 1.0 / np.linalg.norm(A, axis=0)
    _, s, vt = np.linalg.svd(A * scale)
    if s[-2] <= SINGULAR_RTOL * s[0]:
        raise SingularityError("Degenerate triangulation geometry", s[0] / max(s[-2], 1e-300))
    X = vt[-1] * scale
    if abs(X[3]) <= 1e-12 * np.linalg.norm(X):
        raise SingularityError("Triangulated point at infinity (parallel rays)", math.inf)
    point = X[:3] / X[3]
    pixels = np.array([[o.u, o.v] for o in observations])
    residual = _reprojection_rms([c.projection_matrix for c in cams], pixels, point)
    return point, residual


def project_batch(cameras: Sequence[CameraModel], points) -> np.ndarray:
    """Project N points into every camera: returns C x N x 2 pixels"""
    points = ValidationUtils.require_shape(points, (None, 3), "points")
    hom = np.hstack([points, np.ones((points.shape[0], 1))])
    out = []
    for cam in cameras:
        x = hom @ cam.projection_matrix.T
        if np.any(x[:, 2] <= 0):
            raise ValueError(f"Points behind camera {cam.camera_id}")
        out.append(x[:, :2] / x[:, 2:3])
    return np.stack(out)


def triangulate_batch(cameras: Sequence[CameraModel], pixels) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized DLT over many points seen by the same cameras

    Args:
        cameras: C cameras
        pixels: C x N x 2 pixel coordinates

    Returns:
        Tuple: (N x 3 points, N RMS reprojection residuals)
    """
    pixels = np.asarray(pixels, dtype=float)
    if pixels.ndim != 3 or pixels.shape[0] != len(cameras) or pixels.shape[2] != 2:
        raise ShapeMismatchError(f"pixels has shape {pixels.shape}, expected ({len(cameras)}, N, 2)")
    if len(cameras) < 2:
        raise InsufficientSamplesError("Triangulation needs >= 2 views")
    _check_distinct_centers(list(cameras))

    blocks = [_dlt_rows(cam.projection_matrix, pixels[i, :, 0], pixels[i, :, 1])
              for i, cam in enumerate(cameras)]
    A = np.concatenate(blocks, axis=1)  # N x 2C x 4
    scale = 1.0 / np.linalg.norm(A, axis=1, keepdims=True)
    _, s, vt = np.linalg.svd(A * scale)
    degenerate = s[:, -2] <= SINGULAR_RTOL * s[:, 0]
    if np.any(degenerate):
        worst = float(np.max(s[:, 0] / np.maximum(s[:, -2], 1e-300)))
        raise SingularityError(f"{int(degenerate.sum())} degenerate points in batch", worst)
    X = vt[:, -1, :] * scale[:, 0, :]
    points = X[:, :3] / X[:, 3:4]

    reproj = project_batch(cameras, points)
    residuals = np.sqrt(np.mean(np.sum((reproj - pixels) ** 2, axis=2), axis=0))
    return points, residuals


def lowpass_filter(signal, window: int = 5) -> np.ndarray:
    """
    Zero-phase centered moving average

    Near the edges the window shrinks symmetrically, so sample i averages
    over i - h..i + h with h = min(window // 2, i, N - 1 - i).

    Args:
        signal: N samples, scalar or vector valued (N x D)
        window: Odd window length, 1 <= window <= N

    Returns:
        np.ndarray: Filtered signal with the input's shape
    """
    data = np.asarray(signal, dtype=float)
    if data.shape[0] == 0:
        raise InsufficientSamplesError("Cannot filter an empty signal")
    n = data.shape[0]
    if window < 1 or window % 2 == 0 or window > n:
        raise ConfigError(f"Filter window must be odd and within [1, {n}], got {window}")
    flat = data.reshape(n, -1)
    csum = np.vstack([np.zeros((1, flat.shape[1])), np.cumsum(flat, axis=0)])
    idx = np.arange(n)
    half = np.minimum(window // 2, np.minimum(idx, n - 1 - idx))
    lo, hi = idx - half, idx + half + 1
    out = (csum[hi] - csum[lo]) / (hi - lo)[:, None]
    return out.reshape(data.shape)


def look_at_camera(position, target, camera_id: str, focal: float = 1000.0,
                   image_size: Tuple[int, int] = (1920, 1080)) -> CameraModel:
    """Pinhole camera at `position` looking at `target` with world z up"""
    position = np.asarray(position, dtype=float)
    forward = np.asarray(target, dtype=float) - position
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, [0.0, 0.0, 1.0])
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.vstack([right, down, forward])
    K = np.array([[focal, 0.0, image_size[0] / 2], [0.0, focal, image_size[1] / 2], [0.0, 0.0, 1.0]])
    P = K @ np.hstack([R, (-R @ position)[:, None]])
    return CameraModel(P, image_size, camera_id)


def default_camera_rig() -> List[CameraModel]:
    """Four cameras around the opponent's half of the table"""
    target = (0.0, 170.0, 90.0)
    positions = [(-320.0, 40.0, 260.0), (320.0, 40.0, 260.0),
                 (-320.0, 380.0, 260.0), (320.0, 380.0, 260.0)]
    return [look_at_camera(p, target, f"cam{i}") for i, p in enumerate(positions)]


def load_camera_rig(path: Optional[Union[str, Path]] = None) -> List[CameraModel]:
    """
    Load a camera rig JSON: {"version": "1.0", "cameras": [{"id",
    "projection_matrix", "image_size"}, ...]}; None returns the default rig
    """
    if path is None:
        return default_camera_rig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Camera rig not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"Failed to parse camera rig {path}: {e}") from e
    if data.get("version") != CAMERA_RIG_VERSION:
        raise ConfigError(f"Camera rig {path} has unsupported version {data.get('version')!r}")
    cameras = [
        CameraModel(np.asarray(c["projection_matrix"], dtype=float), tuple(c["image_size"]), c.get("id", f"cam{i}"))
        for i, c in enumerate(data.get("cameras", []))
    ]
    if len(cameras) < 2:
        raise ConfigError("A camera rig needs at least two cameras")
    return cameras
