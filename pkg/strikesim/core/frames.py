"""
Spatial frame, table geometry and strike regions

The frame is centered on the table: x across the width, y along the length
with the opponent on +y, z up from the playing surface. Everything is in cm.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


@dataclass(frozen=True)
class SpatialFrame:
    origin: tuple = (0.0, 0.0, 0.0)
    x_axis: tuple = (1.0, 0.0, 0.0)
    y_axis: tuple = (0.0, 1.0, 0.0)
    z_axis: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        basis = np.array([self.x_axis, self.y_axis, self.z_axis], dtype=float)
        if not np.allclose(basis @ basis.T, np.eye(3), atol=1e-12):
            raise ValueError("Frame axes must be orthonormal")
        if np.linalg.det(basis) <= 0:
            raise ValueError("Frame must be right-handed")


@dataclass(frozen=True)
class TableGeometry:
    width: float = 152.5
    length: float = 274.0
    strike_plane_y: float = -140.0
    region_boundary: float = 25.0
    net_y: float = 0.0

    def __post_init__(self):
        if self.width <= 0 or self.length <= 0:
            raise ValueError("Table dimensions must be positive")
        if not self.strike_plane_y < -self.length / 2:
            raise ValueError("Strike plane must lie behind the robot end of the table")

    def on_table(self, x: float, y: float) -> bool:
        return abs(x) <= self.width / 2 and abs(y) <= self.length / 2


TABLE_FRAME = SpatialFrame()
DEFAULT_TABLE = TableGeometry()
STRIKE_PLANE_Y = DEFAULT_TABLE.strike_plane_y


class Region(str, Enum):
    LEFT = "Left"
    CENTER = "Center"
    RIGHT = "Right"


# Row order used by every metric table
REGION_ORDER = [Region.RIGHT, Region.CENTER, Region.LEFT]


def classify_region(x: float, table: TableGeometry = DEFAULT_TABLE) -> Region:
    """
    Classify a strike x-coordinate into a table region

    Args:
        x: Strike point x (cm)
        table: Table geometry holding the region boundary

    Returns:
        Region: Left below -boundary, Right above +boundary, Center otherwise
    """
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"Cannot classify non-finite strike x: {x}")
    if x < -table.region_boundary:
        return Region.LEFT
    if x > table.region_boundary:
        return Region.RIGHT
    return Region.CENTER
