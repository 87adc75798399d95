"""Depth observations to ground-clearance statistics and spatial sentences.

Angle convention inside this module: azimuths are measured in degrees
relative to the agent heading, positive to the RIGHT (the camera x axis
points right). The frontal views therefore sit at -30 (left), 0 and +30
(right), and the five bins run left to right from -60 to +60.

Panoramic view indices follow the agent convention instead: view ``i`` is
rotated ``30 * (i - 1)`` degrees counter-clockwise (to the left).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

#: Marks a column without any valid depth sample.
NO_DATA = math.nan

BIN_CENTERS = (-60.0, -30.0, 0.0, 30.0, 60.0)
BIN_EDGES = (-60.0, -36.0, -12.0, 12.0, 36.0, 60.0)
FRONTAL_DIRECTIONS = (
    "turn left 60°",
    "turn left 30°",
    "go forward",
    "turn right 30°",
    "turn right 60°",
)
FRONTAL_OFFSETS = (-30.0, 0.0, 30.0)


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    hfov: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigurationError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ConfigurationError("principal point outside the image")
        implied = math.degrees(2 * math.atan(self.width / (2 * self.fx)))
        if abs(implied - self.hfov) > 0.5:
            raise ConfigurationError(
                f"hfov {self.hfov} inconsistent with fx/width (implies {implied:.3f})"
            )

    @classmethod
    def from_fov(cls, width: int, height: int, hfov: float) -> "CameraIntrinsics":
        """Square pixels, principal point at the image centre.

        Pixel ``j`` has coordinate ``j``, so the centre sits at ``(w - 1) / 2``.
        """
        fx = width / (2 * math.tan(math.radians(hfov) / 2))
        return cls(fx, fx, (width - 1) / 2, (height - 1) / 2, width, height, hfov)

    def column_angles(self) -> np.ndarray:
        """Camera-frame azimuth of each column in degrees, positive right."""
        j = np.arange(self.width, dtype=float)
        return np.degrees(np.arctan((j - self.cx) / self.fx))


@dataclass(frozen=True)
class DepthFrame:
    width: int
    height: int
    depths: np.ndarray
    heading_offset: float = 0.0

    def __post_init__(self):
        d = np.asarray(self.depths, dtype=float)
        if d.shape != (self.height, self.width):
            raise ConfigurationError(
                f"depth grid shape {d.shape} != ({self.height}, {self.width})"
            )
        if not np.all(np.isfinite(d)):
            raise ConfigurationError("depth grid must be finite; mark invalid pixels with 0")
        object.__setattr__(self, "depths", d)

    @property
    def valid(self) -> np.ndarray:
        return self.depths > 0


@dataclass(frozen=True)
class PointGrid:
    """Bottom-half point grid; ``present`` masks pixels that produced a point."""

    points: np.ndarray  # (rows, cols, 3)
    present: np.ndarray  # (rows, cols) bool

    @property
    def rows(self) -> int:
        return self.points.shape[0]

    @property
    def cols(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class ColumnDistances:
    heading_offset: float
    per_column: np.ndarray  # NaN where a column has no data


@dataclass(frozen=True)
class DirectionalBin:
    center_angle: float
    mean_distance: Optional[float]
    point_count: int


@dataclass(frozen=True)
class Thresholds:
    d_close: float = 0.5
    d_mid: float = 4.0

    def __post_init__(self):
        if not 0 < self.d_close < self.d_mid:
            raise ConfigurationError("thresholds must satisfy 0 < d_close < d_mid")


class DescriptionMode(str, Enum):
    FRONTAL5 = "Frontal5"
    PANORAMIC12 = "Panoramic12"


@dataclass(frozen=True)
class SpatialDescriptionSet:
    mode: DescriptionMode
    entries: tuple  # ((angle_or_index, text), ...)

    def __post_init__(self):
        expected = 5 if self.mode is DescriptionMode.FRONTAL5 else 12
        if len(self.entries) != expected:
            raise ConfigurationError(
                f"{self.mode.value} set needs {expected} entries, got {len(self.entries)}"
            )

    @property
    def texts(self) -> tuple:
        return tuple(text for _, text in self.entries)


def crop_bounds(size: int, fraction: float) -> tuple[int, int]:
    """Half-open index range of a centred crop covering ``fraction`` of ``size``."""
    keep = max(1, int(round(size * fraction)))
    lo = (size - keep) // 2
    return lo, lo + keep


def project_depth(
    frame: DepthFrame, intr: CameraIntrinsics, center_crop_fraction: float = 0.8
) -> PointGrid:
    """Back-project the bottom half of a depth frame through the pinhole model.

    Only pixels inside the centred crop window with positive depth yield
    points. The returned grid always spans ``height // 2`` rows by ``width``
    columns; everything else is marked absent.
    """
    if (frame.width, frame.height) != (intr.width, intr.height):
        raise ConfigurationError(
            f"frame {frame.width}x{frame.height} does not match intrinsics "
            f"{intr.width}x{intr.height}"
        )
    if not 0 < center_crop_fraction <= 1:
        raise ConfigurationError("center_crop_fraction must be in (0, 1]")

    h, w = frame.height, frame.width
    rows = h // 2
    v = np.arange(h - rows, h, dtype=float)[:, None]
    u = np.arange(w, dtype=float)[None, :]
    d = frame.depths[h - rows :, :]

    c0, c1 = crop_bounds(w, center_crop_fraction)
    r0, r1 = crop_bounds(h, center_crop_fraction)
    in_crop = np.zeros((rows, w), dtype=bool)
    vv = np.arange(h - rows, h)
    row_ok = (vv >= r0) & (vv < r1)
    in_crop[row_ok, c0:c1] = True
    present = in_crop & (d > 0)

    x = (u - intr.cx) * d / intr.fx
    y = (v - intr.cy) * d / intr.fy
    points = np.stack([x, y, d], axis=-1)
    points[~present] = np.nan
    return PointGrid(points=points, present=present)


def column_ground_distances(grid: PointGrid, heading_offset: float = 0.0) -> ColumnDistances:
    """Minimum ground-plane range ``sqrt(x^2 + z^2)`` down each column."""
    if grid.cols < 1:
        raise ConfigurationError("point grid has no columns")
    ground = np.hypot(grid.points[..., 0], grid.points[..., 2])
    ground = np.where(grid.present, ground, np.inf)
    per_column = ground.min(axis=0) if grid.rows else np.full(grid.cols, np.inf)
    per_column = np.where(np.isfinite(per_column), per_column, NO_DATA)
    return ColumnDistances(heading_offset=heading_offset, per_column=per_column)


def bin_index(azimuth: float) -> Optional[int]:
    """Bin holding ``azimuth``; intervals are half-open except the last."""
    if azimuth < BIN_EDGES[0] or azimuth > BIN_EDGES[-1]:
        return None
    for b in range(5):
        if azimuth < BIN_EDGES[b + 1]:
            return b
    return 4


def column_azimuths(cd: ColumnDistances, intr: CameraIntrinsics) -> np.ndarray:
    return cd.heading_offset + intr.column_angles()


def bin_frontal(views: Sequence[ColumnDistances], intr: CameraIntrinsics) -> list[DirectionalBin]:
    """Aggregate the left/front/right column distances into five direction bins."""
    if len(views) != 3:
        raise ConfigurationError(f"expected 3 frontal views, got {len(views)}")
    sums = [0.0] * 5
    counts = [0] * 5
    for view in views:
        if len(view.per_column) != intr.width:
            raise ConfigurationError("column count does not match intrinsics width")
        azimuths = column_azimuths(view, intr)
        for az, dist in zip(azimuths, view.per_column):
            b = bin_index(float(az))
            if b is None:
                logger.debug("column at azimuth %.2f outside the frontal span, dropped", az)
                continue
            if math.isnan(dist):
                continue
            sums[b] += float(dist)
            counts[b] += 1
    return [
        DirectionalBin(
            center_angle=BIN_CENTERS[b],
            mean_distance=sums[b] / counts[b] if counts[b] else None,
            point_count=counts[b],
        )
        for b in range(5)
    ]


def describe(direction: str, distance: Optional[float], th: Thresholds) -> str:
    if distance is None or math.isnan(distance):
        return f"If you {direction}, there is no depth reading"
    if distance < th.d_close:
        return f"If you {direction}, there is a very close obstacle"
    if distance < th.d_mid:
        return f"If you {direction}, obstacle appears at {distance:.1f} meters"
    return f"If you {direction}, path is clear for moving forward in {distance:.1f} meters"


def render_frontal_text(bins: Sequence[DirectionalBin], th: Thresholds) -> SpatialDescriptionSet:
    if len(bins) != 5:
        raise ConfigurationError(f"expected 5 bins, got {len(bins)}")
    entries = []
    for b, direction in zip(bins, FRONTAL_DIRECTIONS):
        dist = b.mean_distance if b.point_count > 0 else None
        entries.append((b.center_angle, describe(direction, dist, th)))
    return SpatialDescriptionSet(DescriptionMode.FRONTAL5, tuple(entries))


def panoramic_column_range(width: int) -> tuple[int, int]:
    """Central half of the image: ``[64, 192)`` at the standard width of 256."""
    return width // 4, width - width // 4


def panoramic_view_distance(cd: ColumnDistances, col_range: Optional[tuple[int, int]] = None) -> Optional[float]:
    """Mean column distance over ``[lo, hi)``; ``None`` if no column has data."""
    lo, hi = col_range if col_range is not None else panoramic_column_range(len(cd.per_column))
    if not 0 <= lo < hi <= len(cd.per_column):
        raise ConfigurationError(f"bad column range [{lo}, {hi})")
    seg = cd.per_column[lo:hi]
    seg = seg[~np.isnan(seg)]
    if seg.size == 0:
        return None
    return float(seg.mean())


def view_angle(view_index: int) -> int:
    """Counter-clockwise rotation of panoramic view ``view_index`` (1..12)."""
    if not isinstance(view_index, (int, np.integer)) or not 1 <= view_index <= 12:
        raise ValueError(f"panoramic view index must be in 1..12, got {view_index!r}")
    return 30 * (int(view_index) - 1)


def direction_label(view_index: int) -> str:
    theta = view_angle(view_index)
    if theta == 0:
        return "go forward"
    if theta < 180:
        return f"turn left {theta}°"
    if theta == 180:
        return "turn around"
    return f"turn right {360 - theta}°"


def render_panoramic_text(means: Sequence[Optional[float]], th: Thresholds) -> SpatialDescriptionSet:
    if len(means) != 12:
        raise ConfigurationError(f"expected 12 view means, got {len(means)}")
    entries = tuple(
        (i, describe(direction_label(i), means[i - 1], th)) for i in range(1, 13)
    )
    return SpatialDescriptionSet(DescriptionMode.PANORAMIC12, entries)
