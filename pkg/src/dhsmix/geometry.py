"""Spatial value types shared by the encoder, the mixer and the dataset builder.

All types are frozen after construction. Array fields are stored as read-only
numpy views so a shared instance cannot be mutated through its arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    if arr.flags.writeable:
        arr = arr.copy()
        arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class OrganizedPointCloud:
    """3D points laid out on the sensor grid, one optional point per pixel.

    ``xyz`` has shape (height, width, 3) in meters; ``present`` marks pixels
    where the sensor returned a measurement. Absent pixels hold NaN in ``xyz``
    and must never be read as coordinates. Rows are scanlines, traversed left
    to right, and +z is the up axis.
    """

    xyz: np.ndarray
    present: np.ndarray

    def __post_init__(self):
        xyz = np.asarray(self.xyz, dtype=np.float64)
        present = np.asarray(self.present, dtype=bool)
        if xyz.ndim != 3 or xyz.shape[2] != 3:
            raise ValueError(f"xyz must have shape (H, W, 3), got {xyz.shape}")
        if present.shape != xyz.shape[:2]:
            raise ValueError(f"present mask shape {present.shape} does not match grid {xyz.shape[:2]}")
        if not np.isfinite(xyz[present]).all():
            raise ValueError("present points must have finite coordinates")
        xyz = xyz.copy()
        xyz[~present] = np.nan
        object.__setattr__(self, "xyz", _frozen(xyz))
        object.__setattr__(self, "present", _frozen(present))

    @classmethod
    def from_points(cls, points: np.ndarray) -> "OrganizedPointCloud":
        """Build from an (H, W, 3) array where an all-NaN record is a missing point."""
        points = np.asarray(points, dtype=np.float64)
        missing = np.isnan(points).all(axis=-1)
        return cls(np.where(missing[..., None], np.nan, points), ~missing)

    @property
    def height(self) -> int:
        return self.xyz.shape[0]

    @property
    def width(self) -> int:
        return self.xyz.shape[1]

    def __eq__(self, other):
        if not isinstance(other, OrganizedPointCloud):
            return NotImplemented
        return (
            np.array_equal(self.present, other.present)
            and np.array_equal(self.xyz[self.present], other.xyz[other.present])
        )


@dataclass(frozen=True, eq=False)
class RgbImage:
    """8-bit, 3-channel image of shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError(f"pixels must have shape (H, W, 3), got {pixels.shape}")
        if pixels.dtype != np.uint8:
            raise TypeError(f"pixels must be uint8, got {pixels.dtype}")
        object.__setattr__(self, "pixels", _frozen(pixels))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other):
        if not isinstance(other, RgbImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box as top-left corner plus extent, in continuous pixel units."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"box {name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box extent must be positive, got w={self.w}, h={self.h}")

    @classmethod
    def from_xywh(cls, xywh) -> "BoundingBox":
        x, y, w, h = xywh
        return cls(x, y, w, h)

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]


def _overlap(a0: float, aw: float, b0: float, bw: float) -> float:
    # Containment returns the inner extent as stored, so identical boxes give exactly 1.
    if a0 >= b0 and a0 + aw <= b0 + bw:
        return aw
    if b0 >= a0 and b0 + bw <= a0 + aw:
        return bw
    return max(0.0, min(a0 + aw, b0 + bw) - max(a0, b0))


def box_iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0.0 for disjoint boxes."""
    iw = _overlap(a.x, a.w, b.x, b.w)
    ih = _overlap(a.y, a.h, b.y, b.h)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return min(1.0, inter / union)
