"""Depth / Height / Signed-angle pseudo-image encoding of organized point clouds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import OrganizedPointCloud, _frozen

DEPTH_MODES = ("range", "forward")
SIGNED_ANGLE_RANGE = (-180.0, 180.0)


@dataclass(frozen=True, eq=False)
class RawChannel:
    """Unnormalized per-pixel scalar with a validity mask.

    Values at invalid pixels are unspecified and must not be read.
    """

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if values.shape != valid.shape or values.ndim != 2:
            raise ValueError(f"values {values.shape} and valid {valid.shape} must be matching 2D grids")
        if not np.isfinite(values[valid]).all():
            raise ValueError("valid pixels must carry finite values")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "valid", _frozen(valid))

    def restricted(self, valid: np.ndarray) -> "RawChannel":
        return RawChannel(self.values, self.valid & valid)


@dataclass(frozen=True, eq=False)
class PseudoImage:
    """Three unit-interval channels (depth, height, signed angle), shape (H, W, 3)."""

    data: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if data.ndim != 3 or data.shape[2] != 3 or data.shape[:2] != valid.shape:
            raise ValueError(f"data {data.shape} must be (H, W, 3) over valid {valid.shape}")
        if ((data < 0) | (data > 1)).any():
            raise ValueError("channel values must lie in [0, 1]")
        if data[~valid].any():
            raise ValueError("invalid pixels must be zero in every channel")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "valid", _frozen(valid))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def d(self) -> np.ndarray:
        return self.data[..., 0]

    @property
    def h(self) -> np.ndarray:
        return self.data[..., 1]

    @property
    def s(self) -> np.ndarray:
        return self.data[..., 2]

    def to_uint8(self) -> np.ndarray:
        """Quantize to 8 bits per channel, rounding half up."""
        return np.floor(self.data * 255.0 + 0.5).astype(np.uint8)


def depth_channel(cloud: OrganizedPointCloud, mode: str = "range") -> RawChannel:
    """Distance of each point from the sensor.

    ``mode="range"`` is the Euclidean distance from the origin; ``"forward"``
    is the coordinate along the sensor viewing axis (+y in the z-up frame),
    i.e. classic z-buffer depth.
    """
    xyz = np.where(cloud.present[..., None], cloud.xyz, 0.0)
    if mode == "range":
        values = np.sqrt(np.einsum("hwk,hwk->hw", xyz, xyz))
    elif mode == "forward":
        values = xyz[..., 1].copy()
    else:
        raise ValueError(f"unknown depth mode {mode!r}; expected one of {DEPTH_MODES}")
    return RawChannel(values, cloud.present)


def height_channel(cloud: OrganizedPointCloud) -> RawChannel:
    return RawChannel(np.where(cloud.present, cloud.xyz[..., 2], 0.0), cloud.present)


def signed_angle_channel(cloud: OrganizedPointCloud) -> RawChannel:
    """Signed elevation angle of consecutive scanline differences, in degrees.

    For pixel k of row i, with d_k = X[i, k+1] - X[i, k], the value is the angle
    between d_k and +z (0..180), negated when d_k and d_{k-1} point in opposing
    directions (negative dot product) and zeroed when they are perpendicular.
    Pixels without both neighbours, or with a zero-length difference, are invalid,
    so the first and last column are always invalid.
    """
    h, w = cloud.height, cloud.width
    values = np.zeros((h, w))
    valid = np.zeros((h, w), dtype=bool)
    if w < 3:
        return RawChannel(values, valid)

    xyz = np.where(cloud.present[..., None], cloud.xyz, 0.0)
    diff = xyz[:, 1:] - xyz[:, :-1]
    nxt, prev = diff[:, 1:], diff[:, :-1]

    present = cloud.present
    ok = present[:, :-2] & present[:, 1:-1] & present[:, 2:]
    ok &= nxt.any(axis=-1) & prev.any(axis=-1)

    # atan2 stays accurate near 0 and 180 degrees where acos does not.
    angle = np.degrees(np.arctan2(np.hypot(nxt[..., 0], nxt[..., 1]), nxt[..., 2]))
    dot = np.einsum("hwk,hwk->hw", nxt, prev)
    signed = np.sign(dot) * angle + 0.0

    values[:, 1:-1] = np.where(ok, signed, 0.0)
    valid[:, 1:-1] = ok
    return RawChannel(values, valid)


def normalize_channel(raw: RawChannel, value_range: tuple[float, float] | None = None) -> np.ndarray:
    """Map valid values into [0, 1]; invalid pixels become 0.

    Without ``value_range`` the valid values are min-max scaled per image, and a
    constant channel maps to 0.5. With ``value_range=(lo, hi)`` the map is the
    fixed affine one taking lo to 0 and hi to 1, clamped.
    """
    out = np.zeros(raw.values.shape)
    if not raw.valid.any():
        return out
    vals = raw.values[raw.valid]
    if value_range is None:
        lo, hi = vals.min(), vals.max()
        if hi == lo:
            scaled = np.full(vals.shape, 0.5)
        else:
            scaled = (vals - lo) / (hi - lo)
    else:
        lo, hi = value_range
        if not hi > lo:
            raise ValueError(f"value_range must satisfy lo < hi, got {value_range}")
        scaled = (vals - lo) / (hi - lo)
    out[raw.valid] = np.clip(scaled, 0.0, 1.0)
    return out


def encode_dhs(cloud: OrganizedPointCloud, depth_mode: str = "range") -> PseudoImage:
    """Encode a cloud as a normalized DHS pseudo-image.

    A pixel is valid only where all three raw channels are; depth and height are
    min-max scaled over exactly those pixels, the signed angle over [-180, 180].
    """
    d = depth_channel(cloud, depth_mode)
    h = height_channel(cloud)
    s = signed_angle_channel(cloud)
    valid = d.valid & h.valid & s.valid
    data = np.stack(
        [
            normalize_channel(d.restricted(valid)),
            normalize_channel(h.restricted(valid)),
            normalize_channel(s.restricted(valid), SIGNED_ANGLE_RANGE),
        ],
        axis=-1,
    )
    return PseudoImage(data, valid)
