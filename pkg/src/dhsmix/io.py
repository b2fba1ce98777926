"""Readers and writers for clouds, depth maps and PNG images.

OPC1 container layout (all little-endian)::

    bytes 0..3    magic b"OPC1"
    bytes 4..7    width  (uint32)
    bytes 8..11   height (uint32)
    then width*height records of three float64 (x, y, z), row-major;
    a record whose three values are all NaN is a missing point.

Depth maps are 16-bit PNGs in millimeters (0 = no measurement) with a 3x3
pinhole intrinsics matrix in a whitespace-separated text sidecar. They are
back-projected into the same z-up frame used for OPC1 clouds: camera x stays
x, the camera viewing axis becomes +y, and camera "down" becomes -z.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import OrganizedPointCloud, RgbImage

OPC_MAGIC = b"OPC1"
_HEADER = struct.Struct("<4sII")
INTRINSICS_SUFFIX = ".intrinsics.txt"


class FormatError(ValueError):
    """Raised when an input file does not match its declared format."""


def write_opc(path, cloud: OrganizedPointCloud) -> None:
    records = np.where(cloud.present[..., None], cloud.xyz, np.nan).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(OPC_MAGIC, cloud.width, cloud.height))
        fh.write(records.tobytes(order="C"))


def read_opc(path) -> OrganizedPointCloud:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, width, height = _HEADER.unpack_from(data)
    if magic != OPC_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + width * height * 3 * 8
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for {width}x{height}, got {len(data)}")
    points = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(height, width, 3)
    nan = np.isnan(points)
    missing = nan.all(axis=-1)
    if (nan.any(axis=-1) & ~missing).any() or not np.isfinite(points[~missing]).all():
        raise FormatError(f"{path}: partially missing or non-finite point records")
    return OrganizedPointCloud(points.astype(np.float64), ~missing)


def read_intrinsics(path) -> np.ndarray:
    try:
        k = np.loadtxt(path, dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if k.shape != (3, 3):
        raise FormatError(f"{path}: intrinsics must be 3x3, got shape {k.shape}")
    if k[0, 0] == 0 or k[1, 1] == 0:
        raise FormatError(f"{path}: zero focal length")
    return k


def intrinsics_sidecar(depth_path) -> Path:
    depth_path = Path(depth_path)
    return depth_path.with_name(depth_path.stem + INTRINSICS_SUFFIX)


def backproject_depth(depth_mm: np.ndarray, intrinsics: np.ndarray) -> OrganizedPointCloud:
    """Back-project a millimeter depth map into an organized z-up cloud."""
    depth_mm = np.asarray(depth_mm)
    if depth_mm.ndim != 2:
        raise ValueError(f"depth map must be 2D, got shape {depth_mm.shape}")
    fx, fy = intrinsics[0, 0], intrinsics[1, 1]
    cx, cy = intrinsics[0, 2], intrinsics[1, 2]
    h, w = depth_mm.shape
    v, u = np.mgrid[0:h, 0:w].astype(np.float64)
    z_cam = depth_mm.astype(np.float64) / 1000.0
    x_cam = (u - cx) * z_cam / fx
    y_cam = (v - cy) * z_cam / fy
    xyz = np.stack([x_cam, z_cam, -y_cam], axis=-1)
    return OrganizedPointCloud(xyz, depth_mm > 0)


def read_depth_cloud(depth_path, intrinsics_path=None) -> OrganizedPointCloud:
    intrinsics_path = intrinsics_path or intrinsics_sidecar(depth_path)
    with Image.open(depth_path) as im:
        if im.mode not in ("I;16", "I;16B", "I;16L", "I"):
            raise FormatError(f"{depth_path}: expected a 16-bit depth PNG, got mode {im.mode}")
        depth = np.array(im, dtype=np.int64)
    if depth.min(initial=0) < 0 or depth.max(initial=0) > 0xFFFF:
        raise FormatError(f"{depth_path}: depth values outside 16-bit range")
    return backproject_depth(depth, read_intrinsics(intrinsics_path))


def write_depth_png(path, depth_mm: np.ndarray) -> None:
    Image.fromarray(np.asarray(depth_mm, dtype=np.uint16)).save(path, format="PNG")


def read_cloud(path, intrinsics_path=None) -> OrganizedPointCloud:
    """Read an OPC1 file, or a depth PNG plus intrinsics sidecar."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == OPC_MAGIC:
        return read_opc(path)
    if head == b"\x89PNG":
        return read_depth_cloud(path, intrinsics_path)
    raise FormatError(f"{path}: neither an OPC1 container nor a PNG depth map")


def read_rgb(path) -> RgbImage:
    with Image.open(path) as im:
        return RgbImage(np.array(im.convert("RGB"), dtype=np.uint8))


def write_rgb(path, image: RgbImage | np.ndarray) -> None:
    pixels = image.pixels if isinstance(image, RgbImage) else np.asarray(image, dtype=np.uint8)
    Image.fromarray(np.ascontiguousarray(pixels), mode="RGB").save(path, format="PNG")


def write_binary_png(path, field: np.ndarray) -> None:
    """Write a boolean/0-1 field as a 1-bit PNG (True/1 -> white)."""
    Image.fromarray(np.asarray(field, dtype=bool)).save(path, format="PNG")


def read_binary_png(path) -> np.ndarray:
    """Read a two-level PNG back into a boolean field.

    Accepts 1-bit images and grayscale images using only the levels 0 and 255.
    """
    with Image.open(path) as im:
        if im.mode == "1":
            return np.array(im, dtype=bool)
        if im.mode == "L":
            arr = np.array(im)
            if np.isin(arr, (0, 255)).all():
                return arr == 255
        raise FormatError(f"{path}: not a two-level mask image (mode {im.mode})")
