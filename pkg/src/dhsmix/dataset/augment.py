"""Geometric augmentations that keep images and box annotations consistent.

Images may be ``RgbImage`` instances or numpy arrays of shape (H, W) or
(H, W, C); the result has the same kind. Annotations are sequences of
``Annotation(category_id, box)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np
from PIL import Image

from ..geometry import BoundingBox, RgbImage
from ..rng import DEFAULT_SEED, SplitMix64

MIN_BOX_AREA = 1.0


class Annotation(NamedTuple):
    category_id: int
    box: BoundingBox


@dataclass(frozen=True)
class AugmentationPolicy:
    flip_probability: float = 0.5
    resize_target_width: int = 1333
    resize_target_heights: tuple[int, ...] = (480, 512, 544, 576, 608, 640, 672, 704, 736, 768, 800)
    crop_size: tuple[int, int] = (384, 600)
    test_resize: tuple[int, int] = (1120, 800)
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        object.__setattr__(self, "resize_target_heights", tuple(self.resize_target_heights))
        object.__setattr__(self, "crop_size", tuple(self.crop_size))
        object.__setattr__(self, "test_resize", tuple(self.test_resize))
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ValueError(f"flip_probability must be in [0, 1], got {self.flip_probability}")
        dims = (self.resize_target_width, *self.resize_target_heights, *self.crop_size, *self.test_resize)
        if not self.resize_target_heights or min(dims) <= 0:
            raise ValueError("all policy dimensions must be positive")
        if any(d % 32 for d in self.test_resize):
            raise ValueError(f"test_resize {self.test_resize} must be divisible by 32")

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _unwrap(image):
    if isinstance(image, RgbImage):
        return image.pixels, True
    return np.asarray(image), False


def _wrap(pixels, was_rgb):
    return RgbImage(np.ascontiguousarray(pixels)) if was_rgb else pixels


def _extent(lo: float, hi: float) -> float:
    # Keep lo + extent <= hi after rounding so clipped boxes never poke out.
    ext = hi - lo
    while ext > 0 and lo + ext > hi:
        ext = math.nextafter(ext, 0.0)
    return ext


def clip_annotations(annotations, width, height, min_area=MIN_BOX_AREA) -> list[Annotation]:
    """Clip boxes to the image and drop those left with area below ``min_area``."""
    out = []
    for ann in annotations:
        b = ann.box
        x0, y0 = max(b.x, 0.0), max(b.y, 0.0)
        x1, y1 = min(b.x2, float(width)), min(b.y2, float(height))
        if x0 == b.x and y0 == b.y and x1 == b.x2 and y1 == b.y2:
            out.append(ann)
            continue
        w, h = _extent(x0, x1), _extent(y0, y1)
        if w > 0 and h > 0 and w * h >= min_area:
            out.append(Annotation(ann.category_id, BoundingBox(x0, y0, w, h)))
    return out


def horizontal_flip(image, annotations: Sequence[Annotation]):
    """Mirror about the vertical axis; a box's x becomes ``width - x - w``."""
    pixels, was_rgb = _unwrap(image)
    width = pixels.shape[1]
    flipped = [
        Annotation(a.category_id, BoundingBox(width - a.box.x - a.box.w, a.box.y, a.box.w, a.box.h))
        for a in annotations
    ]
    return _wrap(pixels[:, ::-1].copy(), was_rgb), flipped


def _resize_array(pixels: np.ndarray, width: int, height: int, interpolation: str) -> np.ndarray:
    if pixels.shape[1] == width and pixels.shape[0] == height:
        return pixels.copy()
    resample = Image.Resampling.BILINEAR if interpolation == "bilinear" else Image.Resampling.NEAREST
    if pixels.dtype == bool:
        im = Image.fromarray(pixels.astype(np.uint8) * 255)
        return np.array(im.resize((width, height), Image.Resampling.NEAREST)) > 127
    if pixels.dtype == np.uint8 and (pixels.ndim == 2 or pixels.shape[2] in (3, 4)):
        return np.array(Image.fromarray(pixels).resize((width, height), resample))
    channels = pixels[..., None] if pixels.ndim == 2 else pixels
    planes = [
        np.array(Image.fromarray(channels[..., c].astype(np.float32), mode="F").resize((width, height), resample))
        for c in range(channels.shape[2])
    ]
    out = np.stack(planes, axis=-1).astype(pixels.dtype)
    return out[..., 0] if pixels.ndim == 2 else out


def resize_scale(width: int, height: int, target_width: int, target_height: int) -> float:
    return min(target_width / width, target_height / height)


def resize_keep_ratio(image, annotations, target_width: int, target_height: int, interpolation="bilinear"):
    """Fit the image inside ``target_width x target_height`` preserving aspect ratio.

    Use ``interpolation="nearest"`` for label, mask and validity images.
    """
    if target_width <= 0 or target_height <= 0:
        raise ValueError(f"resize targets must be positive, got {target_width}x{target_height}")
    pixels, was_rgb = _unwrap(image)
    h, w = pixels.shape[:2]
    scale = resize_scale(w, h, target_width, target_height)
    new_w, new_h = max(1, int(w * scale + 0.5)), max(1, int(h * scale + 0.5))
    scaled = [
        Annotation(
            a.category_id,
            BoundingBox(a.box.x * scale, a.box.y * scale, a.box.w * scale, a.box.h * scale),
        )
        for a in annotations
    ]
    resized = _resize_array(pixels, new_w, new_h, interpolation)
    return _wrap(resized, was_rgb), clip_annotations(scaled, new_w, new_h, min_area=0.0)


def random_crop(image, annotations, crop_h: int, crop_w: int, rng: SplitMix64):
    """Crop a window with uniformly random top-left corner.

    A crop larger than the image is clamped to the image size. Boxes are
    clipped to the window and dropped when less than one square pixel remains.
    """
    pixels, was_rgb = _unwrap(image)
    h, w = pixels.shape[:2]
    crop_h, crop_w = min(crop_h, h), min(crop_w, w)
    top = rng.integers(0, h - crop_h + 1)
    left = rng.integers(0, w - crop_w + 1)
    shifted = [
        Annotation(a.category_id, BoundingBox(a.box.x - left, a.box.y - top, a.box.w, a.box.h))
        for a in annotations
    ]
    cropped = pixels[top : top + crop_h, left : left + crop_w].copy()
    return _wrap(cropped, was_rgb), clip_annotations(shifted, crop_w, crop_h)


def train_transform(image, annotations, policy: AugmentationPolicy, rng: SplitMix64, interpolation="bilinear"):
    """Training-time schedule: random flip, multi-scale resize, random crop, multi-scale resize."""
    if rng.random() < policy.flip_probability:
        image, annotations = horizontal_flip(image, annotations)
    width = policy.resize_target_width
    image, annotations = resize_keep_ratio(
        image, annotations, width, rng.choice(policy.resize_target_heights), interpolation
    )
    image, annotations = random_crop(image, annotations, *policy.crop_size, rng)
    return resize_keep_ratio(image, annotations, width, rng.choice(policy.resize_target_heights), interpolation)


def eval_transform(image, annotations, policy: AugmentationPolicy, interpolation="bilinear"):
    return resize_keep_ratio(image, annotations, *policy.test_resize, interpolation)
