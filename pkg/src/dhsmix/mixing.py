"""Inter-modality mixture masks and their application to pixel-aligned image pairs.

A mask assigns every pixel to modality A (e.g. RGB) or B (e.g. DHS). Two
generators exist: a chessboard over square patches (CPPM) and a stochastic
flood fill (SFFM) whose region sizes are governed by a per-modality edge
connection probability.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field

import numba
import numpy as np
from scipy import ndimage

from .geometry import RgbImage, _frozen
from .rng import DEFAULT_SEED, SplitMix64


class Label(enum.IntEnum):
    A = 0
    B = 1


# Neighbour order is part of the reproducibility contract: clockwise from the top.
NEIGHBOR_OFFSETS = {
    4: np.array([(-1, 0), (0, 1), (1, 0), (0, -1)], dtype=np.int64),
    8: np.array(
        [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)],
        dtype=np.int64,
    ),
}


@dataclass(frozen=True)
class MixingParams:
    mode: str = "cppm"
    patch_size: int = 1
    p_a: float = 0.5
    p_b: float = 0.5
    neighborhood: int = 4
    seed: int = DEFAULT_SEED
    origin: Label = Label.A

    def __post_init__(self):
        if self.mode not in ("cppm", "sffm"):
            raise ValueError(f"mode must be 'cppm' or 'sffm', got {self.mode!r}")
        if self.patch_size < 1:
            raise ValueError(f"patch_size must be >= 1, got {self.patch_size}")
        for name in ("p_a", "p_b"):
            p = getattr(self, name)
            if not 0.0 < p <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {p}")
        if self.neighborhood not in NEIGHBOR_OFFSETS:
            raise ValueError(f"neighborhood must be 4 or 8, got {self.neighborhood}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def to_dict(self) -> dict:
        if self.mode == "cppm":
            return {"mode": "cppm", "patch_size": self.patch_size, "origin": self.origin.name}
        d = asdict(self)
        del d["patch_size"], d["origin"]
        return d


@dataclass(frozen=True, eq=False)
class MixtureMask:
    """Per-pixel modality labels, shape (height, width), values in {0 (A), 1 (B)}."""

    labels: np.ndarray
    params: MixingParams | None = field(default=None, compare=False)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ValueError(f"labels must be 2D, got shape {labels.shape}")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be 0 (A) or 1 (B)")
        object.__setattr__(self, "labels", _frozen(labels.astype(np.uint8)))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def a_fraction(self) -> float:
        return float((self.labels == Label.A).mean())

    def __eq__(self, other):
        if not isinstance(other, MixtureMask):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)


def _check_dims(width: int, height: int) -> None:
    if width < 1 or height < 1:
        raise ValueError(f"mask dimensions must be positive, got {width}x{height}")


def cppm_mask(width: int, height: int, patch_size: int = 1, origin: Label = Label.A) -> MixtureMask:
    """Chessboard of square patches; patch (0, 0) takes ``origin``."""
    _check_dims(width, height)
    params = MixingParams(mode="cppm", patch_size=patch_size, origin=Label(origin))
    rows = np.arange(height) // patch_size
    cols = np.arange(width) // patch_size
    odd = (rows[:, None] + cols[None, :]) % 2
    labels = np.where(odd == 0, int(origin), 1 - int(origin))
    return MixtureMask(labels, params)


@numba.njit(cache=True)
def _splitmix_next(state):
    state[0] += np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True)
def _uniform(state):
    return np.float64(_splitmix_next(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def _sffm_kernel(height, width, p_a, p_b, offsets, seed):
    n = height * width
    unassigned = np.uint8(255)
    labels = np.full(n, unassigned, dtype=np.uint8)
    queue = np.empty(n, dtype=np.int64)
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed
    label = np.uint8(0)
    seeded = False
    for start in range(n):
        if labels[start] != unassigned:
            continue
        if not seeded:
            label = np.uint8(0) if _uniform(state) < 0.5 else np.uint8(1)
            seeded = True
        else:
            label = np.uint8(1) - label
        p = p_a if label == 0 else p_b
        labels[start] = label
        head = 0
        tail = 1
        queue[0] = start
        while head < tail:
            idx = queue[head]
            head += 1
            r = idx // width
            c = idx % width
            for k in range(offsets.shape[0]):
                rr = r + offsets[k, 0]
                cc = c + offsets[k, 1]
                if rr < 0 or rr >= height or cc < 0 or cc >= width:
                    continue
                j = rr * width + cc
                if labels[j] != unassigned:
                    continue
                if _uniform(state) < p:
                    labels[j] = label
                    queue[tail] = j
                    tail += 1
    return labels.reshape(height, width)


def sffm_mask(
    width: int,
    height: int,
    p_a: float,
    p_b: float,
    neighborhood: int = 4,
    seed: int = DEFAULT_SEED,
) -> MixtureMask:
    """Stochastic flood fill mask.

    Pixels are scanned in row-major order. Each still-unassigned pixel seeds a
    region: the first seed's label is A when the first uniform draw is < 0.5,
    and every later seed takes the label opposite to the previous seed. The
    region grows breadth-first; each time it considers an unassigned neighbour
    it draws a fresh uniform and claims that neighbour when the draw is below
    the region label's connection probability. Randomness is SplitMix64 seeded
    with ``seed``, so the mask is a pure function of the arguments.
    """
    _check_dims(width, height)
    params = MixingParams(mode="sffm", p_a=p_a, p_b=p_b, neighborhood=neighborhood, seed=seed)
    labels = _sffm_kernel(
        height, width, float(p_a), float(p_b), NEIGHBOR_OFFSETS[neighborhood], np.uint64(seed)
    )
    return MixtureMask(labels, params)


def sffm_batch(
    width: int,
    height: int,
    count: int,
    prob_low: float = 0.1,
    prob_high: float = 0.9,
    seed: int = DEFAULT_SEED,
    neighborhood: int = 4,
) -> list[MixtureMask]:
    """Draw ``count`` SFFM masks with (p_a, p_b) uniform in [prob_low, prob_high].

    The batch generator yields, per mask, p_a, then p_b, then the mask seed.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if not 0.0 < prob_low <= prob_high <= 1.0:
        raise ValueError(f"need 0 < prob_low <= prob_high <= 1, got [{prob_low}, {prob_high}]")
    rng = SplitMix64(seed)
    masks = []
    for _ in range(count):
        p_a = rng.uniform(prob_low, prob_high)
        p_b = rng.uniform(prob_low, prob_high)
        masks.append(sffm_mask(width, height, p_a, p_b, neighborhood, rng.next_u64()))
    return masks


def generate_mask(params: MixingParams, width: int, height: int) -> MixtureMask:
    if params.mode == "cppm":
        return cppm_mask(width, height, params.patch_size, params.origin)
    return sffm_mask(width, height, params.p_a, params.p_b, params.neighborhood, params.seed)


def apply_mask(img_a, img_b, mask: MixtureMask):
    """Take each pixel verbatim from ``img_a`` (label A) or ``img_b`` (label B).

    Accepts two ``RgbImage`` or two equally shaped arrays of shape (H, W) or
    (H, W, C); the result has the same type. Values are copied, never blended.
    """
    wrap = isinstance(img_a, RgbImage)
    a = img_a.pixels if wrap else np.asarray(img_a)
    b = img_b.pixels if isinstance(img_b, RgbImage) else np.asarray(img_b)
    if a.shape != b.shape or a.dtype != b.dtype:
        raise ValueError(f"images differ: {a.shape}/{a.dtype} vs {b.shape}/{b.dtype}")
    if a.shape[:2] != mask.labels.shape:
        raise ValueError(f"mask shape {mask.labels.shape} does not match image {a.shape[:2]}")
    take_b = mask.labels.astype(bool)
    if a.ndim == 3:
        take_b = take_b[..., None]
    out = np.where(take_b, b, a)
    return RgbImage(out) if wrap else out


_STRUCTURES = {4: ndimage.generate_binary_structure(2, 1), 8: ndimage.generate_binary_structure(2, 2)}


def region_count(labels: np.ndarray, connectivity: int = 4) -> int:
    """Number of maximal same-label connected regions."""
    labels = np.asarray(labels)
    structure = _STRUCTURES[connectivity]
    total = 0
    for value in np.unique(labels):
        _, n = ndimage.label(labels == value, structure=structure)
        total += n
    return total


def mask_summary(labels: np.ndarray, connectivity: int = 4) -> dict:
    labels = np.asarray(labels)
    regions = region_count(labels, connectivity)
    return {
        "height": int(labels.shape[0]),
        "width": int(labels.shape[1]),
        "a_fraction": float((labels == Label.A).mean()),
        "region_count": regions,
        "mean_region_size": labels.size / regions,
    }
