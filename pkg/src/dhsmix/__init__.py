"""Point-cloud pseudo-images, inter-modality mixing, dataset building and AP evaluation."""

__version__ = "0.1.0"

from .dhs import PseudoImage, RawChannel, encode_dhs
from .geometry import BoundingBox, OrganizedPointCloud, RgbImage, box_iou
from .mixing import Label, MixingParams, MixtureMask, apply_mask, cppm_mask, sffm_batch, sffm_mask

__all__ = [
    "BoundingBox",
    "Label",
    "MixingParams",
    "MixtureMask",
    "OrganizedPointCloud",
    "PseudoImage",
    "RawChannel",
    "RgbImage",
    "apply_mask",
    "box_iou",
    "cppm_mask",
    "encode_dhs",
    "sffm_batch",
    "sffm_mask",
]
