from .augment import (
    Annotation,
    AugmentationPolicy,
    clip_annotations,
    eval_transform,
    horizontal_flip,
    random_crop,
    resize_keep_ratio,
    train_transform,
)
from .build import (
    SUNRGBD_TRAIN_SIZE,
    SUNRGBD_VAL_SIZE,
    BuildResult,
    FrameError,
    FramePair,
    FrameRecord,
    ModalityPlan,
    build_dataset,
    check_document,
    load_frame,
    read_manifest,
    split_from_records,
    split_manifest,
)
from .categories import SUNRGBD10, SUNRGBD16, CategorySet, load_subgroups

__all__ = [
    "Annotation",
    "AugmentationPolicy",
    "clip_annotations",
    "eval_transform",
    "horizontal_flip",
    "random_crop",
    "resize_keep_ratio",
    "train_transform",
    "SUNRGBD_TRAIN_SIZE",
    "SUNRGBD_VAL_SIZE",
    "BuildResult",
    "FrameError",
    "FramePair",
    "FrameRecord",
    "ModalityPlan",
    "build_dataset",
    "check_document",
    "load_frame",
    "read_manifest",
    "split_from_records",
    "split_manifest",
    "SUNRGBD10",
    "SUNRGBD16",
    "CategorySet",
    "load_subgroups",
]
