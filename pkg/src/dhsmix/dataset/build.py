"""Materialize RGB / DHS / mixed training images with a COCO-format annotation document."""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from ..dhs import encode_dhs
from ..geometry import BoundingBox, RgbImage
from ..io import FormatError, read_cloud, read_rgb, write_binary_png, write_rgb
from ..mixing import apply_mask, cppm_mask, sffm_batch
from ..rng import derive_seed
from .augment import AugmentationPolicy, Annotation, clip_annotations
from .categories import SUNRGBD16, CategorySet

log = logging.getLogger(__name__)

SUNRGBD_TRAIN_SIZE = 2666
SUNRGBD_VAL_SIZE = 2619
MODALITIES = ("rgb", "dhs", "cppm", "sffm")


class FrameError(Exception):
    """A frame cannot be turned into dataset images."""


@dataclass(frozen=True)
class FrameRecord:
    """One manifest line: where a frame's inputs live on disk."""

    frame_id: str
    rgb_path: Path
    cloud_path: Path
    annotation_path: Path
    split: str | None = None


@dataclass(frozen=True, eq=False)
class FramePair:
    frame_id: str
    rgb: RgbImage
    cloud: object
    annotations: tuple[Annotation, ...]


@dataclass(frozen=True)
class ModalityPlan:
    rgb: bool = True
    dhs: bool = True
    cppm: bool = False
    sffm_count: int = 0
    patch_size: int = 1
    sffm_prob_range: tuple[float, float] = (0.1, 0.9)
    save_masks: bool = False

    def __post_init__(self):
        if self.sffm_count < 0:
            raise ValueError(f"sffm_count must be >= 0, got {self.sffm_count}")
        if self.patch_size < 1:
            raise ValueError(f"patch_size must be >= 1, got {self.patch_size}")

    @classmethod
    def parse(cls, spec: str, sffm_count: int = 6, **kwargs) -> "ModalityPlan":
        """Parse a comma list such as ``"rgb,dhs,cppm"``."""
        names = [n.strip().lower() for n in spec.split(",") if n.strip()]
        unknown = sorted(set(names) - set(MODALITIES))
        if unknown:
            raise ValueError(f"unknown modalities {unknown}; choose from {MODALITIES}")
        return cls(
            rgb="rgb" in names,
            dhs="dhs" in names,
            cppm="cppm" in names,
            sffm_count=sffm_count if "sffm" in names else 0,
            **kwargs,
        )

    def image_count(self) -> int:
        return int(self.rgb) + int(self.dhs) + int(self.cppm) + self.sffm_count

    def names(self) -> list[str]:
        out = [m for m in ("rgb", "dhs", "cppm") if getattr(self, m)]
        return out + [f"sffm{i}" for i in range(self.sffm_count)]


def read_manifest(path) -> list[FrameRecord]:
    """Parse a manifest of ``frame_id rgb cloud annotations [split]`` lines.

    Fields are tab-separated when the line contains a tab, else whitespace
    separated. Blank lines and ``#`` comments are ignored; relative paths are
    resolved against the manifest's directory.
    """
    path = Path(path)
    base = path.parent
    records = []
    seen = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) not in (4, 5):
            raise ValueError(f"{path}:{lineno}: expected 4 or 5 fields, got {len(parts)}")
        frame_id = parts[0]
        if frame_id in seen:
            raise ValueError(f"{path}:{lineno}: duplicate frame id {frame_id!r}")
        seen.add(frame_id)
        rgb, cloud, ann = (base / p for p in parts[1:4])
        records.append(FrameRecord(frame_id, rgb, cloud, ann, parts[4] if len(parts) == 5 else None))
    return records


def split_manifest(frames: Sequence[FrameRecord], split_spec: Mapping[str, Sequence[str] | None]):
    """Partition frames into (train, val) lists, in manifest order.

    ``split_spec`` maps ``"train"`` and/or ``"val"`` to frame-id lists. A missing
    or ``None`` train list means every frame not listed under val.
    """
    known = {f.frame_id for f in frames}
    val_ids = set(split_spec.get("val") or ())
    train_list = split_spec.get("train")
    train_ids = known - val_ids if train_list is None else set(train_list)
    overlap = train_ids & val_ids
    if overlap:
        raise ValueError(f"{len(overlap)} frame ids appear in both splits, e.g. {sorted(overlap)[:5]}")
    unknown = (train_ids | val_ids) - known
    if unknown:
        raise ValueError(f"{len(unknown)} split ids are not in the manifest, e.g. {sorted(unknown)[:5]}")
    train = [f for f in frames if f.frame_id in train_ids]
    val = [f for f in frames if f.frame_id in val_ids]
    log.info("split manifest", extra={"train": len(train), "val": len(val), "unassigned": len(known) - len(train) - len(val)})
    return train, val


def split_from_records(frames: Sequence[FrameRecord]) -> dict[str, list[str]]:
    """Split spec from the optional fifth manifest column; unlabelled frames go to train."""
    return {"val": [f.frame_id for f in frames if f.split == "val"]}


def read_annotations(path, categories: CategorySet, width: int, height: int) -> tuple[list[Annotation], int]:
    """Load a frame's boxes; returns (annotations kept, count dropped).

    The file holds a JSON list (or ``{"objects": [...]}``) of
    ``{"category": name, "bbox": [x, y, w, h]}``. Objects whose category is not
    in ``categories`` are dropped, and boxes are clipped to the image.
    """
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(raw, dict):
        raw = raw.get("objects", raw.get("annotations", []))
    ids = categories.category_ids()
    kept = []
    dropped = 0
    for obj in raw:
        name = obj.get("category")
        if name not in ids:
            dropped += 1
            continue
        try:
            box = BoundingBox.from_xywh(obj["bbox"])
        except (KeyError, ValueError, TypeError) as exc:
            raise FormatError(f"{path}: bad bbox {obj.get('bbox')!r}: {exc}") from exc
        kept.append(Annotation(ids[name], box))
    clipped = clip_annotations(kept, width, height)
    return clipped, dropped + len(kept) - len(clipped)


def load_frame(record: FrameRecord, categories: CategorySet) -> FramePair:
    try:
        rgb = read_rgb(record.rgb_path)
        cloud = read_cloud(record.cloud_path)
    except (OSError, FormatError, ValueError) as exc:
        raise FrameError(f"unreadable inputs: {exc}") from exc
    if (rgb.width, rgb.height) != (cloud.width, cloud.height):
        raise FrameError(
            f"rgb {rgb.width}x{rgb.height} and cloud {cloud.width}x{cloud.height} are not pixel-aligned"
        )
    try:
        anns, _ = read_annotations(record.annotation_path, categories, rgb.width, rgb.height)
    except (OSError, ValueError) as exc:
        raise FrameError(f"unreadable annotations: {exc}") from exc
    return FramePair(record.frame_id, rgb, cloud, tuple(anns))


def _safe_name(frame_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", frame_id)


@dataclass
class _FrameOutput:
    frame_id: str
    width: int
    height: int
    annotations: tuple[Annotation, ...]
    images: list[dict] = field(default_factory=list)


def _render_frame(record, categories, plan, seed, depth_mode, out_dir: Path) -> _FrameOutput:
    frame = load_frame(record, categories)
    rgb = frame.rgb.pixels
    dhs = encode_dhs(frame.cloud, depth_mode).to_uint8()
    stem = _safe_name(frame.frame_id)
    result = _FrameOutput(frame.frame_id, frame.rgb.width, frame.rgb.height, frame.annotations)

    def emit(modality, pixels, mixing=None, mask=None):
        file_name = f"images/{stem}_{modality}.png"
        write_rgb(out_dir / file_name, pixels)
        entry = {"file_name": file_name, "modality": modality, "mixing": mixing}
        if mask is not None and plan.save_masks:
            mask_name = f"masks/{stem}_{modality}.png"
            write_binary_png(out_dir / mask_name, mask.labels)
            entry["mask_file"] = mask_name
        result.images.append(entry)

    if plan.rgb:
        emit("rgb", rgb)
    if plan.dhs:
        emit("dhs", dhs, {"depth_mode": depth_mode})
    w, h = result.width, result.height
    if plan.cppm:
        mask = cppm_mask(w, h, plan.patch_size)
        emit("cppm", apply_mask(rgb, dhs, mask), mask.params.to_dict(), mask)
    if plan.sffm_count:
        lo, hi = plan.sffm_prob_range
        batch_seed = derive_seed(seed, f"{frame.frame_id}/sffm")
        for i, mask in enumerate(sffm_batch(w, h, plan.sffm_count, lo, hi, batch_seed)):
            mixing = dict(mask.params.to_dict(), batch_seed=batch_seed, index=i)
            emit(f"sffm{i}", apply_mask(rgb, dhs, mask), mixing, mask)
    return result


@dataclass
class BuildResult:
    document: dict
    images_written: int
    skipped: list[tuple[str, str]]

    @property
    def ok(self) -> bool:
        return not self.skipped


def coco_document(outputs: Sequence[_FrameOutput], categories: CategorySet, info: dict) -> dict:
    images, annotations = [], []
    for out in outputs:
        for entry in out.images:
            image_id = len(images) + 1
            images.append(
                {
                    "id": image_id,
                    "file_name": entry["file_name"],
                    "width": out.width,
                    "height": out.height,
                    "frame_id": out.frame_id,
                    "modality": entry["modality"],
                    "mixing": entry["mixing"],
                    **({"mask_file": entry["mask_file"]} if "mask_file" in entry else {}),
                }
            )
            for ann in out.annotations:
                annotations.append(
                    {
                        "id": len(annotations) + 1,
                        "image_id": image_id,
                        "category_id": ann.category_id,
                        "bbox": ann.box.to_list(),
                        "area": ann.box.area,
                        "iscrowd": 0,
                    }
                )
    cats = [{"id": cid, "name": name} for name, cid in categories.category_ids().items()]
    return {"info": info, "images": images, "annotations": annotations, "categories": cats}


def write_document(path, document: dict) -> None:
    text = json.dumps(document, sort_keys=True, ensure_ascii=False, indent=1)
    Path(path).write_text(text + "\n", encoding="utf-8")


def build_dataset(
    frames: Sequence[FrameRecord],
    out_dir,
    plan: ModalityPlan = ModalityPlan(),
    policy: AugmentationPolicy = AugmentationPolicy(),
    categories: CategorySet = SUNRGBD16,
    seed: int | None = None,
    depth_mode: str = "range",
    parallelism: int = 1,
    document_name: str = "annotations.json",
) -> BuildResult:
    """Write per-frame modality images and one merged annotation document.

    Only base modality images are materialized; flips, resizes and crops are
    left to the training loader and ``policy`` is recorded in the document.
    Unreadable or misaligned frames are skipped and reported in the result.
    Output bytes depend only on the inputs and the seed, never on parallelism.
    """
    seed = policy.seed if seed is None else seed
    stems = [_safe_name(f.frame_id) for f in frames]
    if len(set(stems)) != len(stems):
        raise ValueError("frame ids collide after file-name sanitizing")
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    if plan.save_masks and (plan.cppm or plan.sffm_count):
        (out_dir / "masks").mkdir(exist_ok=True)

    def work(record):
        try:
            return _render_frame(record, categories, plan, seed, depth_mode, out_dir)
        except FrameError as exc:
            return exc

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(work, frames))
    else:
        results = [work(r) for r in frames]

    outputs, skipped = [], []
    for record, res in zip(frames, results):
        if isinstance(res, FrameError):
            log.warning("skipping frame", extra={"frame_id": record.frame_id, "reason": str(res)})
            skipped.append((record.frame_id, str(res)))
        else:
            outputs.append(res)

    info = {
        "seed": seed,
        "modalities": plan.names(),
        "depth_mode": depth_mode,
        "augmentation_policy": policy.to_dict(),
        "frames": len(outputs),
        "skipped_frames": [fid for fid, _ in skipped],
    }
    document = coco_document(outputs, categories, info)
    write_document(out_dir / document_name, document)
    n_images = len(document["images"])
    log.info("dataset built", extra={"images": n_images, "frames": len(outputs), "skipped": len(skipped)})
    return BuildResult(document, n_images, skipped)


def check_document(document: dict) -> list[str]:
    """Referential-integrity problems in a COCO detection document (empty if sound)."""
    problems = []
    for key in ("images", "annotations", "categories"):
        if not isinstance(document.get(key), list):
            problems.append(f"missing top-level array {key!r}")
    if problems:
        return problems
    image_ids = [im["id"] for im in document["images"]]
    cat_ids = [c["id"] for c in document["categories"]]
    ann_ids = [a["id"] for a in document["annotations"]]
    for name, ids in (("image", image_ids), ("category", cat_ids), ("annotation", ann_ids)):
        if len(set(ids)) != len(ids):
            problems.append(f"duplicate {name} ids")
    sizes = {im["id"]: (im["width"], im["height"]) for im in document["images"]}
    cats = set(cat_ids)
    for a in document["annotations"]:
        if a["image_id"] not in sizes:
            problems.append(f"annotation {a['id']} references missing image {a['image_id']}")
            continue
        if a["category_id"] not in cats:
            problems.append(f"annotation {a['id']} references missing category {a['category_id']}")
        x, y, w, h = a["bbox"]
        iw, ih = sizes[a["image_id"]]
        if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > iw or y + h > ih:
            problems.append(f"annotation {a['id']} box {a['bbox']} outside image {iw}x{ih}")
    return problems
