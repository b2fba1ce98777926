"""Per-category average precision and subgroup means for box detections.

AP follows the COCO recipe: greedy score-ordered matching per (image,
category), then the mean of the interpolated precision at the 101 recall
levels 0.00, 0.01, ..., 1.00. Two details differ from pycocotools so that the
result is a function of the detection *set* only:

* detections with equal scores are matched in a canonical box order and
  contribute one precision/recall point per distinct score, so the input order
  never matters;
* recall levels are compared exactly (``tp * 100 >= k * n_gt``) instead of
  against a floating-point ``linspace``.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dataset.categories import CategorySet
from .geometry import BoundingBox, box_iou

COCO_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_LEVELS = 101
ZERO_GT_POLICIES = ("exclude", "zero")


class UnknownCategoryError(ValueError):
    pass


@dataclass(frozen=True)
class Detection:
    image_id: int
    category_id: int
    box: BoundingBox
    score: float

    def __post_init__(self):
        score = float(self.score)
        if not 0.0 <= score <= 1.0:
            raise ValueError(f"detection score must lie in [0, 1], got {score}")
        object.__setattr__(self, "score", score)


@dataclass(frozen=True)
class GroundTruth:
    image_id: int
    category_id: int
    box: BoundingBox


def _box_key(box: BoundingBox):
    return (box.x, box.y, box.w, box.h)


def _group(items):
    groups = defaultdict(list)
    for item in items:
        groups[(item.image_id, item.category_id)].append(item)
    return groups


def match_detections(dets: Sequence[Detection], gts: Sequence[GroundTruth], iou_threshold: float):
    """Label each detection TP or FP at one IoU threshold.

    Returns ``(matches, n_missed)`` where ``matches`` lists ``(detection, is_tp)``
    in processing order. Within each (image, category), detections go in
    descending score (equal scores in box order) and each claims the unmatched
    ground truth of highest IoU, provided that IoU reaches the threshold; IoU
    ties go to the ground truth that comes first in box order.
    """
    det_groups = _group(dets)
    gt_groups = _group(gts)
    matches = []
    n_missed = 0
    for key in sorted(set(det_groups) | set(gt_groups)):
        group_matches, missed = _match_group(det_groups.get(key, []), gt_groups.get(key, []), iou_threshold)
        matches.extend(group_matches)
        n_missed += missed
    return matches, n_missed


def _sort_dets(dets):
    return sorted(dets, key=lambda d: (-d.score, _box_key(d.box)))


def _iou_matrix(dets, gts) -> np.ndarray:
    return np.array([[box_iou(d.box, g.box) for g in gts] for d in dets], dtype=np.float64).reshape(
        len(dets), len(gts)
    )


def _match_group(dets, gts, iou_threshold, ious=None):
    dets = _sort_dets(dets)
    gts = sorted(gts, key=lambda g: _box_key(g.box))
    if ious is None:
        ious = _iou_matrix(dets, gts)
    taken = np.zeros(len(gts), dtype=bool)
    out = []
    for i, det in enumerate(dets):
        best, best_iou = -1, -1.0
        for j in range(len(gts)):
            if taken[j]:
                continue
            iou = ious[i, j]
            if iou >= iou_threshold and iou > best_iou:
                best, best_iou = j, iou
        if best >= 0:
            taken[best] = True
        out.append((det, best >= 0))
    return out, int((~taken).sum())


def average_precision(scores: Sequence[float], is_tp: Sequence[bool], n_gt: int) -> float | None:
    """101-point interpolated AP from matched detections of one category.

    Returns None when there is neither ground truth nor a detection (AP
    undefined), and 0.0 when there are detections but no ground truth.
    """
    scores = np.asarray(scores, dtype=np.float64)
    is_tp = np.asarray(is_tp, dtype=bool)
    if n_gt < 0:
        raise ValueError(f"n_gt must be >= 0, got {n_gt}")
    if n_gt == 0:
        return None if scores.size == 0 else 0.0
    if scores.size == 0:
        return 0.0
    order = np.argsort(-scores, kind="stable")
    scores, is_tp = scores[order], is_tp[order]
    tp = np.cumsum(is_tp)
    fp = np.cumsum(~is_tp)
    # One curve point per distinct score: the last position of each tie block.
    last = np.flatnonzero(np.append(scores[1:] != scores[:-1], True))
    tp, fp = tp[last], fp[last]
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    levels = np.arange(RECALL_LEVELS) * n_gt
    idx = np.searchsorted(tp * (RECALL_LEVELS - 1), levels, side="left")
    sampled = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
    return float(sampled.sum() / RECALL_LEVELS)


@dataclass(frozen=True)
class SubgroupSummary:
    name: str
    category_ids: tuple[int, ...]
    n_categories: int
    map50: float | None
    map75: float | None
    map: float | None


@dataclass
class EvalReport:
    """AP per (category id, IoU threshold) plus subgroup means.

    ``ap[cid][t]`` is None for categories with neither ground truth nor
    detections. ``zero_gt`` records how categories without ground truth enter
    the subgroup means: ``"exclude"`` leaves them out, ``"zero"`` counts them as 0.
    """

    categories: dict[int, str]
    thresholds: tuple[float, ...]
    ap: dict[int, dict[float, float | None]]
    gt_counts: dict[int, int]
    subgroups: dict[str, SubgroupSummary] = field(default_factory=dict)
    zero_gt: str = "exclude"

    def category_mean(self, cid: int, thresholds=COCO_THRESHOLDS) -> float | None:
        values = [self.ap[cid].get(t) for t in thresholds]
        if any(v is None for v in values) or not all(t in self.ap[cid] for t in thresholds):
            return None
        return float(np.mean(values))

    def to_dict(self) -> dict:
        rows = []
        for cid, name in sorted(self.categories.items()):
            rows.append(
                {
                    "category_id": cid,
                    "name": name,
                    "gt_count": self.gt_counts.get(cid, 0),
                    "ap": {f"{t:.2f}": self.ap[cid][t] for t in self.thresholds},
                }
            )
        return {
            "thresholds": list(self.thresholds),
            "zero_gt": self.zero_gt,
            "categories": rows,
            "subgroups": [
                {"name": s.name, "n_categories": s.n_categories, "mAP50": s.map50, "mAP75": s.map75, "mAP": s.map}
                for s in self.subgroups.values()
            ],
        }

    def render_table(self, subgroup: str | None = None, threshold: float = 0.5) -> str:
        """Plain-text table: one column per category (AP x100) then subgroup means."""
        names = self.categories
        cids = list(self.subgroups[subgroup].category_ids) if subgroup else sorted(names)
        header = [names[c] for c in cids] + [f"{s.name} mAP{int(round(threshold * 100))}" for s in self.subgroups.values()]
        row = [_fmt(self.ap[c].get(threshold)) for c in cids]
        for s in self.subgroups.values():
            row.append(_fmt(s.map50 if threshold == 0.5 else s.map75 if threshold == 0.75 else None))
        widths = [max(len(h), len(v)) for h, v in zip(header, row)]
        line = lambda cells: " | ".join(c.rjust(w) for c, w in zip(cells, widths))
        return "\n".join([line(header), "-+-".join("-" * w for w in widths), line(row)])


def _fmt(value):
    return "N/A" if value is None else f"{100 * value:.1f}"


def _mean(values):
    return float(np.mean(values)) if values else None


def evaluate(
    dets: Iterable[Detection],
    gts: Iterable[GroundTruth],
    categories: Mapping[int, str],
    subgroups: Sequence[CategorySet] = (),
    thresholds: Sequence[float] = COCO_THRESHOLDS,
    max_dets: int | None = None,
    zero_gt: str = "exclude",
) -> EvalReport:
    """Evaluate detections against ground truth.

    ``categories`` maps category id to name; subgroups select categories by
    name, and names absent from ``categories`` are ignored. ``max_dets`` keeps
    only the top-scoring detections per (image, category), as COCO does.
    """
    if zero_gt not in ZERO_GT_POLICIES:
        raise ValueError(f"zero_gt must be one of {ZERO_GT_POLICIES}, got {zero_gt!r}")
    dets, gts = list(dets), list(gts)
    thresholds = tuple(float(t) for t in thresholds)
    for item, kind in [(d, "detection") for d in dets] + [(g, "ground truth") for g in gts]:
        if item.category_id not in categories:
            raise UnknownCategoryError(
                f"{kind} on image {item.image_id} has unknown category id {item.category_id}"
            )

    det_groups = _group(dets)
    gt_groups = _group(gts)
    if max_dets is not None:
        det_groups = {k: _sort_dets(v)[:max_dets] for k, v in det_groups.items()}

    gt_counts = {cid: 0 for cid in categories}
    for g in gts:
        gt_counts[g.category_id] += 1

    # Per category: list of (scores, tp flags) per threshold across images.
    per_cat = {cid: {t: ([], []) for t in thresholds} for cid in categories}
    for key in sorted(set(det_groups) | set(gt_groups)):
        cid = key[1]
        d_list = _sort_dets(det_groups.get(key, []))
        g_list = sorted(gt_groups.get(key, []), key=lambda g: _box_key(g.box))
        ious = _iou_matrix(d_list, g_list)
        for t in thresholds:
            matched, _ = _match_group(d_list, g_list, t, ious)
            scores, flags = per_cat[cid][t]
            scores.extend(d.score for d, _ in matched)
            flags.extend(tp for _, tp in matched)

    ap = {
        cid: {t: average_precision(*per_cat[cid][t], gt_counts[cid]) for t in thresholds}
        for cid in categories
    }
    report = EvalReport(dict(categories), thresholds, ap, gt_counts, zero_gt=zero_gt)

    name_to_id = {name: cid for cid, name in categories.items()}
    for group in subgroups:
        cids = [name_to_id[n] for n in group if n in name_to_id]
        if zero_gt == "exclude":
            included = [c for c in cids if gt_counts[c] > 0]
        else:
            included = cids

        def at(t, included=included):
            if t not in thresholds:
                return None
            return _mean([ap[c][t] or 0.0 for c in included])

        if all(t in thresholds for t in COCO_THRESHOLDS):
            overall = _mean([float(np.mean([ap[c][t] or 0.0 for t in COCO_THRESHOLDS])) for c in included])
        else:
            overall = None
        report.subgroups[group.name] = SubgroupSummary(group.name, tuple(cids), len(included), at(0.5), at(0.75), overall)
    return report


def parse_thresholds(spec: str) -> tuple[float, ...]:
    """``"coco"`` for 0.50:0.05:0.95, otherwise a comma list such as ``"0.5,0.75"``."""
    if spec.strip().lower() == "coco":
        return COCO_THRESHOLDS
    values = tuple(float(v) for v in spec.split(",") if v.strip())
    if not values or not all(0.0 < v <= 1.0 for v in values):
        raise ValueError(f"IoU thresholds must lie in (0, 1], got {spec!r}")
    return values


def load_ground_truth(document, modality: str | None = None):
    """Ground truth, category map and image ids from a COCO document (dict or path).

    ``modality`` keeps only images whose ``modality`` field matches, which
    selects one view of each frame in documents emitted by the dataset builder.
    """
    if not isinstance(document, dict):
        document = json.loads(Path(document).read_text(encoding="utf-8"))
    images = document["images"]
    if modality is not None:
        images = [im for im in images if im.get("modality") == modality]
    image_ids = {im["id"] for im in images}
    categories = {c["id"]: c["name"] for c in document["categories"]}
    gts = [
        GroundTruth(a["image_id"], a["category_id"], BoundingBox.from_xywh(a["bbox"]))
        for a in document["annotations"]
        if a["image_id"] in image_ids
    ]
    return gts, categories, image_ids


def load_detections(results, image_ids=None) -> list[Detection]:
    """Detections from a COCO results array (list or path).

    With ``image_ids``, detections on other images are rejected.
    """
    if not isinstance(results, list):
        results = json.loads(Path(results).read_text(encoding="utf-8"))
    dets = []
    for i, r in enumerate(results):
        if image_ids is not None and r["image_id"] not in image_ids:
            raise ValueError(f"detection {i} references image {r['image_id']} absent from ground truth")
        dets.append(Detection(r["image_id"], r["category_id"], BoundingBox.from_xywh(r["bbox"]), r["score"]))
    return dets


def detections_to_results(dets: Iterable[Detection]) -> list[dict]:
    return [
        {"image_id": d.image_id, "category_id": d.category_id, "bbox": d.box.to_list(), "score": d.score}
        for d in dets
    ]
