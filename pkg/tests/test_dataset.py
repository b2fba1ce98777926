import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dhsmix.dataset import (
    SUNRGBD10,
    SUNRGBD16,
    Annotation,
    AugmentationPolicy,
    CategorySet,
    FrameError,
    FrameRecord,
    ModalityPlan,
    build_dataset,
    check_document,
    clip_annotations,
    eval_transform,
    horizontal_flip,
    load_frame,
    load_subgroups,
    random_crop,
    read_manifest,
    resize_keep_ratio,
    split_from_records,
    split_manifest,
    train_transform,
)
from dhsmix.dataset.build import SUNRGBD_TRAIN_SIZE, SUNRGBD_VAL_SIZE
from dhsmix.geometry import BoundingBox, OrganizedPointCloud, RgbImage, box_iou
from dhsmix.io import write_opc, write_rgb
from dhsmix.rng import SplitMix64

from conftest import write_manifest


def records(ids):
    return [FrameRecord(i, Path(f"{i}.png"), Path(f"{i}.opc"), Path(f"{i}.json")) for i in ids]


def ann(x, y, w, h, cid=1):
    return Annotation(cid, BoundingBox(x, y, w, h))


# splits ----------------------------------------------------------------------


def test_split_counts_match_official_sizes():
    ids = [f"f{i:05d}" for i in range(SUNRGBD_TRAIN_SIZE + SUNRGBD_VAL_SIZE)]
    frames = records(ids)
    train, val = split_manifest(frames, {"train": ids[:SUNRGBD_TRAIN_SIZE], "val": ids[SUNRGBD_TRAIN_SIZE:]})
    assert (len(train), len(val)) == (2666, 2619)
    assert [f.frame_id for f in train] == ids[:SUNRGBD_TRAIN_SIZE]


def test_empty_val_puts_everything_in_train():
    frames = records(["a", "b", "c"])
    train, val = split_manifest(frames, {"val": []})
    assert [f.frame_id for f in train] == ["a", "b", "c"] and val == []


def test_split_rejects_overlap_and_unknown_ids():
    frames = records(["a", "b", "c"])
    with pytest.raises(ValueError, match="both"):
        split_manifest(frames, {"train": ["a", "b"], "val": ["b"]})
    with pytest.raises(ValueError, match="not in the manifest"):
        split_manifest(frames, {"val": ["z"]})


def test_manifest_parsing(tmp_path):
    (tmp_path / "m.txt").write_text("# comment\n\na a.png a.opc a.json\nb\tb.png\tb.opc\tb.json\tval\n")
    frames = read_manifest(tmp_path / "m.txt")
    assert [f.frame_id for f in frames] == ["a", "b"]
    assert frames[0].rgb_path == tmp_path / "a.png"
    assert split_from_records(frames) == {"val": ["b"]}
    (tmp_path / "dup.txt").write_text("a 1 2 3\na 1 2 3\n")
    with pytest.raises(ValueError, match="duplicate"):
        read_manifest(tmp_path / "dup.txt")
    (tmp_path / "short.txt").write_text("a 1 2\n")
    with pytest.raises(ValueError):
        read_manifest(tmp_path / "short.txt")


# categories ------------------------------------------------------------------


def test_builtin_categories():
    assert len(SUNRGBD16) == 16 and len(SUNRGBD10) == 10
    assert SUNRGBD10.issubset(SUNRGBD16)
    assert SUNRGBD16.category_ids()["bed"] == 1
    assert SUNRGBD16.category_ids()["sink"] == 16
    with pytest.raises(ValueError):
        CategorySet("dup", ("bed", "bed"))


def test_subgroup_config(tmp_path):
    names66 = list(SUNRGBD16.categories) + [f"extra{i}" for i in range(50)]
    cfg = tmp_path / "groups.json"
    cfg.write_text(json.dumps({"sunrgbd66": names66, "sunrgbd79": names66 + [f"more{i}" for i in range(13)]}))
    groups = load_subgroups(cfg)
    assert [len(groups[n]) for n in ("sunrgbd10", "sunrgbd16", "sunrgbd66", "sunrgbd79")] == [10, 16, 66, 79]
    cfg.write_text(json.dumps({"sunrgbd66": ["bed"] * 1 + [f"x{i}" for i in range(65)]}))
    with pytest.raises(ValueError, match="not contained"):
        load_subgroups(cfg)


# augmentation ----------------------------------------------------------------


def test_flip_examples():
    img = np.zeros((40, 100, 3), dtype=np.uint8)
    _, (a,) = horizontal_flip(img, [ann(10, 5, 20, 30)])
    assert a.box.to_list() == [70, 5, 20, 30]
    _, (c,) = horizontal_flip(img, [ann(40, 0, 20, 10)])
    assert c.box.to_list() == [40, 0, 20, 10]


def test_flip_mirrors_pixels():
    img = np.arange(12, dtype=np.uint8).reshape(2, 6)
    out, _ = horizontal_flip(RgbImage(np.stack([img] * 3, -1)), [])
    assert (out.pixels[..., 0] == img[:, ::-1]).all()


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 50), st.integers(2, 60), st.data())
def test_flip_involution(h, w, data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2**31)))
    img = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
    anns = []
    for _ in range(data.draw(st.integers(0, 4))):
        bw = data.draw(st.integers(1, w))
        bh = data.draw(st.integers(1, h))
        anns.append(ann(data.draw(st.integers(0, w - bw)), data.draw(st.integers(0, h - bh)), bw, bh))
    img2, anns2 = horizontal_flip(*horizontal_flip(img, anns))
    assert (img2 == img).all()
    assert anns2 == anns


def test_resize_scale_example():
    img = np.zeros((530, 730, 3), dtype=np.uint8)
    out, (a,) = resize_keep_ratio(img, [ann(0, 0, 530, 530)], 1120, 800)
    scale = 800 / 530
    assert out.shape[:2] == (800, int(730 * scale + 0.5))
    assert a.box.w == pytest.approx(530 * scale, abs=1e-9)


def test_resize_identity_and_box_scaling():
    img = np.random.default_rng(0).integers(0, 256, (10, 20, 3), dtype=np.uint8)
    out, anns = resize_keep_ratio(img, [ann(1, 2, 3, 4)], 20, 10)
    assert (out == img).all() and anns[0].box.to_list() == [1, 2, 3, 4]
    _, (a,) = resize_keep_ratio(np.zeros((40, 40, 3), np.uint8), [ann(10, 10, 10, 10)], 80, 80)
    assert a.box.to_list() == [20, 20, 20, 20]
    with pytest.raises(ValueError):
        resize_keep_ratio(img, [], 0, 10)


def test_resize_nearest_keeps_label_values():
    labels = np.random.default_rng(1).integers(0, 2, (7, 9)).astype(np.uint8)
    out, _ = resize_keep_ratio(labels, [], 31, 31, interpolation="nearest")
    assert set(np.unique(out)) <= {0, 1}
    valid = np.random.default_rng(2).random((7, 9)) > 0.5
    out_v, _ = resize_keep_ratio(valid, [], 20, 20)
    assert out_v.dtype == bool


def test_resize_preserves_iou():
    rng = np.random.default_rng(4)
    for _ in range(200):
        a = BoundingBox(*rng.uniform(1, 20, 2), *rng.uniform(1, 20, 2))
        b = BoundingBox(*rng.uniform(1, 20, 2), *rng.uniform(1, 20, 2))
        _, (ra, rb) = resize_keep_ratio(np.zeros((50, 60), np.uint8), [Annotation(1, a), Annotation(1, b)], 97, 73)
        assert box_iou(ra.box, rb.box) == pytest.approx(box_iou(a, b), abs=1e-9)


def test_crop_examples():
    img = np.random.default_rng(0).integers(0, 256, (20, 30, 3), dtype=np.uint8)
    out, anns = random_crop(img, [ann(2, 3, 4, 5)], 20, 30, SplitMix64(1))
    assert (out == img).all() and anns == [ann(2, 3, 4, 5)]
    # oversized crops clamp to the image
    out, _ = random_crop(img, [], 100, 100, SplitMix64(1))
    assert out.shape == img.shape


def test_crop_drops_and_clips():
    # 10x10 crop of a 10x20 image: the left offset is random, so check both extremes
    img = np.zeros((10, 20), np.uint8)
    seen = set()
    for s in range(200):
        rng = SplitMix64(s)
        probe = SplitMix64(s)
        probe.integers(0, 1)
        left = probe.integers(0, 11)
        seen.add(left)
        _, anns = random_crop(img, [ann(0, 0, 4, 4), ann(left + 5, 2, 10, 4)], 10, 10, rng)
        boxes = [a.box.to_list() for a in anns]
        if left >= 4:
            assert [0, 0, 4, 4] not in boxes and len(boxes) == 1
        assert [5, 2, 5, 4] in boxes
    assert {0, 10} <= seen


def test_clip_drops_sub_pixel_boxes():
    kept = clip_annotations([ann(9.5, 0, 5, 1.5), ann(2, 2, 3, 3), ann(-5, 0, 6, 10)], 10, 10)
    assert [a.box.to_list() for a in kept] == [[2, 2, 3, 3], [0, 0, 1, 10]]


def test_policy_validation():
    AugmentationPolicy()
    with pytest.raises(ValueError):
        AugmentationPolicy(flip_probability=1.5)
    with pytest.raises(ValueError):
        AugmentationPolicy(test_resize=(1100, 800))
    with pytest.raises(ValueError):
        AugmentationPolicy(crop_size=(0, 10))


def test_train_and_eval_transforms_keep_boxes_inside():
    policy = AugmentationPolicy()
    img = np.random.default_rng(0).integers(0, 256, (530, 730, 3), dtype=np.uint8)
    boxes = [ann(100, 100, 200, 150), ann(600, 400, 120, 120, 2)]
    for s in range(5):
        out, anns = train_transform(img, boxes, policy, SplitMix64(s))
        h, w = out.shape[:2]
        assert w <= 1333 and h <= 800
        for a in anns:
            assert a.box.x >= 0 and a.box.y >= 0 and a.box.x2 <= w and a.box.y2 <= h
    out, anns = eval_transform(img, boxes, policy)
    assert out.shape[:2] == (800, 1102)
    assert len(anns) == 2


# build -----------------------------------------------------------------------


def test_modality_plan():
    plan = ModalityPlan.parse("rgb,dhs,cppm")
    assert plan.image_count() == 3 and plan.names() == ["rgb", "dhs", "cppm"]
    assert ModalityPlan.parse("sffm", sffm_count=6).names() == [f"sffm{i}" for i in range(6)]
    with pytest.raises(ValueError):
        ModalityPlan.parse("rgb,lidar")


def test_build_counts_and_integrity(tmp_path):
    frames = read_manifest(write_manifest(tmp_path / "src", 4))
    plan = ModalityPlan.parse("rgb,dhs,cppm,sffm", sffm_count=2, save_masks=True)
    result = build_dataset(frames, tmp_path / "out", plan, seed=3)
    doc = result.document
    assert result.ok and result.images_written == 4 * 5
    assert check_document(doc) == []
    assert {im["modality"] for im in doc["images"]} == {"rgb", "dhs", "cppm", "sffm0", "sffm1"}
    for im in doc["images"]:
        assert (tmp_path / "out" / im["file_name"]).exists()
    assert sum("mask_file" in im for im in doc["images"]) == 4 * 3
    assert json.loads((tmp_path / "out" / "annotations.json").read_text()) == doc
    assert all(a["category_id"] in range(1, 17) for a in doc["annotations"])


def test_build_rgb_only_and_empty(tmp_path):
    frames = read_manifest(write_manifest(tmp_path / "src", 2))
    res = build_dataset(frames, tmp_path / "rgb", ModalityPlan.parse("rgb"))
    assert res.images_written == 2
    empty = build_dataset([], tmp_path / "empty", ModalityPlan())
    assert empty.document["images"] == [] and empty.document["annotations"] == []
    assert len(empty.document["categories"]) == 16
    assert check_document(empty.document) == []


def test_build_mixed_images_are_pixel_aligned(tmp_path):
    from dhsmix.io import read_rgb

    frames = read_manifest(write_manifest(tmp_path / "src", 1))
    build_dataset(frames, tmp_path / "out", ModalityPlan.parse("rgb,dhs,cppm"))
    rgb = read_rgb(tmp_path / "out/images/frame000_rgb.png").pixels
    dhs = read_rgb(tmp_path / "out/images/frame000_dhs.png").pixels
    mix = read_rgb(tmp_path / "out/images/frame000_cppm.png").pixels
    checker = (np.add.outer(np.arange(rgb.shape[0]), np.arange(rgb.shape[1])) % 2).astype(bool)
    assert (mix[~checker] == rgb[~checker]).all()
    assert (mix[checker] == dhs[checker]).all()


def test_build_skips_bad_frames(tmp_path):
    src = tmp_path / "src"
    frames = read_manifest(write_manifest(src, 3))
    (src / "frame001.opc").write_bytes(b"garbage")
    write_opc(src / "frame002.opc", OrganizedPointCloud(np.zeros((5, 5, 3)), np.ones((5, 5), bool)))
    res = build_dataset(frames, tmp_path / "out", ModalityPlan.parse("rgb,dhs"))
    assert not res.ok
    assert [fid for fid, _ in res.skipped] == ["frame001", "frame002"]
    assert res.images_written == 2
    assert res.document["info"]["skipped_frames"] == ["frame001", "frame002"]
    with pytest.raises(FrameError, match="aligned"):
        load_frame(frames[2], SUNRGBD16)


def test_build_parallelism_does_not_change_bytes(tmp_path):
    frames = read_manifest(write_manifest(tmp_path / "src", 5))
    plan = ModalityPlan.parse("rgb,dhs,sffm", sffm_count=2)
    build_dataset(frames, tmp_path / "a", plan, seed=9)
    build_dataset(frames, tmp_path / "b", plan, seed=9, parallelism=4)
    for p in sorted((tmp_path / "a").rglob("*")):
        if p.is_file():
            assert p.read_bytes() == (tmp_path / "b" / p.relative_to(tmp_path / "a")).read_bytes()


def test_check_document_reports_problems():
    doc = {
        "images": [{"id": 1, "width": 10, "height": 10}],
        "annotations": [
            {"id": 1, "image_id": 2, "category_id": 1, "bbox": [0, 0, 1, 1]},
            {"id": 2, "image_id": 1, "category_id": 9, "bbox": [5, 5, 10, 1]},
        ],
        "categories": [{"id": 1, "name": "bed"}],
    }
    problems = check_document(doc)
    assert len(problems) == 3
    assert check_document({}) != []


def test_unknown_annotation_categories_dropped(tmp_path):
    frames = read_manifest(write_manifest(tmp_path / "src", 1))
    frame = load_frame(frames[0], SUNRGBD16)
    raw = json.loads(frames[0].annotation_path.read_text())["objects"]
    assert len(frame.annotations) == len(raw) - 1


def test_rgb_writes_are_deterministic(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, (4, 4, 3), dtype=np.uint8)
    write_rgb(tmp_path / "a.png", img)
    write_rgb(tmp_path / "b.png", img)
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
