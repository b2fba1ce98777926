import json

import numpy as np
import pytest

from dhsmix.dataset.categories import SUNRGBD16_NAMES
from dhsmix.geometry import OrganizedPointCloud
from dhsmix.io import write_opc, write_rgb


def random_cloud(rng: np.random.Generator, max_side=16, missing=None) -> OrganizedPointCloud:
    h = int(rng.integers(1, max_side + 1))
    w = int(rng.integers(2, max_side + 1))
    xyz = rng.uniform(-5, 5, size=(h, w, 3))
    frac = rng.uniform(0.3, 0.6) if missing is None else missing
    present = rng.random((h, w)) >= frac
    return OrganizedPointCloud(xyz, present)


def cloud_to_lists(cloud: OrganizedPointCloud):
    return [
        [tuple(float(v) for v in cloud.xyz[i, k]) if cloud.present[i, k] else None for k in range(cloud.width)]
        for i in range(cloud.height)
    ]


def staircase_cloud(width=12, height=6, step_w=3, rise=0.2, run=0.3) -> OrganizedPointCloud:
    """Rows look across a staircase: treads (horizontal) alternating with vertical risers."""
    xyz = np.zeros((height, width, 3))
    for k in range(width):
        step = k // step_w
        within = k % step_w
        xyz[:, k, 1] = 2.0 + step * run + (within * run / step_w if within else 0.0)
        xyz[:, k, 2] = step * rise
        xyz[:, k, 0] = 0.0
    for i in range(height):
        xyz[i, :, 0] = i * 0.05
    return OrganizedPointCloud(xyz, np.ones((height, width), dtype=bool))


def write_frame(root, frame_id, rng: np.random.Generator, width=40, height=30, split=None):
    """Write one synthetic RGB + OPC1 + annotation frame and return its manifest line."""
    rgb = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    v, u = np.mgrid[0:height, 0:width].astype(float)
    depth = 2.0 + 0.5 * np.sin(u / 7.0) + 0.01 * v
    xyz = np.stack([(u - width / 2) * depth / 50.0, depth, -(v - height / 2) * depth / 50.0], axis=-1)
    present = rng.random((height, width)) > 0.1
    write_rgb(root / f"{frame_id}.png", rgb)
    write_opc(root / f"{frame_id}.opc", OrganizedPointCloud(xyz, present))
    objects = []
    for _ in range(int(rng.integers(1, 5))):
        x, y = float(rng.integers(0, width - 5)), float(rng.integers(0, height - 5))
        w, h = float(rng.integers(3, 12)), float(rng.integers(3, 12))
        objects.append({"category": str(rng.choice(SUNRGBD16_NAMES)), "bbox": [x, y, w, h]})
    objects.append({"category": "not-a-category", "bbox": [1, 1, 2, 2]})
    (root / f"{frame_id}.json").write_text(json.dumps({"objects": objects}))
    fields = [frame_id, f"{frame_id}.png", f"{frame_id}.opc", f"{frame_id}.json"]
    if split:
        fields.append(split)
    return "\t".join(fields)


def write_manifest(root, n_frames, seed=0, **kwargs):
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    lines = [write_frame(root, f"frame{i:03d}", rng, **kwargs) for i in range(n_frames)]
    path = root / "manifest.tsv"
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def manifest_20(tmp_path):
    return write_manifest(tmp_path / "src", 20)


def random_scene(rng: np.random.Generator, max_dets=5, max_gts=5, max_cats=3, n_images=2):
    """Small detection scene on an integer grid, with score ties and near-threshold overlaps.

    Returns (dets, gts) as plain tuples: dets (image, category, [x, y, w, h], score),
    gts (image, category, [x, y, w, h]).
    """
    n_cats = int(rng.integers(1, max_cats + 1))
    gts = []
    for _ in range(int(rng.integers(0, max_gts + 1))):
        box = [int(rng.integers(0, 12)), int(rng.integers(0, 12)), int(rng.integers(1, 8)), int(rng.integers(1, 8))]
        gts.append((int(rng.integers(1, n_images + 1)), int(rng.integers(1, n_cats + 1)), box))
    dets = []
    for _ in range(int(rng.integers(0, max_dets + 1))):
        if gts and rng.random() < 0.7:
            image, cat, (x, y, w, h) = gts[int(rng.integers(len(gts)))]
            if rng.random() < 0.2:
                cat = int(rng.integers(1, n_cats + 1))
            box = [x + int(rng.integers(-2, 3)), y + int(rng.integers(-2, 3)),
                   max(1, w + int(rng.integers(-2, 3))), max(1, h + int(rng.integers(-2, 3)))]
        else:
            image, cat = int(rng.integers(1, n_images + 1)), int(rng.integers(1, n_cats + 1))
            box = [int(rng.integers(0, 12)), int(rng.integers(0, 12)), int(rng.integers(1, 8)), int(rng.integers(1, 8))]
        score = float(rng.choice([0.2, 0.4, 0.6, 0.8, 1.0]))
        dets.append((image, cat, box, score))
    return dets, gts, n_cats
