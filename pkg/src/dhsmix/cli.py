"""Command-line entry point: convert, mix, build, eval and stats subcommands."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, logs
from .dataset.augment import AugmentationPolicy
from .dataset.build import ModalityPlan, build_dataset, read_manifest, split_from_records, split_manifest
from .dataset.categories import largest_subgroup, load_subgroups
from .dhs import DEPTH_MODES, encode_dhs
from .evaluation import ZERO_GT_POLICIES, evaluate, load_detections, load_ground_truth, parse_thresholds
from .io import (
    FormatError,
    intrinsics_sidecar,
    read_binary_png,
    read_cloud,
    read_rgb,
    write_binary_png,
    write_rgb,
)
from .mixing import Label, MixingParams, apply_mask, generate_mask, mask_summary, sffm_batch
from .rng import DEFAULT_SEED, derive_seed

log = logging.getLogger("dhsmix")

PARALLELISM_ENV = "DHSMIX_PARALLELISM"


def _default_parallelism() -> int:
    try:
        return max(1, int(os.environ.get(PARALLELISM_ENV, "1")))
    except ValueError:
        return 1


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def _probability(text: str) -> float:
    value = float(text)
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(f"probability must lie in (0, 1], got {text}")
    return value


def _size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like WIDTHxHEIGHT, got {text}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError(f"size must be positive, got {text}")
    return w, h


def _pmap(fn, items, parallelism):
    if parallelism > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


# convert ---------------------------------------------------------------------


def _collect_clouds(inputs) -> list[Path]:
    paths = []
    for item in map(Path, inputs):
        if item.is_dir():
            for p in sorted(item.iterdir()):
                if p.suffix.lower() == ".opc" or (p.suffix.lower() == ".png" and intrinsics_sidecar(p).exists()):
                    paths.append(p)
        else:
            paths.append(item)
    return paths


def cmd_convert(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = _collect_clouds(args.inputs)

    def convert_one(path: Path):
        try:
            cloud = read_cloud(path, args.intrinsics)
        except (OSError, FormatError, ValueError) as exc:
            return path, str(exc)
        image = encode_dhs(cloud, args.depth_mode)
        write_rgb(out / f"{path.stem}_dhs.png", image.to_uint8())
        if args.save_valid:
            write_binary_png(out / f"{path.stem}_valid.png", image.valid)
        return path, None

    failures = []
    for path, error in _pmap(convert_one, paths, args.parallelism):
        if error:
            log.error("conversion failed", extra={"path": str(path), "error": error})
            failures.append(str(path))
    log.info("convert summary", extra={"inputs": len(paths), "converted": len(paths) - len(failures), "failed": failures})
    return 1 if failures or not paths else 0


# mix -------------------------------------------------------------------------


def cmd_mix(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if (args.rgb is None) != (args.dhs is None):
        log.error("--rgb and --dhs must be given together")
        return 2
    if args.rgb is not None:
        img_a, img_b = read_rgb(args.rgb), read_rgb(args.dhs)
        if (img_a.width, img_a.height) != (img_b.width, img_b.height):
            log.error("image sizes differ", extra={"rgb": [img_a.width, img_a.height], "dhs": [img_b.width, img_b.height]})
            return 1
        width, height = img_a.width, img_a.height
    elif args.size is not None:
        img_a = img_b = None
        width, height = args.size
    else:
        log.error("give --rgb/--dhs images or --size WIDTHxHEIGHT")
        return 2

    if args.mode == "cppm":
        if args.count > 1:
            log.warning("cppm masks are deterministic; writing a single mask", extra={"count": args.count})
        params = MixingParams(mode="cppm", patch_size=args.patch_size, origin=Label[args.origin.upper()])
        masks = [generate_mask(params, width, height)]
    elif args.p_a is None and args.p_b is None:
        masks = sffm_batch(width, height, args.count, args.prob_low, args.prob_high, args.seed, args.neighborhood)
    else:
        p_a = args.p_a if args.p_a is not None else args.p_b
        p_b = args.p_b if args.p_b is not None else args.p_a
        masks = [
            generate_mask(
                MixingParams("sffm", p_a=p_a, p_b=p_b, neighborhood=args.neighborhood, seed=derive_seed(args.seed, f"mask{i}")),
                width,
                height,
            )
            for i in range(args.count)
        ]

    records = []
    save_masks = args.save_masks or img_a is None
    if save_masks:
        (out / "masks").mkdir(exist_ok=True)
    for i, mask in enumerate(masks):
        record = {"index": i, "params": mask.params.to_dict(), "a_fraction": mask.a_fraction()}
        if img_a is not None:
            name = f"mix_{i:03d}.png"
            write_rgb(out / name, apply_mask(img_a, img_b, mask))
            record["image"] = name
        if save_masks:
            name = f"masks/mask_{i:03d}.png"
            write_binary_png(out / name, mask.labels)
            record["mask"] = name
        records.append(record)
    (out / "mix.json").write_text(json.dumps(records, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    log.info("mix summary", extra={"masks": len(masks), "mode": args.mode})
    return 0


# build -----------------------------------------------------------------------


def cmd_build(args) -> int:
    frames = read_manifest(args.manifest)
    if args.split != "all":
        if args.split_spec:
            spec = json.loads(Path(args.split_spec).read_text(encoding="utf-8"))
        else:
            spec = split_from_records(frames)
        train, val = split_manifest(frames, spec)
        frames = train if args.split == "train" else val
    groups = load_subgroups(args.categories_config)
    categories = groups[args.subgroup] if args.subgroup else largest_subgroup(groups)
    plan = ModalityPlan.parse(
        args.modalities,
        sffm_count=args.sffm_count,
        patch_size=args.patch_size,
        sffm_prob_range=(args.prob_low, args.prob_high),
        save_masks=args.save_masks,
    )
    result = build_dataset(
        frames,
        args.out,
        plan,
        AugmentationPolicy(seed=args.seed),
        categories,
        seed=args.seed,
        depth_mode=args.depth_mode,
        parallelism=args.parallelism,
    )
    return 0 if result.ok else 1


# eval ------------------------------------------------------------------------


def cmd_eval(args) -> int:
    gts, categories, image_ids = load_ground_truth(args.gt, args.modality)
    dets = load_detections(args.dets, image_ids)
    groups = load_subgroups(args.categories_config)
    if args.subgroup == "all":
        selected = list(groups.values())
    else:
        if args.subgroup not in groups:
            log.error("subgroup not configured; supply --categories-config", extra={"subgroup": args.subgroup})
            return 2
        selected = [groups[args.subgroup]]
    report = evaluate(
        dets,
        gts,
        categories,
        selected,
        parse_thresholds(args.thresholds),
        max_dets=args.max_dets,
        zero_gt=args.zero_gt,
    )
    table = report.render_table(selected[0].name if len(selected) == 1 else None)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report.to_dict(), indent=1) + "\n", encoding="utf-8")
        (out / "report.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    for s in report.subgroups.values():
        log.info("subgroup result", extra={"subgroup": s.name, "mAP50": s.map50, "mAP75": s.map75, "mAP": s.map})
    return 0


# stats -----------------------------------------------------------------------


def cmd_stats(args) -> int:
    paths = sorted(p for p in Path(args.masks).iterdir() if p.suffix.lower() == ".png")
    rows, failures = [], []
    for path in paths:
        try:
            field = read_binary_png(path)
        except (OSError, FormatError) as exc:
            log.warning("skipping non-mask image", extra={"path": str(path), "error": str(exc)})
            failures.append(path.name)
            continue
        # White (True) pixels are label B.
        rows.append(dict(file=path.name, **mask_summary(field.astype(np.uint8), args.connectivity)))
    summary = {"masks": rows, "skipped": failures, "connectivity": args.connectivity}
    if rows:
        for key in ("a_fraction", "region_count", "mean_region_size"):
            values = np.array([r[key] for r in rows], dtype=float)
            summary[key] = {
                "mean": float(values.mean()),
                "std": float(values.std()),
                "min": float(values.min()),
                "max": float(values.max()),
            }
    text = json.dumps(summary, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    log.info("stats summary", extra={"masks": len(rows), "skipped": len(failures)})
    return 1 if failures else 0


# parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=DEFAULT_SEED, help=f"root RNG seed (default {DEFAULT_SEED})")
    common.add_argument(
        "--parallelism",
        type=int,
        default=_default_parallelism(),
        help=f"worker threads (default from ${PARALLELISM_ENV}, else 1)",
    )
    common.add_argument("--log-level", default="info", choices=["debug", "info", "warning", "error"])
    common.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    parser = argparse.ArgumentParser(prog="dhsmix", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", parents=[common], help="encode point clouds as DHS PNGs")
    p.add_argument("inputs", nargs="+", help="OPC1 files, depth PNGs with sidecar intrinsics, or directories")
    p.add_argument("--out", required=True)
    p.add_argument("--depth-mode", choices=DEPTH_MODES, default="range")
    p.add_argument("--intrinsics", help="intrinsics file for depth PNG inputs (default: <stem>.intrinsics.txt)")
    p.add_argument("--save-valid", action="store_true", help="also write the validity mask")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("mix", parents=[common], help="generate mixing masks and mixed images")
    p.add_argument("--rgb", help="first-modality image (label A)")
    p.add_argument("--dhs", help="second-modality image (label B)")
    p.add_argument("--size", type=_size, help="WIDTHxHEIGHT when generating masks only")
    p.add_argument("--mode", choices=["cppm", "sffm"], default="cppm")
    p.add_argument("--patch-size", type=int, default=1)
    p.add_argument("--origin", choices=["a", "b"], default="a", help="label of the top-left CPPM patch")
    p.add_argument("--p-a", type=_probability)
    p.add_argument("--p-b", type=_probability)
    p.add_argument("--prob-low", type=_probability, default=0.1)
    p.add_argument("--prob-high", type=_probability, default=0.9)
    p.add_argument("--neighborhood", type=int, choices=[4, 8], default=4)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--save-masks", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("build", parents=[common], help="build a dataset and COCO annotation document")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=["train", "val", "all"], default="all")
    p.add_argument("--split-spec", help='JSON {"train": [...], "val": [...]}; default: manifest fifth column')
    p.add_argument("--modalities", default="rgb,dhs")
    p.add_argument("--sffm-count", type=int, default=6)
    p.add_argument("--patch-size", type=int, default=1)
    p.add_argument("--prob-low", type=_probability, default=0.1)
    p.add_argument("--prob-high", type=_probability, default=0.9)
    p.add_argument("--save-masks", action="store_true")
    p.add_argument("--depth-mode", choices=DEPTH_MODES, default="range")
    p.add_argument("--categories-config", help="JSON with extra subgroups such as sunrgbd66/sunrgbd79")
    p.add_argument("--subgroup", help="category set for annotations (default: largest configured)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("eval", parents=[common], help="compute AP / mAP per category subgroup")
    p.add_argument("--gt", required=True, help="COCO annotation document")
    p.add_argument("--dets", required=True, help="COCO results array")
    p.add_argument("--subgroup", default="sunrgbd16", help="sunrgbd10|sunrgbd16|sunrgbd66|sunrgbd79|all")
    p.add_argument("--categories-config")
    p.add_argument("--thresholds", default="coco", help="0.5, 0.75, a comma list, or coco")
    p.add_argument("--max-dets", type=int)
    p.add_argument("--zero-gt", choices=ZERO_GT_POLICIES, default="exclude")
    p.add_argument("--modality", help="evaluate only images of this modality (rgb, dhs, cppm, ...)")
    p.add_argument("--out", help="directory for report.json and report.txt")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", parents=[common], help="summarize a directory of mask PNGs")
    p.add_argument("masks")
    p.add_argument("--connectivity", type=int, choices=[4, 8], default=4)
    p.add_argument("--out", help="JSON output file (default stdout)")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logs.configure(args.log_level)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        log.error("command failed", extra={"command": args.command, "error": str(exc)})
        return 1


if __name__ == "__main__":
    sys.exit(main())
