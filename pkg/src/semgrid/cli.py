"""Command-line entry point: `semgrid simulate` and `semgrid pipeline`."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .detector import DetectionsFormatError, save_detections
from .fusion import load_hypotheses, save_hypotheses
from .grid import MapFormatError, load_map, normalize_resolution, save_map
from .pipeline import PipelineConfig, PipelineError, label_image, run_pipeline
from .placecat import scores_json
from .simulator import (FloorplanSpec, InfeasibleSpecError, NoiseSpec, apply_noise,
                        extract_training_samples, generate_floorplan, load_ground_truth,
                        save_ground_truth)
from .topometric import write_export

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2
EXIT_NO_DOORS = 3

log = logging.getLogger("semgrid")


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, flags: dict, artifacts: list[dict],
                   inputs: dict | None = None) -> Path:
    doc = {
        "command": command,
        "version": __version__,
        "numpy": np.__version__,
        "flags": flags,
        "inputs": inputs or {},
        "artifacts": sorted(artifacts, key=lambda a: a["path"]),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def _artifact(out: Path, path: Path, **extra) -> dict:
    return {"path": path.relative_to(out).as_posix(), "sha256": sha256(path), **extra}


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _spec_from_args(args, seed: int) -> FloorplanSpec:
    kw = {"seed": seed}
    for name in ("corridor_width", "room_count", "room_width", "room_depth", "doors_per_room",
                 "door_width", "leaf_angle", "furniture_count", "rotation"):
        value = getattr(args, name)
        if value is not None:
            kw[name] = tuple(value)
    if args.wall_thickness is not None:
        kw["wall_thickness"] = args.wall_thickness
    return FloorplanSpec(**kw)


def _write_patches(root: Path, samples) -> list[Path]:
    root.mkdir(parents=True, exist_ok=True)
    written = []
    labels = []
    for s in samples:
        r, c = s.patch.origin
        stem = f"r{r:05d}_c{c:05d}"
        img = np.rint(255.0 - s.patch.data * 255.0).astype(np.uint8)
        img[s.patch.unknown] = 205
        Image.fromarray(img).save(root / f"{stem}.png")
        written.append(root / f"{stem}.png")
        rec = {"patch": f"{stem}.png", "origin": [r, c], "label": s.label, "mask": None}
        if s.mask is not None:
            Image.fromarray(s.mask.astype(np.uint8) * 255).save(root / f"{stem}_mask.png")
            written.append(root / f"{stem}_mask.png")
            rec["mask"] = f"{stem}_mask.png"
        labels.append(rec)
    (root / "labels.json").write_text(json.dumps(labels, indent=1, sort_keys=True) + "\n")
    written.append(root / "labels.json")
    return written


def _simulate_one(task):
    args, seed, out = task
    spec = _spec_from_args(args, seed)
    grid, gt = generate_floorplan(spec)
    name = f"map_{seed:06d}"
    files = {}
    files["map"] = save_map(grid, out / f"{name}.yaml")
    files["map_image"] = out / f"{name}.pgm"
    noisy = apply_noise(grid, NoiseSpec(args.noise_kind, args.noise_level), seed)
    files["noisy_map"] = save_map(noisy, out / f"{name}_noisy.yaml")
    files["noisy_map_image"] = out / f"{name}_noisy.pgm"
    files["ground_truth"] = save_ground_truth(gt, out / f"{name}_gt.json")
    files["class_map"] = out / f"{name}_gt_classes.png"
    files["instance_map"] = out / f"{name}_gt_instances.png"
    records = [(kind, p) for kind, p in files.items()]
    if not args.no_patches:
        samples = extract_training_samples(noisy, gt, args.stride, seed)
        for p in _write_patches(out / "patches" / name, samples):
            records.append(("patch", p))
    return seed, [(kind, str(p)) for kind, p in records]


def cmd_simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [args.seed + i for i in range(args.count)]
    try:
        for seed in seeds:
            _spec_from_args(args, seed).validate()
        NoiseSpec(args.noise_kind, args.noise_level)
    except (InfeasibleSpecError, ValueError) as exc:
        log.error("invalid spec: %s", exc)
        return EXIT_INPUT
    tasks = [(args, s, out) for s in seeds]
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_simulate_one, tasks))
    else:
        results = [_simulate_one(t) for t in tasks]
    artifacts = []
    for seed, records in results:
        for kind, p in records:
            artifacts.append(_artifact(out, Path(p), kind=kind, seed=seed))
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "jobs", "verbose")}
    write_manifest(out, "simulate", flags, artifacts)
    log.info("wrote %d maps to %s", len(seeds), out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def _default_ground_truth(map_path: Path) -> Path:
    return map_path.with_name(map_path.stem.removesuffix("_noisy") + "_gt.json")


def cmd_pipeline(args) -> int:
    out = Path(args.out)
    map_path = Path(args.map)
    inputs = {}
    try:
        grid = load_map(map_path)
        inputs[map_path.name] = sha256(map_path)
        gt = None
        if args.backend == "oracle":
            gt_path = Path(args.ground_truth) if args.ground_truth else _default_ground_truth(map_path)
            if not gt_path.exists():
                raise FileNotFoundError(f"ground truth {gt_path} not found")
            gt = load_ground_truth(gt_path)
            inputs[gt_path.name] = sha256(gt_path)
        if args.backend == "ingest":
            if not args.detections:
                raise ValueError("the ingest backend needs --detections")
            inputs[Path(args.detections).name] = sha256(args.detections)
        hyps = None
        if args.hypotheses:
            hyps = load_hypotheses(args.hypotheses)
            inputs[Path(args.hypotheses).name] = sha256(args.hypotheses)
        noise = NoiseSpec(args.noise_kind, args.noise_level)
        cfg = PipelineConfig(backend=args.backend, confidence=args.confidence, iou=args.iou,
                             stride=args.stride, method=args.method, jobs=args.jobs)
    except (MapFormatError, DetectionsFormatError, OSError, ValueError, KeyError) as exc:
        log.error("input error: %s", exc)
        return EXIT_INPUT

    grid = apply_noise(normalize_resolution(grid), noise, args.seed)
    try:
        result = run_pipeline(grid, cfg, ground_truth=gt, detections_path=args.detections,
                              hypotheses=hyps, source=map_path.name)
    except PipelineError as exc:
        if isinstance(exc.cause, (DetectionsFormatError, OSError)):
            log.error("input error: %s", exc)
            return EXIT_INPUT
        log.error("pipeline failed: %s", exc)
        return EXIT_FAILURE

    out.mkdir(parents=True, exist_ok=True)
    written = []
    if result.boxes:
        save_detections(result.boxes, out / "detections.json")
        written.append(out / "detections.json")
    save_hypotheses(result.hypotheses, out / "hypotheses.json")
    written.append(out / "hypotheses.json")
    (out / "validation.json").write_text(result.validation.report_json())
    (out / "scores.json").write_text(scores_json(result.scores, result.no_doors))
    written += [out / "validation.json", out / "scores.json"]
    label_image(result.validation.labels.labels).save(out / "labels.png")
    written.append(out / "labels.png")
    for fmt, name in (("dot", "topometric.dot"), ("json", "topometric.json"),
                      ("image", "topometric.png")):
        written.append(write_export(result.topo, fmt, out / name))

    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "jobs", "verbose")}
    flags["map"] = map_path.name
    for key in ("detections", "ground_truth", "hypotheses"):
        if flags.get(key):
            flags[key] = Path(flags[key]).name
    write_manifest(out, "pipeline", flags, [_artifact(out, p) for p in written], inputs)

    v = result.validation
    log.info("K0=%d valid=%d rejected=%d segments=%d", v.k0, len(v.valid), len(v.rejected),
             v.labels.count)
    if not result.found_doors:
        log.warning("no doors found")
        return EXIT_NO_DOORS
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _interval(kind):
    def parse(text):
        parts = text.split(",")
        if len(parts) != 2:
            raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}")
        return [kind(p) for p in parts]
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semgrid", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate annotated floorplans and training patches",
                         parents=[common])
    sim.add_argument("--out", required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--count", type=int, default=1)
    sim.add_argument("--noise-kind", choices=("gaussian", "combined"), default="combined")
    sim.add_argument("--noise-level", type=int, default=0)
    sim.add_argument("--stride", type=int, default=8)
    sim.add_argument("--jobs", type=int, default=1)
    sim.add_argument("--no-patches", action="store_true", help="skip the patch archive")
    for name, kind in (("corridor-width", float), ("room-count", int), ("room-width", float),
                       ("room-depth", float), ("doors-per-room", int), ("door-width", float),
                       ("leaf-angle", float), ("furniture-count", int), ("rotation", float)):
        sim.add_argument(f"--{name}", type=_interval(kind), default=None, metavar="LO,HI")
    sim.add_argument("--wall-thickness", type=float, default=None)
    sim.set_defaults(func=cmd_simulate)

    pipe = sub.add_parser("pipeline", help="segment a map and build its topometric graph",
                          parents=[common])
    pipe.add_argument("--map", required=True, help="map metadata YAML")
    pipe.add_argument("--backend", choices=("baseline", "ingest", "oracle"), default="baseline")
    pipe.add_argument("--detections", help="detections file for the ingest backend")
    pipe.add_argument("--ground-truth", help="ground truth for the oracle backend "
                      "(default: <map>_gt.json next to the map)")
    pipe.add_argument("--hypotheses", help="door hypotheses checkpoint; skips detection")
    pipe.add_argument("--confidence", type=float, default=0.5)
    pipe.add_argument("--iou", type=float, default=0.7)
    pipe.add_argument("--stride", type=int, default=8)
    pipe.add_argument("--method", choices=("components", "graph"), default="components")
    pipe.add_argument("--seed", type=int, default=0)
    pipe.add_argument("--noise-kind", choices=("gaussian", "combined"), default="combined")
    pipe.add_argument("--noise-level", type=int, default=0)
    pipe.add_argument("--jobs", type=int, default=1)
    pipe.add_argument("--out", required=True)
    pipe.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
