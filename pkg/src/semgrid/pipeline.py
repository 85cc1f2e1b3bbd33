"""End-to-end run: normalize, detect, fuse, validate, categorize, build the topometric map."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import detector, fusion, placecat, topometric, validation
from .grid import (DEFAULT_STRIDE, FREE_THRESH, OCC_THRESH, OccupancyGrid, binarize,
                   normalize_resolution, sliding_windows)
from .segmentation import MIN_SEGMENT_SIZE


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class PipelineConfig:
    backend: str = "baseline"
    confidence: float = detector.DEFAULT_THRESHOLD
    iou: float = fusion.IOU_THRESHOLD
    stride: int = DEFAULT_STRIDE
    method: str = "components"
    min_size: int = MIN_SEGMENT_SIZE
    occ_thresh: float = OCC_THRESH
    free_thresh: float = FREE_THRESH
    squared_spin: bool = True
    jobs: int = 1


@dataclass
class PipelineResult:
    grid: OccupancyGrid
    boxes: list
    hypotheses: list
    validation: validation.ValidationResult
    scores: list
    no_doors: bool
    topo: topometric.TopometricMap
    extra: dict = field(default_factory=dict)

    @property
    def found_doors(self) -> bool:
        return bool(self.validation.valid)


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, PipelineError):
            raise PipelineError(self.name, exc) from exc
        return False


def run_pipeline(grid: OccupancyGrid, cfg: PipelineConfig = PipelineConfig(), *,
                 ground_truth=None, detections_path=None, hypotheses=None,
                 extra_hypotheses=(), source: str = "") -> PipelineResult:
    """Run every stage on `grid`.

    `hypotheses` substitutes the detection and fusion stages with a prepared
    list; `extra_hypotheses` are cell arrays appended as further candidates.
    """
    with _Stage("normalize"):
        g = normalize_resolution(grid)
    boxes = []
    if hypotheses is None:
        with _Stage("windows"):
            patches = sliding_windows(g, cfg.stride)
        with _Stage("detect"):
            boxes = detector.detect(patches, detector.DetectorConfig(cfg.confidence, cfg.backend),
                                    ground_truth=ground_truth, detections_path=detections_path,
                                    jobs=cfg.jobs)
        with _Stage("filter"):
            kept = detector.filter_detections(boxes, cfg.confidence)
        with _Stage("fuse"):
            hyps = fusion.build_hypotheses(kept, g.cells.shape, cfg.iou)
    else:
        hyps = list(hypotheses)
    with _Stage("fuse"):
        next_id = max((h.id for h in hyps), default=-1) + 1
        for k, cells in enumerate(extra_hypotheses):
            hyps.append(fusion.make_hypothesis(next_id + k, cells, g.cells.shape))
    with _Stage("validate"):
        b = binarize(g, cfg.occ_thresh, cfg.free_thresh)
        result = validation.validate(b, hyps, cfg.method, cfg.min_size, intensity=g.cells)
    with _Stage("categorize"):
        scores, no_doors = placecat.categorize(result.labels, result.adjacency, cfg.squared_spin)
    with _Stage("topometric"):
        topo = topometric.build(result.labels, result.valid, result.adjacency, scores,
                                g.resolution, g.origin, source)
    return PipelineResult(g, boxes, result.hypotheses, result, scores, no_doors, topo)


def label_image(labels: np.ndarray):
    """Paletted image of a segment label map, colors cycling over a fixed table."""
    from PIL import Image

    rng = np.random.default_rng(12345)
    table = rng.integers(60, 256, size=(256, 3)).astype(np.uint8)
    table[0] = 0
    codes = np.where(labels > 0, (labels - 1) % 255 + 1, 0).astype(np.uint8)
    img = Image.fromarray(codes, mode="P")
    img.putpalette(table.ravel().tolist())
    return img
