"""Detection clustering, mask fusion, MBR approximation and merge splitting."""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .detector import DetectionBox, rle_decode, rle_encode
from .geometry import RotatedRect, as_cells, mask_from_cells, min_area_rect, union_cells
from .segmentation import UnionFind, label_components

IOU_THRESHOLD = 0.7
MAX_AREA_RATIO = 4.0 / 3.0
MAX_SPLIT_DEPTH = 4
HYPOTHESES_VERSION = 1
STATES = ("candidate", "valid", "rejected")


def _bounds(box):
    if isinstance(box, DetectionBox):
        return box.bounds
    r0, c0, r1, c1 = box
    return int(r0), int(c0), int(r1), int(c1)


def iou(a, b) -> float:
    """Intersection over union of two axis-aligned boxes given as (r0, c0, r1, c1), ends exclusive."""
    ar0, ac0, ar1, ac1 = _bounds(a)
    br0, bc0, br1, bc1 = _bounds(b)
    area_a = (ar1 - ar0) * (ac1 - ac0)
    area_b = (br1 - br0) * (bc1 - bc0)
    if area_a <= 0 or area_b <= 0:
        raise ValueError("zero-area box")
    ih = max(0, min(ar1, br1) - max(ar0, br0))
    iw = max(0, min(ac1, bc1) - max(ac0, bc0))
    inter = ih * iw
    return inter / (area_a + area_b - inter)


@dataclass
class DetectionCluster:
    members: list[DetectionBox]

    @property
    def seed(self) -> DetectionBox:
        return self.members[0]

    @property
    def confidence(self) -> float:
        return max(b.confidence for b in self.members)


def cluster(boxes, threshold: float = IOU_THRESHOLD) -> list[DetectionCluster]:
    """Greedy seeding by descending confidence; ties broken by window origin."""
    order = sorted(boxes, key=lambda b: (-b.confidence, b.origin[0], b.origin[1]))
    assigned = [False] * len(order)
    clusters = []
    for i, seed in enumerate(order):
        if assigned[i]:
            continue
        assigned[i] = True
        members = [seed]
        for j in range(i + 1, len(order)):
            if not assigned[j] and iou(seed, order[j]) > threshold:
                assigned[j] = True
                members.append(order[j])
        clusters.append(DetectionCluster(members))
    return clusters


def fuse_masks(c: DetectionCluster) -> np.ndarray:
    """Pixelwise OR of member masks, as map cells."""
    parts = []
    for b in c.members:
        if b.mask is None:
            raise ValueError(f"detection at {b.origin} has no mask")
        parts.append(b.mask_cells())
    return union_cells(*parts)


def mbr(cells) -> RotatedRect:
    """Minimum-area rectangle over cell centers, grown by half a cell per side."""
    cells = as_cells(cells)
    if len(cells) == 0:
        raise ValueError("empty cell set")
    return min_area_rect(cells, inflate=0.5)


def area_ratio(cells) -> float:
    cells = as_cells(cells)
    return mbr(cells).area / len(cells)


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------

def erode_2x2(mask: np.ndarray) -> np.ndarray:
    """Binary erosion with a 2x2 kernel anchored at its top-left cell."""
    out = np.zeros_like(mask)
    out[:-1, :-1] = mask[:-1, :-1] & mask[1:, :-1] & mask[:-1, 1:] & mask[1:, 1:]
    return out


def watershed(surface: np.ndarray, markers: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Priority-flood watershed from labeled markers, 4-connected, restricted to `mask`.

    Ties in elevation are resolved first-in first-out, which keeps the result
    deterministic.
    """
    labels = np.where(mask, markers, 0).astype(np.int32)
    h, w = labels.shape
    heap = []
    counter = 0
    queued = labels > 0
    for r, c in zip(*np.nonzero(labels)):
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and mask[rr, cc] and not queued[rr, cc]:
                queued[rr, cc] = True
                heapq.heappush(heap, (surface[rr, cc], counter, rr, cc))
                counter += 1
    while heap:
        _, _, r, c = heapq.heappop(heap)
        # take the label of the first labeled neighbor in a fixed order
        for dr, dc in ((-1, 0), (0, -1), (0, 1), (1, 0)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and labels[rr, cc] > 0:
                labels[r, c] = labels[rr, cc]
                break
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and mask[rr, cc] and not queued[rr, cc]:
                queued[rr, cc] = True
                heapq.heappush(heap, (surface[rr, cc], counter, rr, cc))
                counter += 1
    return labels


def _split_once(cells: np.ndarray) -> list[np.ndarray]:
    mask, offset = mask_from_cells(cells, pad=1)
    base = label_components(mask, min_size=1)
    eroded = mask
    while True:
        eroded = erode_2x2(eroded)
        if not eroded.any():
            return [cells]
        markers = label_components(eroded, min_size=1)
        if markers.count >= 2 and markers.count > base.count:
            break
    dist = ndimage.distance_transform_edt(mask)
    labels = watershed(-dist, markers.labels, mask)
    # mask pieces no marker can reach join the nearest labeled cell
    missing = mask & (labels == 0)
    if missing.any():
        _, (ir, ic) = ndimage.distance_transform_edt(labels == 0, return_indices=True)
        labels[missing] = labels[ir[missing], ic[missing]]
    return [np.argwhere(labels == k) + offset for k in range(1, markers.count + 1)
            if np.any(labels == k)]


def split_if_merged(cells, depth: int = 0, max_depth: int = MAX_SPLIT_DEPTH) -> list[np.ndarray]:
    """Partition a mask whose MBR is too loose, by erosion-seeded watershed, recursively."""
    cells = as_cells(cells)
    if len(cells) == 0:
        raise ValueError("empty cell set")
    ratio = area_ratio(cells)
    if ratio <= MAX_AREA_RATIO or depth >= max_depth:
        return [cells]
    parts = _split_once(cells)
    # a split that leaves any part looser than the whole is slicing one door, not separating two
    if len(parts) == 1 or max(area_ratio(p) for p in parts) >= ratio:
        return [cells]
    out = []
    for part in parts:
        out.extend(split_if_merged(part, depth + 1, max_depth))
    out.sort(key=lambda p: tuple(p[0]))
    return out


def connected_parts(cells) -> list[np.ndarray]:
    """8-connected pieces of a cell set."""
    mask, offset = mask_from_cells(as_cells(cells))
    lab, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    if n == 1:
        return [as_cells(cells)]
    return [np.argwhere(lab == k) + offset for k in range(1, n + 1)]


def merge_touching(masks: list[np.ndarray]) -> list[np.ndarray]:
    """Union masks that overlap or touch through a 4-neighbor."""
    if not masks:
        return []
    uf = UnionFind(len(masks))
    owner: dict[tuple[int, int], int] = {}
    for i, cells in enumerate(masks):
        near = np.concatenate([cells, cells + (1, 0), cells - (1, 0), cells + (0, 1), cells - (0, 1)])
        for key in map(tuple, near.tolist()):
            j = owner.get(key)
            if j is not None:
                uf.union(i, j)
        for key in map(tuple, cells.tolist()):
            owner[key] = i
    groups: dict[int, list[np.ndarray]] = {}
    for i, cells in enumerate(masks):
        groups.setdefault(uf.find(i), []).append(cells)
    merged = [union_cells(*g) for g in groups.values()]
    merged.sort(key=lambda p: tuple(p[0]))
    return merged


# ---------------------------------------------------------------------------
# hypotheses
# ---------------------------------------------------------------------------

@dataclass
class DoorHypothesis:
    id: int
    mask: np.ndarray          # (n, 2) map cells
    rect: RotatedRect
    state: str = "candidate"
    linked: tuple[int, int] | None = None
    unsplittable: bool = False
    footprint: np.ndarray = field(default=None, repr=False)
    ambiguous: bool = False

    def __post_init__(self):
        self.mask = as_cells(self.mask)
        if self.footprint is None:
            self.footprint = self.mask
        if self.state not in STATES:
            raise ValueError(f"bad hypothesis state {self.state!r}")

    @property
    def area_ratio(self) -> float:
        return self.rect.area / len(self.mask)

    @property
    def corners(self) -> np.ndarray:
        return self.rect.corners


def make_hypothesis(hid: int, cells, shape=None) -> DoorHypothesis:
    cells = as_cells(cells)
    rect = mbr(cells)
    loose = rect.area > MAX_AREA_RATIO * len(cells)
    footprint = cells if loose else union_cells(cells, rect.rasterize(shape))
    return DoorHypothesis(hid, cells, rect, unsplittable=loose, footprint=footprint)


def build_hypotheses(boxes, shape, iou_threshold: float = IOU_THRESHOLD) -> list[DoorHypothesis]:
    """Cluster filtered detections and turn fused masks into door hypotheses.

    Clusters are fused, touching fusions merged, separate pieces taken apart,
    loose masks split, and the results numbered in scan order of their first cell.
    """
    boxes = [b for b in boxes if b.mask is not None and b.mask.any()]
    fused = [fuse_masks(c) for c in cluster(boxes, iou_threshold)]
    pieces = []
    for cells in merge_touching(fused):
        for part in connected_parts(cells):
            pieces.extend(split_if_merged(part))
    pieces.sort(key=lambda p: tuple(p[0]))
    return [make_hypothesis(i, p, shape) for i, p in enumerate(pieces)]


def hypotheses_to_doc(hyps) -> dict:
    records = []
    for h in hyps:
        mask, offset = mask_from_cells(h.mask)
        records.append({
            "id": h.id,
            "state": h.state,
            "offset": [int(offset[0]), int(offset[1])],
            "shape": [int(s) for s in mask.shape],
            "mask_rle": rle_encode(mask),
            "mbr_corners": [[round(float(x), 6) for x in p] for p in h.corners],
            "mbr": {"center": [round(float(x), 9) for x in h.rect.center],
                    "length": round(h.rect.length, 9), "width": round(h.rect.width, 9),
                    "angle": round(h.rect.angle, 12)},
            "unsplittable": h.unsplittable,
            "linked": list(h.linked) if h.linked else None,
        })
    return {"version": HYPOTHESES_VERSION, "hypotheses": records}


def save_hypotheses(hyps, path) -> None:
    Path(path).write_text(json.dumps(hypotheses_to_doc(hyps), indent=1, sort_keys=True) + "\n")


def load_hypotheses(path, shape=None) -> list[DoorHypothesis]:
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != HYPOTHESES_VERSION:
        raise ValueError(f"unsupported hypotheses version {doc.get('version')!r}")
    hyps = []
    for rec in doc["hypotheses"]:
        mask = rle_decode(rec["mask_rle"], tuple(rec["shape"]))
        cells = np.argwhere(mask) + np.asarray(rec["offset"])
        h = make_hypothesis(int(rec["id"]), cells, shape)
        h.state = rec["state"]
        h.linked = tuple(rec["linked"]) if rec.get("linked") else None
        hyps.append(h)
    return hyps
