"""Per-patch door detection backends.

`baseline` is a deterministic wall-gap detector, `oracle` reads simulator
ground truth, and `ingest` replays detections produced elsewhere (e.g. by a
trained network) from a JSON document.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .geometry import min_area_rect
from .grid import FREE_THRESH, OCC_THRESH, WINDOW, Patch

DETECTIONS_VERSION = 1
DEFAULT_THRESHOLD = 0.5

MIN_GAP = 14
MAX_GAP = 32
GAP_TOLERANCE = 1.5
RUN_SAMPLES = 12
RUN_GAPS = 1           # free samples tolerated inside a wall run
GAP_SPECKS = 2         # occupied samples tolerated inside the gap
JAMB_CLEAR = 3         # half-cell samples next to each jamb that must be free
MIN_TRUNCATED_RUN = 4  # when the run reaches the patch border
MIN_RUN = 10           # flanking wall samples beyond each jamb
SIDE_FREE = 0.8        # required free share on each side of the gap
SIDE_SAMPLES = 10
MAX_WALL = 8           # widest wall cross-section accepted, in samples
GROUP_RADIUS = 3       # cells between midpoints of pairs of one doorway
GROUP_COS2 = 0.933     # squared cosine between their axes (about 15 degrees)
MIN_SUPPORT = 2        # pairs needed to accept a doorway
BAND_SAMPLES = MAX_GAP + 4  # reach along the doorway axis when trimming masks
THIN_AT = 3            # run sample where the wall thickness is probed


class DetectionsFormatError(ValueError):
    pass


@dataclass(frozen=True)
class DetectionBox:
    origin: tuple[int, int]
    confidence: float
    mask: np.ndarray | None = None  # bool (64, 64)
    size: int = WINDOW

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.mask is not None and self.mask.shape != (self.size, self.size):
            raise ValueError("mask must match the window size")

    @property
    def bounds(self) -> tuple[int, int, int, int]:
        r, c = self.origin
        return r, c, r + self.size, c + self.size

    def mask_cells(self) -> np.ndarray:
        if self.mask is None:
            raise ValueError(f"detection at {self.origin} carries no mask")
        return np.argwhere(self.mask).astype(np.int64) + np.asarray(self.origin, dtype=np.int64)


@dataclass(frozen=True)
class DetectorConfig:
    threshold: float = DEFAULT_THRESHOLD
    backend: str = "baseline"

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if self.backend not in ("baseline", "ingest", "oracle"):
            raise ValueError(f"unknown backend {self.backend!r}")


# ---------------------------------------------------------------------------
# baseline gap detector
# ---------------------------------------------------------------------------

def _nearest(num: np.ndarray, den: np.ndarray):
    """Nearest integer(s) to num/den; both bounds differ only on exact .5 ties."""
    f = np.floor_divide(num, den)
    rem2 = 2 * (num - f * den)
    lo = np.where(rem2 <= den, f, f + 1)
    hi = np.where(rem2 < den, f, f + 1)
    return lo, hi


def _probe(occ: np.ndarray, num_r, num_c, den):
    """Classify exact rational sample points.

    Returns (occupied, inside, lo_r, hi_r, lo_c, hi_c). A sample counts as
    occupied if any of its nearest cells is; it is inside only if all are.
    """
    n = occ.shape[0]
    lo_r, hi_r = _nearest(num_r, den)
    lo_c, hi_c = _nearest(num_c, den)
    inside = (lo_r >= 0) & (hi_r < n) & (lo_c >= 0) & (hi_c < n)
    lr, hr = np.clip(lo_r, 0, n - 1), np.clip(hi_r, 0, n - 1)
    lc, hc = np.clip(lo_c, 0, n - 1), np.clip(hi_c, 0, n - 1)
    occupied = occ[lr, lc] | occ[lr, hc] | occ[hr, lc] | occ[hr, hc]
    return occupied & inside, inside, lo_r, hi_r, lo_c, hi_c


def _wall_run(occ, a, step, den):
    """Occupied samples walked from `a` along +step/den.

    The walk tolerates one free sample and stops at the second one or at the
    patch edge. Returns (occupied sample count, truncated_by_border).
    """
    k = np.arange(1, RUN_SAMPLES + 1)
    num_r = a[:, 0:1] * den[:, None] + step[:, 0:1] * k
    num_c = a[:, 1:2] * den[:, None] + step[:, 1:2] * k
    occupied, inside, *_ = _probe(occ, num_r, num_c, den[:, None])
    free_seen = np.cumsum(inside & ~occupied, axis=1)
    out_seen = np.cumsum(~inside, axis=1)
    live = (free_seen <= RUN_GAPS) & (out_seen == 0)
    length = (occupied & live).sum(axis=1)
    stopped_free = free_seen[:, -1] > RUN_GAPS
    first_out = np.where(out_seen[:, -1] > 0, (~inside).argmax(axis=1), RUN_SAMPLES)
    first_stop = np.where(stopped_free, (free_seen > RUN_GAPS).argmax(axis=1), RUN_SAMPLES)
    truncated = first_out < first_stop
    return length, truncated


def _side_ok(occ, mid_num, den, perp, sign):
    k = np.arange(1, SIDE_SAMPLES + 1)
    num_r = mid_num[:, 0:1] + sign * 2 * perp[:, 0:1] * k
    num_c = mid_num[:, 1:2] + sign * 2 * perp[:, 1:2] * k
    occupied, inside, *_ = _probe(occ, num_r, num_c, den[:, None])
    n_in = inside.sum(axis=1)
    n_free = (inside & ~occupied).sum(axis=1)
    return (n_in >= 3) & (n_free >= SIDE_FREE * np.maximum(n_in, 1))


def _thin_ok(solid, a, step, den, at: int = THIN_AT):
    """The wall `at` samples beyond a jamb spans at most MAX_WALL samples across the axis.

    Probes that leave the patch before reaching free space fail.
    """
    base_r = a[:, 0] * den + step[:, 0] * at
    base_c = a[:, 1] * den + step[:, 1] * at
    perp = np.column_stack([-step[:, 1], step[:, 0]])
    j = np.arange(0, MAX_WALL + 1)
    span = np.zeros(len(a), dtype=np.int64)
    escaped = np.zeros(len(a), dtype=bool)
    for sign in (1, -1):
        num_r = base_r[:, None] + sign * perp[:, 0:1] * j
        num_c = base_c[:, None] + sign * perp[:, 1:2] * j
        occupied, inside, *_ = _probe(solid, num_r, num_c, den[:, None])
        stop = ~occupied
        first = np.where(stop.any(axis=1), stop.argmax(axis=1), MAX_WALL + 1)
        rows = np.arange(len(a))
        hit_edge = np.zeros(len(a), dtype=bool)
        has = first <= MAX_WALL
        hit_edge[has] = ~inside[rows[has], first[has]]
        escaped |= hit_edge
        span += first
    # the base sample is counted on both sides
    return (span == 0) | ((span - 1 <= MAX_WALL) & ~escaped)


def _run_ok(length, truncated):
    return np.where(truncated, length >= MIN_TRUNCATED_RUN, length >= MIN_RUN)


def _gap_candidates(occ: np.ndarray, solid: np.ndarray):
    """Score every pair of occupied boundary cells that could be the jambs of a doorway."""
    free = ~occ
    nb_free = np.zeros_like(occ)
    nb_free[1:, :] |= free[:-1, :]
    nb_free[:-1, :] |= free[1:, :]
    nb_free[:, 1:] |= free[:, :-1]
    nb_free[:, :-1] |= free[:, 1:]
    pts = np.argwhere(occ & nb_free).astype(np.int64)
    if len(pts) < 2:
        return None
    i, j = np.triu_indices(len(pts), 1)
    diff = pts[j] - pts[i]
    d2 = (diff ** 2).sum(axis=1)
    lo = (MIN_GAP + 1 - GAP_TOLERANCE) ** 2
    hi = (MAX_GAP + 1 + GAP_TOLERANCE) ** 2
    keep = (d2 >= lo) & (d2 <= hi)
    if not np.any(keep):
        return None
    a, b, diff, d2 = pts[i[keep]], pts[j[keep]], diff[keep], d2[keep]
    # cheap rejection: the quarter points of the segment must be free
    q = np.arange(1, 4)
    occupied, inside, *_ = _probe(occ, a[:, 0:1] * 4 + diff[:, 0:1] * q,
                                  a[:, 1:2] * 4 + diff[:, 1:2] * q, np.full((len(a), 1), 4))
    ok = (inside & ~occupied).all(axis=1)
    if not np.any(ok):
        return None
    a, b, diff, d2 = a[ok], b[ok], diff[ok], d2[ok]
    dist = np.sqrt(d2)

    # flanking wall runs beyond each jamb, along the gap axis
    m = np.maximum(np.rint(dist).astype(np.int64), 1)
    len_a, trunc_a = _wall_run(solid, a, -diff, m)
    len_b, trunc_b = _wall_run(solid, b, diff, m)
    # a doorway never spans the patch, so at most one run may reach its border
    ok = _run_ok(len_a, trunc_a) & _run_ok(len_b, trunc_b) & ~(trunc_a & trunc_b)
    if not np.any(ok):
        return None
    a, b, diff, dist, m = a[ok], b[ok], diff[ok], dist[ok], m[ok]
    run = np.minimum(len_a[ok], len_b[ok])
    ok = _thin_ok(solid, a, -diff, m) & _thin_ok(solid, b, diff, m)
    if not np.any(ok):
        return None
    a, b, diff, dist, m, run = a[ok], b[ok], diff[ok], dist[ok], m[ok], run[ok]

    # free space on both sides of the gap axis
    perp = np.column_stack([-diff[:, 1], diff[:, 0]])
    mid_num = (a + b) * m[:, None]
    ok = _side_ok(occ, mid_num, 2 * m, perp, 1) & _side_ok(occ, mid_num, 2 * m, perp, -1)
    if not np.any(ok):
        return None
    a, b, diff, dist, run = a[ok], b[ok], diff[ok], dist[ok], run[ok]

    # interior of the segment a-b must be free; samples every <= 0.5 cells
    n_steps = 2 * np.ceil(dist).astype(np.int64)
    k = np.arange(1, int(n_steps.max()))
    valid_k = k[None, :] < n_steps[:, None]
    num_r = a[:, 0:1] * n_steps[:, None] + diff[:, 0:1] * k
    num_c = a[:, 1:2] * n_steps[:, None] + diff[:, 1:2] * k
    occupied, inside, lo_r, hi_r, lo_c, hi_c = _probe(occ, num_r, num_c, n_steps[:, None])

    def touches(p):
        pr, pc = p[:, 0:1], p[:, 1:2]
        return (((lo_r == pr) | (hi_r == pr)) & ((lo_c == pc) | (hi_c == pc)))

    interior = valid_k & ~(touches(a) | touches(b))
    # specks are tolerated mid-gap only; next to a jamb they would let pairs cut wall corners
    near_jamb = (k[None, :] <= JAMB_CLEAR) | (k[None, :] >= n_steps[:, None] - JAMB_CLEAR)
    good = (~(interior & ~inside).any(axis=1)
            & ((interior & occupied).sum(axis=1) <= GAP_SPECKS)
            & ~(interior & occupied & near_jamb).any(axis=1))
    if not np.any(good):
        return None
    interior = interior[good]
    cells = tuple(np.where(interior, x[good], -1) for x in (lo_r, lo_c, hi_r, hi_c))

    width = dist[good] - 1.0
    run = run[good]
    centrality = np.clip(1.0 - np.abs(width - (MIN_GAP + MAX_GAP) / 2.0) / ((MAX_GAP - MIN_GAP) / 2.0), 0.0, 1.0)
    score = 0.5 + 0.25 * np.minimum(run / 10.0, 1.0) + 0.25 * centrality
    return score, a[good], b[good], cells


def _doorway_groups(a: np.ndarray, b: np.ndarray):
    """Connected components of pairs with nearby midpoints and near-parallel axes.

    All tests are integer-exact, so grouping is independent of pair order.
    """
    mid2 = a + b
    d = b - a
    dm = mid2[:, None, :] - mid2[None, :, :]
    near = (dm ** 2).sum(axis=2) <= (2 * GROUP_RADIUS) ** 2
    dot = d @ d.T
    n2 = (d ** 2).sum(axis=1)
    parallel = dot.astype(np.float64) ** 2 >= GROUP_COS2 * np.outer(n2, n2).astype(np.float64)
    _, labels = connected_components(csr_matrix(near & parallel), directed=False)
    return labels


def _bounded(occ: np.ndarray, cells: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """Cells that meet occupied samples on both sides along `axis` within one gap length.

    Steps have integer numerators over isqrt(|axis|^2), so they are about one
    cell long and exact under transposition and half turns.
    """
    den = max(math.isqrt(int(axis @ axis)), 1)
    k = np.arange(1, BAND_SAMPLES + 1)
    reach = []
    for sign in (1, -1):
        num_r = cells[:, 0:1] * den + sign * axis[0] * k
        num_c = cells[:, 1:2] * den + sign * axis[1] * k
        occupied, inside, *_ = _probe(occ, num_r, num_c, den)
        first_occ = np.where(occupied.any(axis=1), occupied.argmax(axis=1), BAND_SAMPLES)
        first_out = np.where((~inside).any(axis=1), (~inside).argmax(axis=1), BAND_SAMPLES)
        reach.append(np.where(first_occ < first_out, first_occ + 1, BAND_SAMPLES + 1))
    return reach[0] + reach[1] <= BAND_SAMPLES


def _open_2x2(mask: np.ndarray) -> np.ndarray:
    """Union of the 2x2 blocks that fit inside `mask`; drops one-cell-wide strands."""
    core = mask[:-1, :-1] & mask[1:, :-1] & mask[:-1, 1:] & mask[1:, 1:]
    out = np.zeros_like(mask)
    out[:-1, :-1] |= core
    out[1:, :-1] |= core
    out[:-1, 1:] |= core
    out[1:, 1:] |= core
    return out


def _group_axis(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = b - a
    sign = np.where(d @ d[0] >= 0, 1, -1)
    return (d * sign[:, None]).sum(axis=0)


def baseline_detect(patch: Patch, occ_thresh: float = OCC_THRESH,
                    free_thresh: float = FREE_THRESH) -> tuple[float, np.ndarray | None]:
    """Door confidence and gap mask for one patch.

    A doorway is a free segment of 14-32 cells between two occupied jamb
    cells, each continuing as a wall along the segment axis, with free space on
    both sides of that axis. Unknown and intermediate cells count as occupied.
    """
    p = patch.data
    occ = (p >= occ_thresh) | (p > free_thresh) | patch.unknown
    found = _gap_candidates(occ, (p >= occ_thresh) & ~patch.unknown)
    if found is None:
        return 0.0, None
    score, a, b, (r1, c1, r2, c2) = found
    groups = _doorway_groups(a, b)
    sizes = np.bincount(groups)
    mask = np.zeros(occ.shape, dtype=bool)
    best = 0.0
    for g in np.flatnonzero(sizes >= MIN_SUPPORT):
        sel = groups == g
        pts = []
        for rr, cc in ((r1, c1), (r1, c2), (r2, c1), (r2, c2)):
            keep = rr[sel] >= 0
            pts.append(np.column_stack([rr[sel][keep], cc[sel][keep]]))
        pts = np.concatenate(pts)
        if len(pts) == 0:
            continue
        cells = min_area_rect(pts, inflate=0.5).rasterize(occ.shape)
        cells = cells[~occ[cells[:, 0], cells[:, 1]]]
        cells = cells[_bounded(occ, cells, _group_axis(a[sel], b[sel]))]
        mask[cells[:, 0], cells[:, 1]] = True
        best = max(best, float(score[sel].max()))
    mask = _open_2x2(mask)
    if not mask.any():
        return 0.0, None
    return best, mask


# ---------------------------------------------------------------------------
# oracle backend
# ---------------------------------------------------------------------------

def oracle_detect(patches, ground_truth, margin: int = 4) -> list[DetectionBox]:
    """Confidence 1 and the ground-truth doorway mask for every patch that contains a door."""
    from .simulator import patch_doors

    out = []
    for patch in patches:
        mask = patch_doors(ground_truth, patch.origin, margin)
        if mask is None:
            out.append(DetectionBox(patch.origin, 0.0, None))
        else:
            out.append(DetectionBox(patch.origin, 1.0, mask))
    return out


# ---------------------------------------------------------------------------
# ingest backend and file format
# ---------------------------------------------------------------------------

def rle_encode(mask: np.ndarray) -> list[int]:
    """Alternating run lengths over the row-major mask, starting with a (possibly empty) zero run."""
    flat = np.asarray(mask, dtype=bool).ravel()
    change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        runs = [0] + runs
    return [int(r) for r in runs]


def rle_decode(runs, shape) -> np.ndarray:
    total = int(np.prod(shape))
    runs = [int(r) for r in runs]
    if any(r < 0 for r in runs) or sum(runs) != total:
        raise DetectionsFormatError(f"run lengths do not cover a {shape} mask")
    values = np.arange(len(runs)) % 2 == 1
    return np.repeat(values, runs).reshape(shape)


def detections_to_doc(boxes) -> dict:
    records = []
    for box in boxes:
        rec = {"origin": [int(box.origin[0]), int(box.origin[1])],
               "confidence": round(float(box.confidence), 6)}
        if box.mask is not None:
            rec["mask_rle"] = rle_encode(box.mask)
        records.append(rec)
    return {"version": DETECTIONS_VERSION, "window": WINDOW, "records": records}


def save_detections(boxes, path) -> None:
    Path(path).write_text(json.dumps(detections_to_doc(boxes), indent=1, sort_keys=True) + "\n")


def load_detections(path) -> list[DetectionBox]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise DetectionsFormatError(f"detections file {path} not found") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise DetectionsFormatError(f"cannot parse detections file {path}: {exc}") from exc
    if not isinstance(doc, dict) or "version" not in doc:
        raise DetectionsFormatError("detections document needs a 'version' field")
    if doc["version"] != DETECTIONS_VERSION:
        raise DetectionsFormatError(f"unsupported detections version {doc['version']!r}")
    window = int(doc.get("window", WINDOW))
    if window != WINDOW:
        raise DetectionsFormatError(f"window {window} != {WINDOW}")
    boxes = []
    try:
        for rec in doc["records"]:
            mask = rec.get("mask_rle")
            mask = None if mask is None else rle_decode(mask, (WINDOW, WINDOW))
            boxes.append(DetectionBox((int(rec["origin"][0]), int(rec["origin"][1])),
                                      float(rec["confidence"]), mask))
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        if isinstance(exc, DetectionsFormatError):
            raise
        raise DetectionsFormatError(f"malformed detection record: {exc}") from exc
    return boxes


def ingest_detect(patches, path) -> list[DetectionBox]:
    boxes = load_detections(path)
    if len(boxes) != len(patches):
        raise DetectionsFormatError(
            f"{len(boxes)} detection records for {len(patches)} patches")
    for box, patch in zip(boxes, patches):
        if tuple(box.origin) != tuple(patch.origin):
            raise DetectionsFormatError(
                f"record origin {box.origin} does not match patch origin {patch.origin}")
    return boxes


# ---------------------------------------------------------------------------
# contract
# ---------------------------------------------------------------------------

def _baseline_box(patch: Patch) -> DetectionBox:
    conf, mask = baseline_detect(patch)
    return DetectionBox(patch.origin, conf, mask)


def detect(patches, cfg: DetectorConfig = DetectorConfig(), *, ground_truth=None,
           detections_path=None, jobs: int = 1) -> list[DetectionBox]:
    """One DetectionBox per patch, in input order."""
    patches = list(patches)
    if cfg.backend == "baseline":
        if jobs > 1 and len(patches) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                return list(pool.map(_baseline_box, patches, chunksize=32))
        return [_baseline_box(p) for p in patches]
    if cfg.backend == "oracle":
        if ground_truth is None:
            raise ValueError("oracle backend needs ground truth")
        return oracle_detect(patches, ground_truth)
    if detections_path is None:
        raise DetectionsFormatError("ingest backend needs a detections file")
    return ingest_detect(patches, detections_path)


def filter_detections(boxes, threshold: float = DEFAULT_THRESHOLD) -> list[DetectionBox]:
    return [b for b in boxes if b.confidence >= threshold]
