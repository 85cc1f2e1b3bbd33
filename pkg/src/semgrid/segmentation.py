"""Free-space instance segmentation.

Two methods are provided: 4-connected component labeling with a union-find
over row runs, and Felzenszwalb-Huttenlocher graph merging over free cells.
On a binary grid both yield the same partition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import BinaryGrid

MIN_SEGMENT_SIZE = 25
FH_K = 100.0


@dataclass(frozen=True)
class SegmentLabelMap:
    labels: np.ndarray  # int32, 0 = not free (or speckle), 1..count = instances
    count: int

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def sizes(self) -> np.ndarray:
        """Cell count per label, index 0 unused."""
        return np.bincount(self.labels.ravel(), minlength=self.count + 1)

    def cells(self, label: int) -> np.ndarray:
        return np.argwhere(self.labels == label)


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        # keep the smaller index as root so roots follow scan order
        if rb < ra:
            ra, rb = rb, ra
        self.parent[rb] = ra
        return ra


# ---------------------------------------------------------------------------
# union-find over row runs
# ---------------------------------------------------------------------------

def _row_runs(free: np.ndarray):
    h, w = free.shape
    padded = np.zeros((h, w + 2), dtype=np.int8)
    padded[:, 1:-1] = free
    d = np.diff(padded, axis=1)
    rows, starts = np.nonzero(d == 1)
    _, ends = np.nonzero(d == -1)
    return rows, starts, ends


def _run_components(free: np.ndarray):
    """Runs plus a root index per run (4-connectivity)."""
    rows, starts, ends = _row_runs(free)
    n = len(rows)
    uf = UnionFind(n)
    if n:
        stride = free.shape[1] + 2
        start_key = rows * stride + starts
        end_key = rows * stride + ends
        # run j overlaps run i of the previous row iff start_i < end_j and end_i > start_j
        prev = rows - 1
        lo = np.searchsorted(end_key, prev * stride + starts, side="right")
        hi = np.searchsorted(start_key, prev * stride + ends, side="left")
        counts = np.maximum(hi - lo, 0)
        has = np.nonzero(counts)[0]
        if len(has):
            j = np.repeat(has, counts[has])
            first = np.repeat(lo[has], counts[has])
            offs = np.arange(len(j)) - np.repeat(np.cumsum(counts[has]) - counts[has], counts[has])
            i = first + offs
            for a, b in zip(i.tolist(), j.tolist()):
                uf.union(a, b)
    roots = np.fromiter((uf.find(k) for k in range(n)), dtype=np.int64, count=n)
    return rows, starts, ends, roots


def _paint_runs(shape, rows, starts, ends, run_labels) -> np.ndarray:
    labels = np.zeros(shape[0] * shape[1], dtype=np.int32)
    lengths = ends - starts
    keep = run_labels > 0
    if np.any(keep):
        lengths_k = lengths[keep]
        flat_start = rows[keep] * shape[1] + starts[keep]
        total = int(lengths_k.sum())
        idx = np.repeat(flat_start - (np.cumsum(lengths_k) - lengths_k), lengths_k) + np.arange(total)
        labels[idx] = np.repeat(run_labels[keep], lengths_k)
    return labels.reshape(shape)


def _relabel(roots: np.ndarray, sizes_per_root: np.ndarray, min_size: int) -> tuple[np.ndarray, int]:
    """Map run roots to labels 1..K in first-encounter order, dropping small components."""
    uniq, first_idx = np.unique(roots, return_index=True)
    order = uniq[np.argsort(first_idx, kind="stable")]
    lut = np.zeros(len(roots), dtype=np.int32) if len(roots) else np.zeros(0, dtype=np.int32)
    k = 0
    for r in order.tolist():
        if sizes_per_root[r] >= min_size:
            k += 1
            lut[r] = k
    return lut, k


def label_components(free: np.ndarray, min_size: int = MIN_SEGMENT_SIZE) -> SegmentLabelMap:
    free = np.asarray(free, dtype=bool)
    rows, starts, ends, roots = _run_components(free)
    sizes = np.bincount(roots, weights=ends - starts, minlength=len(roots)) if len(roots) else np.zeros(0)
    lut, k = _relabel(roots, sizes, min_size)
    labels = _paint_runs(free.shape, rows, starts, ends, lut[roots] if len(roots) else roots)
    return SegmentLabelMap(labels, k)


def count_components(free: np.ndarray, min_size: int = MIN_SEGMENT_SIZE) -> int:
    free = np.asarray(free, dtype=bool)
    rows, starts, ends, roots = _run_components(free)
    if len(roots) == 0:
        return 0
    sizes = np.bincount(roots, weights=ends - starts)
    return int(np.count_nonzero(sizes >= max(min_size, 1)))


# ---------------------------------------------------------------------------
# graph-based segmentation
# ---------------------------------------------------------------------------

def felzenszwalb(free: np.ndarray, intensity: np.ndarray | None = None, k: float = FH_K,
                 min_size: int = MIN_SEGMENT_SIZE) -> SegmentLabelMap:
    """Graph-based region merging over free cells.

    Vertices are free cells, edges join 4-neighbors with weight
    |p(u) - p(v)| on a 0..255 scale. Occupied cells carry no vertices, so
    segments never cross walls. Components smaller than `min_size` are merged
    into a neighbor when one exists and discarded otherwise.
    """
    free = np.asarray(free, dtype=bool)
    h, w = free.shape
    if intensity is None:
        intensity = np.zeros(free.shape)
    val = np.asarray(intensity, dtype=np.float64) * 255.0
    idx = np.arange(h * w).reshape(h, w)

    horiz = free[:, :-1] & free[:, 1:]
    vert = free[:-1, :] & free[1:, :]
    a = np.concatenate([idx[:, :-1][horiz], idx[:-1, :][vert]])
    b = np.concatenate([idx[:, 1:][horiz], idx[1:, :][vert]])
    flat = val.ravel()
    weight = np.abs(flat[a] - flat[b])
    order = np.lexsort((b, a, weight))
    a, b, weight = a[order].tolist(), b[order].tolist(), weight[order].tolist()

    uf = UnionFind(h * w)
    size = np.ones(h * w, dtype=np.int64).tolist()
    thresh = [k] * (h * w)
    for u, v, wt in zip(a, b, weight):
        ru, rv = uf.find(u), uf.find(v)
        if ru != rv and wt <= thresh[ru] and wt <= thresh[rv]:
            r = uf.union(ru, rv)
            size[r] = size[ru] + size[rv]
            thresh[r] = wt + k / size[r]
    for u, v in zip(a, b):
        ru, rv = uf.find(u), uf.find(v)
        if ru != rv and (size[ru] < min_size or size[rv] < min_size):
            r = uf.union(ru, rv)
            size[r] = size[ru] + size[rv]

    roots = np.full(h * w, -1, dtype=np.int64)
    free_idx = np.flatnonzero(free.ravel())
    roots[free_idx] = [uf.find(i) for i in free_idx.tolist()]
    labels = np.zeros(h * w, dtype=np.int32)
    count = 0
    seen: dict[int, int] = {}
    root_size = np.asarray(size)
    for i, r in zip(free_idx.tolist(), roots[free_idx].tolist()):
        lab = seen.get(r)
        if lab is None:
            if root_size[r] >= min_size:
                count += 1
                lab = count
            else:
                lab = 0
            seen[r] = lab
        labels[i] = lab
    return SegmentLabelMap(labels.reshape(h, w), count)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def segment(b: BinaryGrid, method: str = "components", intensity: np.ndarray | None = None,
            min_size: int = MIN_SEGMENT_SIZE, k: float = FH_K) -> SegmentLabelMap:
    if method == "components":
        return label_components(b.free, min_size)
    if method == "graph":
        return felzenszwalb(b.free, intensity, k=k, min_size=min_size)
    raise ValueError(f"unknown segmentation method {method!r}")


def count_segments(b: BinaryGrid, method: str = "components",
                   min_size: int = MIN_SEGMENT_SIZE) -> int:
    if method == "components":
        return count_components(b.free, min_size)
    return segment(b, method, min_size=min_size).count


def close_doors(b: BinaryGrid, hyps, open_ids=()) -> BinaryGrid:
    """Mark hypothesis footprints occupied, except those in `open_ids`, which become free."""
    open_ids = set(open_ids)
    known = {h.id for h in hyps}
    missing = open_ids - known
    if missing:
        raise KeyError(f"unknown hypothesis ids {sorted(missing)}")
    occ = b.occupied.copy()
    opened = []
    for h in hyps:
        cells = h.footprint
        if len(cells) == 0:
            continue
        if (cells.min() < 0 or cells[:, 0].max() >= occ.shape[0]
                or cells[:, 1].max() >= occ.shape[1]):
            raise ValueError(f"hypothesis {h.id} lies outside the grid")
        if h.id in open_ids:
            opened.append(cells)
        else:
            occ[cells[:, 0], cells[:, 1]] = True
    for cells in opened:
        occ[cells[:, 0], cells[:, 1]] = False
    return BinaryGrid(occ)
