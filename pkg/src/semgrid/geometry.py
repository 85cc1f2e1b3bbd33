"""Planar geometry on cell sets: convex hulls, minimum bounding rectangles, rasterization.

Cell sets are int arrays of shape (n, 2) holding (row, col) pairs; a cell's
center sits at its integer coordinates and the cell covers +-0.5 around it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def as_cells(cells) -> np.ndarray:
    """Sorted unique (n, 2) int64 array."""
    arr = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
    if len(arr) == 0:
        return arr
    return np.unique(arr, axis=0)


def cells_from_mask(mask: np.ndarray, offset=(0, 0)) -> np.ndarray:
    rc = np.argwhere(mask)
    return (rc + np.asarray(offset, dtype=np.int64)).astype(np.int64)


def mask_from_cells(cells: np.ndarray, pad: int = 0):
    """Bool image of the cells' bounding box, plus the (row, col) offset of its corner."""
    lo = cells.min(axis=0) - pad
    hi = cells.max(axis=0) + pad
    mask = np.zeros(tuple(hi - lo + 1), dtype=bool)
    mask[cells[:, 0] - lo[0], cells[:, 1] - lo[1]] = True
    return mask, lo


def union_cells(*sets) -> np.ndarray:
    parts = [s for s in sets if len(s)]
    if not parts:
        return np.zeros((0, 2), dtype=np.int64)
    return as_cells(np.concatenate(parts))


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def hull_points(points) -> np.ndarray:
    """Andrew's monotone chain; counter-clockwise in (x, y), collinear points dropped.

    Returns the single point or two endpoints for degenerate inputs.
    """
    pts = sorted(set(map(tuple, np.asarray(points, dtype=np.float64).tolist())))
    if len(pts) <= 2:
        return np.array(pts, dtype=np.float64).reshape(-1, 2)
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=np.float64)


def polygon_area(poly: np.ndarray) -> float:
    """Signed shoelace area (positive for counter-clockwise)."""
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def convex_hull(cells, footprint: bool = False) -> np.ndarray:
    """Convex hull of cell centers as (row, col) vertices.

    Vertices run counter-clockwise when plotted with columns as x and rows as
    y pointing up. Degenerate sets (one cell, or all collinear) fall back to the
    hull of the cell corners so the result always has positive area; the same
    corner hull is used throughout when `footprint` is set.
    """
    cells = as_cells(cells)
    if len(cells) == 0:
        raise ValueError("empty cell set")
    if footprint or len(_xy_hull(cells)) < 3:
        corners = (cells[:, None, :] + np.array([[-.5, -.5], [-.5, .5], [.5, .5], [.5, -.5]]))
        return _to_rc(hull_points(_rc_to_xy(corners.reshape(-1, 2))))
    return _to_rc(_xy_hull(cells))


def _rc_to_xy(rc):
    rc = np.asarray(rc, dtype=np.float64)
    return np.column_stack([rc[:, 1], -rc[:, 0]])


def _to_rc(xy):
    return np.column_stack([-xy[:, 1], xy[:, 0]]) + 0.0


def _xy_hull(cells):
    return hull_points(_rc_to_xy(cells))


def hull_area(poly_rc: np.ndarray) -> float:
    return abs(polygon_area(_rc_to_xy(poly_rc)))


@dataclass(frozen=True)
class RotatedRect:
    """Rectangle with `length` along unit axis (sin a, cos a) in (row, col) space."""
    center: tuple[float, float]
    length: float
    width: float
    angle: float  # radians, direction of the length axis measured from the column axis

    @property
    def area(self) -> float:
        return self.length * self.width

    @property
    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        u = np.array([math.sin(self.angle), math.cos(self.angle)])
        v = np.array([u[1], -u[0]])
        return u, v

    @property
    def corners(self) -> np.ndarray:
        u, v = self.axes
        c = np.asarray(self.center)
        hl, hw = self.length / 2.0, self.width / 2.0
        return np.array([c - hl * u - hw * v, c + hl * u - hw * v,
                         c + hl * u + hw * v, c - hl * u + hw * v])

    @property
    def orientation_deg(self) -> float:
        """Angle of the long side in [0, 180) degrees, rows pointing up."""
        ang = self.angle if self.length >= self.width else self.angle + math.pi / 2
        # flip rows so the angle reads like a usual image-up convention
        return math.degrees(math.atan2(-math.sin(ang), math.cos(ang))) % 180.0

    def contains(self, points, eps: float = 1e-9) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2) - np.asarray(self.center)
        u, v = self.axes
        return ((np.abs(pts @ u) <= self.length / 2.0 + eps)
                & (np.abs(pts @ v) <= self.width / 2.0 + eps))

    def rasterize(self, shape=None) -> np.ndarray:
        """Cells whose centers lie inside the rectangle, optionally clipped to a grid shape."""
        corners = self.corners
        lo = np.floor(corners.min(axis=0)).astype(int)
        hi = np.ceil(corners.max(axis=0)).astype(int)
        if shape is not None:
            lo = np.maximum(lo, 0)
            hi = np.minimum(hi, np.asarray(shape) - 1)
            if np.any(hi < lo):
                return np.zeros((0, 2), dtype=np.int64)
        rr, cc = np.mgrid[lo[0]:hi[0] + 1, lo[1]:hi[1] + 1]
        pts = np.column_stack([rr.ravel(), cc.ravel()])
        return pts[self.contains(pts)].astype(np.int64)


def min_area_rect(points, inflate: float = 0.0) -> RotatedRect:
    """Rotating calipers over the convex hull; each side pushed out by `inflate`."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("empty point set")
    hull = _to_rc(hull_points(_rc_to_xy(pts)))
    if len(hull) == 1:
        return RotatedRect(tuple(hull[0]), 2 * inflate, 2 * inflate, 0.0)

    best = None
    n = len(hull)
    for i in range(n if n > 2 else 1):
        edge = hull[(i + 1) % n] - hull[i]
        norm = math.hypot(edge[0], edge[1])
        if norm == 0:
            continue
        u = edge / norm
        v = np.array([u[1], -u[0]])
        pu, pv = hull @ u, hull @ v
        area = (pu.max() - pu.min()) * (pv.max() - pv.min())
        if best is None or area < best[0] - 1e-12:
            best = (area, u, v, pu.min(), pu.max(), pv.min(), pv.max())
    _, u, v, umin, umax, vmin, vmax = best
    cu, cv = (umin + umax) / 2.0, (vmin + vmax) / 2.0
    center = cu * u + cv * v
    angle = math.atan2(u[0], u[1])
    return RotatedRect((float(center[0]), float(center[1])),
                       float(umax - umin + 2 * inflate),
                       float(vmax - vmin + 2 * inflate), angle)


def polygon_contains(poly: np.ndarray, point, eps: float = 1e-9) -> bool:
    """Point-in-convex-polygon for counter-clockwise (x, y) vertices."""
    p = np.asarray(point, dtype=np.float64)
    n = len(poly)
    for i in range(n):
        if _cross(poly[i], poly[(i + 1) % n], p) < -eps:
            return False
    return True
