"""Occupancy grid container, map file IO, resampling, binarization and patching.

Cell coordinates are (row, col) with row 0 at the top of the image. The map
origin follows the usual robotics convention: it is the world position of the
lower-left corner of the image.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from PIL import Image
from scipy import ndimage

TARGET_RESOLUTION = 0.05
WINDOW = 64
DEFAULT_STRIDE = 8
OCC_THRESH = 0.65
FREE_THRESH = 0.196
UNKNOWN_PIXEL = 205


class MapFormatError(ValueError):
    """Raised for unreadable or inconsistent map files."""


@dataclass(frozen=True)
class OccupancyGrid:
    cells: np.ndarray  # (height, width) float64 in [0, 1]
    resolution: float = TARGET_RESOLUTION
    origin: tuple[float, float] = (0.0, 0.0)
    unknown: np.ndarray | None = None

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.float64)
        if cells.ndim != 2:
            raise ValueError("cells must be a 2-D array")
        if not np.all((cells >= 0.0) & (cells <= 1.0)):
            raise ValueError("occupancy probabilities must lie in [0, 1]")
        if not self.resolution > 0:
            raise ValueError(f"resolution must be positive, got {self.resolution}")
        unknown = self.unknown
        if unknown is None:
            unknown = np.zeros(cells.shape, dtype=bool)
        unknown = np.asarray(unknown, dtype=bool)
        if unknown.shape != cells.shape:
            raise ValueError("unknown mask shape differs from cells")
        cells.setflags(write=False)
        unknown.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "unknown", unknown)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    def cell_to_world(self, rows, cols) -> tuple[np.ndarray, np.ndarray]:
        """World (x, y) in meters of cell centers."""
        rows = np.asarray(rows, dtype=np.float64)
        cols = np.asarray(cols, dtype=np.float64)
        x = self.origin[0] + (cols + 0.5) * self.resolution
        y = self.origin[1] + (self.height - rows - 0.5) * self.resolution
        return x, y


@dataclass(frozen=True)
class Patch:
    origin: tuple[int, int]
    data: np.ndarray
    unknown: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.data.shape != (WINDOW, WINDOW):
            raise ValueError(f"patch must be {WINDOW}x{WINDOW}, got {self.data.shape}")
        if self.unknown is None:
            object.__setattr__(self, "unknown", np.zeros(self.data.shape, dtype=bool))


@dataclass(frozen=True)
class BinaryGrid:
    occupied: np.ndarray  # bool (height, width); False means free

    @property
    def height(self) -> int:
        return self.occupied.shape[0]

    @property
    def width(self) -> int:
        return self.occupied.shape[1]

    @property
    def free(self) -> np.ndarray:
        return ~self.occupied


# ---------------------------------------------------------------------------
# file IO
# ---------------------------------------------------------------------------

def _read_metadata(path: Path) -> dict:
    try:
        meta = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise MapFormatError(f"cannot read map metadata {path}: {exc}") from exc
    if not isinstance(meta, dict) or "image" not in meta or "resolution" not in meta:
        raise MapFormatError(f"{path}: metadata needs at least 'image' and 'resolution'")
    return meta


def load_map(path) -> OccupancyGrid:
    """Load a grayscale map image plus its YAML metadata file."""
    path = Path(path)
    meta = _read_metadata(path)
    try:
        resolution = float(meta["resolution"])
        origin = meta.get("origin", [0.0, 0.0, 0.0])
        origin = (float(origin[0]), float(origin[1]))
        negate = bool(int(meta.get("negate", 0)))
        occ_t = float(meta.get("occupied_thresh", OCC_THRESH))
        free_t = float(meta.get("free_thresh", FREE_THRESH))
        unknown_value = int(meta.get("unknown_value", UNKNOWN_PIXEL))
    except (TypeError, ValueError, IndexError) as exc:
        raise MapFormatError(f"{path}: malformed metadata ({exc})") from exc
    if resolution <= 0:
        raise MapFormatError(f"{path}: resolution must be positive")

    image_path = Path(meta["image"])
    if not image_path.is_absolute():
        image_path = path.parent / image_path
    if not image_path.exists():
        raise MapFormatError(f"map image {image_path} not found")
    with Image.open(image_path) as img:
        if img.mode != "L":
            raise MapFormatError(f"{image_path}: expected 8-bit grayscale, got mode {img.mode}")
        pixels = np.array(img, dtype=np.uint8)

    if negate:
        p = pixels / 255.0
    else:
        p = (255 - pixels.astype(np.float64)) / 255.0
    unknown = (p > free_t) & (p < occ_t) & (pixels == unknown_value)
    return OccupancyGrid(p, resolution, origin, unknown)


def grid_to_pixels(g: OccupancyGrid, negate: bool = False,
                   unknown_value: int = UNKNOWN_PIXEL) -> np.ndarray:
    if negate:
        pix = np.rint(g.cells * 255.0)
    else:
        pix = np.rint(255.0 - g.cells * 255.0)
    pix = pix.astype(np.uint8)
    pix[g.unknown] = unknown_value
    return pix


def save_map(g: OccupancyGrid, path, image_name: str | None = None,
             negate: bool = False, occupied_thresh: float = OCC_THRESH,
             free_thresh: float = FREE_THRESH) -> Path:
    """Write `g` as <stem>.pgm plus the YAML metadata file at `path`."""
    path = Path(path)
    if image_name is None:
        image_name = path.with_suffix(".pgm").name
    Image.fromarray(grid_to_pixels(g, negate)).save(path.parent / image_name)
    meta = {
        "image": image_name,
        "resolution": float(g.resolution),
        "origin": [float(g.origin[0]), float(g.origin[1]), 0.0],
        "negate": int(negate),
        "occupied_thresh": float(occupied_thresh),
        "free_thresh": float(free_thresh),
    }
    path.write_text(yaml.safe_dump(meta, sort_keys=True))
    return path


# ---------------------------------------------------------------------------
# processing
# ---------------------------------------------------------------------------

def normalize_resolution(g: OccupancyGrid, target: float = TARGET_RESOLUTION) -> OccupancyGrid:
    """Resample to `target` m/cell (bilinear probabilities, nearest unknown mask)."""
    if g.width < 2 or g.height < 2:
        raise ValueError("grid too small to resample")
    if np.isclose(g.resolution, target, rtol=0, atol=1e-12):
        return OccupancyGrid(g.cells.copy(), target, g.origin, g.unknown.copy())

    scale = g.resolution / target
    out_h = max(1, int(round(g.height * scale)))
    out_w = max(1, int(round(g.width * scale)))
    # sample the source at output cell centers
    rr = (np.arange(out_h) + 0.5) / scale - 0.5
    cc = (np.arange(out_w) + 0.5) / scale - 0.5
    coords = np.stack(np.meshgrid(rr, cc, indexing="ij"))
    cells = ndimage.map_coordinates(g.cells, coords, order=1, mode="nearest")
    unknown = ndimage.map_coordinates(g.unknown.astype(np.uint8), coords, order=0,
                                      mode="nearest").astype(bool)
    return OccupancyGrid(np.clip(cells, 0.0, 1.0), target, g.origin, unknown)


def binarize(g: OccupancyGrid, occ_thresh: float = OCC_THRESH,
             free_thresh: float = FREE_THRESH,
             unknown_policy: str = "as-occupied") -> BinaryGrid:
    if not 0.0 <= free_thresh < occ_thresh <= 1.0:
        raise ValueError("need 0 <= free_thresh < occ_thresh <= 1")
    if unknown_policy not in ("as-occupied", "as-free"):
        raise ValueError(f"unknown policy {unknown_policy!r}")
    p = g.cells
    undecided = g.unknown | ((p > free_thresh) & (p < occ_thresh))
    occupied = p >= occ_thresh
    occupied = np.where(undecided, unknown_policy == "as-occupied", occupied)
    return BinaryGrid(np.ascontiguousarray(occupied, dtype=bool))


def window_origins(length: int, stride: int, window: int = WINDOW) -> list[int]:
    starts = list(range(0, length - window + 1, stride))
    if starts[-1] != length - window:
        starts.append(length - window)
    return starts


def sliding_windows(g: OccupancyGrid, stride: int = DEFAULT_STRIDE) -> list[Patch]:
    """All 64x64 windows in row-major order, plus edge-aligned ones at the far borders."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if g.width < WINDOW or g.height < WINDOW:
        raise ValueError(f"grid {g.height}x{g.width} smaller than one {WINDOW}x{WINDOW} window")
    patches = []
    for r in window_origins(g.height, stride):
        for c in window_origins(g.width, stride):
            patches.append(Patch((r, c),
                                 g.cells[r:r + WINDOW, c:c + WINDOW].copy(),
                                 g.unknown[r:r + WINDOW, c:c + WINDOW].copy()))
    return patches
