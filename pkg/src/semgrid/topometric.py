"""Topometric map: room, corridor and door entities with metric shapes, linked through doors."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import convex_hull, hull_points, polygon_area
from .segmentation import UnionFind

MAP_VERSION = 1
CLASSES = ("room", "corridor", "door")
PALETTE = {0: (40, 40, 40), 1: (70, 130, 180), 2: (220, 120, 60), 3: (250, 250, 250)}
_CLASS_CODE = {"room": 1, "corridor": 2, "door": 3}
FORMATS = {"dot": "dot", "graph-dot": "dot", "json": "json", "structured-json": "json",
           "image": "image", "colorized-image": "image"}


@dataclass(frozen=True)
class Entity:
    id: str
    cls: str
    centroid: tuple[float, float]   # world meters
    hull: np.ndarray                # (n, 2) world meters, counter-clockwise
    area: float                     # m^2
    source: int

    def as_dict(self) -> dict:
        return {"id": self.id, "class": self.cls,
                "centroid": [round(v, 6) for v in self.centroid],
                "hull": [[round(float(x), 6), round(float(y), 6)] for x, y in self.hull],
                "area": round(self.area, 6), "source": self.source}


@dataclass
class TopometricMap:
    entities: list[Entity]
    edges: list[tuple[str, str, str]]   # (door, entity, entity)
    resolution: float
    origin: tuple[float, float]
    source: str = ""
    labels: np.ndarray | None = field(default=None, repr=False)
    door_cells: dict = field(default_factory=dict, repr=False)
    segment_class: dict = field(default_factory=dict, repr=False)

    def entity(self, eid: str) -> Entity:
        for e in self.entities:
            if e.id == eid:
                return e
        raise KeyError(eid)

    def count(self, cls: str) -> int:
        return sum(1 for e in self.entities if e.cls == cls)

    def node_edges(self) -> list[tuple[str, str]]:
        """Door-mediated graph edges (door, place) in a fixed order."""
        out = []
        for door, a, b in self.edges:
            out.append((door, a))
            out.append((door, b))
        return out

    def is_connected(self) -> bool:
        if not self.entities:
            return True
        index = {e.id: i for i, e in enumerate(self.entities)}
        uf = UnionFind(len(index))
        for u, v in self.node_edges():
            uf.union(index[u], index[v])
        return len({uf.find(i) for i in range(len(index))}) == 1


def segment_id(s: int) -> str:
    return f"segment:{s}"


def door_id(d: int) -> str:
    return f"door:{d}"


def _to_world(rc, height: int, resolution: float, origin) -> np.ndarray:
    rc = np.asarray(rc, dtype=np.float64).reshape(-1, 2)
    x = origin[0] + (rc[:, 1] + 0.5) * resolution
    y = origin[1] + (height - rc[:, 0] - 0.5) * resolution
    return np.column_stack([x, y])


def build(labels, valid, adjacency, scores, resolution: float, origin=(0.0, 0.0),
          source: str = "") -> TopometricMap:
    """One entity per segment and per linked valid door; an edge set per door."""
    height = labels.labels.shape[0]
    cls_of = {e.segment: e.label for e in scores}
    entities = []
    flat = labels.labels.ravel()
    order = np.argsort(flat, kind="stable")
    bounds = np.searchsorted(flat[order], np.arange(labels.count + 2))
    w = labels.labels.shape[1]
    for s in range(1, labels.count + 1):
        idx = order[bounds[s]:bounds[s + 1]]
        cells = np.column_stack([idx // w, idx % w])
        hull = _to_world(convex_hull(cells, footprint=True), height, resolution, origin)
        centroid = _to_world(cells.mean(axis=0, keepdims=True), height, resolution, origin)[0]
        entities.append(Entity(segment_id(s), cls_of.get(s, "room"),
                               (float(centroid[0]), float(centroid[1])), hull,
                               float(len(cells) * resolution ** 2), s))

    edges = []
    door_cells = {}
    by_id = {h.id: h for h in valid}
    for d in sorted(adjacency):
        a, b = adjacency[d]
        for s in (a, b):
            if not 1 <= s <= labels.count:
                raise ValueError(f"door {d} references missing segment {s}")
        if d not in by_id:
            raise ValueError(f"adjacency lists unknown door {d}")
        h = by_id[d]
        corners = _to_world(h.rect.corners, height, resolution, origin)
        hull = hull_points(corners)
        centroid = corners.mean(axis=0)
        entities.append(Entity(door_id(d), "door", (float(centroid[0]), float(centroid[1])),
                               hull, float(abs(polygon_area(hull))), d))
        edges.append((door_id(d), segment_id(a), segment_id(b)))
        door_cells[d] = h.footprint
    return TopometricMap(entities, edges, float(resolution), (float(origin[0]), float(origin[1])),
                         source, labels.labels, door_cells, cls_of)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return f"{v:.6f}"


def to_dot(m: TopometricMap) -> str:
    lines = ["graph topometric {"]
    for e in m.entities:
        lines.append(f'  "{e.id}" [class="{e.cls}", x={_fmt(e.centroid[0])}, '
                     f'y={_fmt(e.centroid[1])}, area={_fmt(e.area)}];')
    for door, place in m.node_edges():
        lines.append(f'  "{door}" -- "{place}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_json(m: TopometricMap) -> str:
    doc = {
        "version": MAP_VERSION,
        "resolution": m.resolution,
        "origin": list(m.origin),
        "source": m.source,
        "entities": [e.as_dict() for e in m.entities],
        "edges": [{"door": d, "between": [a, b]} for d, a, b in m.edges],
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def to_image(m: TopometricMap) -> bytes:
    """Paletted PNG: exterior, room, corridor, door overlay."""
    if m.labels is None:
        codes = np.zeros((1, 1), dtype=np.uint8)
    else:
        lut = np.zeros(int(m.labels.max()) + 1, dtype=np.uint8)
        for s, cls in m.segment_class.items():
            lut[s] = _CLASS_CODE[cls]
        codes = lut[m.labels]
        for d in sorted(m.door_cells):
            cells = m.door_cells[d]
            codes[cells[:, 0], cells[:, 1]] = _CLASS_CODE["door"]
    img = Image.fromarray(codes, mode="P")
    flat = []
    for k in range(256):
        flat.extend(PALETTE.get(k, (0, 0, 0)))
    img.putpalette(flat)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def export(m: TopometricMap, fmt: str):
    """Serialize to 'dot' or 'json' (text) or 'image' (PNG bytes)."""
    kind = FORMATS.get(fmt)
    if kind is None:
        raise ValueError(f"unsupported export format {fmt!r}")
    if kind == "dot":
        return to_dot(m)
    if kind == "json":
        return to_json(m)
    return to_image(m)


def write_export(m: TopometricMap, fmt: str, path) -> Path:
    path = Path(path)
    data = export(m, fmt)
    if isinstance(data, str):
        path.write_text(data)
    else:
        path.write_bytes(data)
    return path
