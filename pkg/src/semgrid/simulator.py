"""Procedural floorplan generator with ground truth, noise augmentation and patch extraction.

A floorplan is one central corridor with rectangular rooms attached along
both long sides. Geometry is laid out in a local metric frame (u along the
corridor, v across it), then the whole plan is rotated and rasterized at
0.05 m/cell by sampling every cell center.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .geometry import RotatedRect
from .grid import TARGET_RESOLUTION, WINDOW, OccupancyGrid, Patch, sliding_windows

EXTERIOR, WALL, DOOR, ROOM, CORRIDOR = 0, 1, 2, 3, 4
CLASS_NAMES = {EXTERIOR: "exterior", WALL: "wall", DOOR: "door", ROOM: "room", CORRIDOR: "corridor"}
CLASS_PALETTE = {EXTERIOR: (128, 128, 128), WALL: (0, 0, 0), DOOR: (255, 255, 255),
                 ROOM: (70, 130, 180), CORRIDOR: (220, 120, 60)}

DOOR_MARGIN = 0.3        # m, door gap to room corner
CLEARANCE = 0.3          # m, furniture to walls, doors and other furniture
LEAF_THICKNESS = 0.06    # m
PATCH_MARGIN = 4         # cells between a door and the patch border
GT_VERSION = 1


class InfeasibleSpecError(ValueError):
    pass


def _interval(value, name, lo_bound=None):
    lo, hi = value
    if lo > hi:
        raise InfeasibleSpecError(f"{name}: lower bound {lo} above upper bound {hi}")
    if lo_bound is not None and lo < lo_bound:
        raise InfeasibleSpecError(f"{name}: lower bound {lo} below {lo_bound}")
    return lo, hi


@dataclass(frozen=True)
class FloorplanSpec:
    seed: int = 0
    corridor_width: tuple[float, float] = (1.8, 3.0)
    room_count: tuple[int, int] = (4, 8)
    room_width: tuple[float, float] = (3.0, 5.5)
    room_depth: tuple[float, float] = (3.0, 5.5)
    doors_per_room: tuple[int, int] = (1, 2)
    door_width: tuple[float, float] = (0.7, 1.6)
    leaf_angle: tuple[float, float] = (30.0, 90.0)
    furniture_count: tuple[int, int] = (0, 3)
    rotation: tuple[float, float] = (0.0, 360.0)
    wall_thickness: float = 0.2
    padding: float = 1.0

    def validate(self) -> None:
        t = self.wall_thickness
        if t <= 0:
            raise InfeasibleSpecError("wall thickness must be positive")
        _interval(self.room_count, "room_count", 1)
        _interval(self.doors_per_room, "doors_per_room", 1)
        _interval(self.furniture_count, "furniture_count", 0)
        _interval(self.rotation, "rotation")
        dw = _interval(self.door_width, "door_width", 0.0)
        la = _interval(self.leaf_angle, "leaf_angle", 0.0)
        if la[1] > 90.0:
            raise InfeasibleSpecError("leaf angles above 90 degrees swing behind the hinge")
        for name in ("room_width", "room_depth", "corridor_width"):
            lo, _ = _interval(getattr(self, name), name, 0.0)
            if lo < 2 * t:
                raise InfeasibleSpecError(f"{name} lower bound {lo} below twice the wall thickness")
        need = dw[1] + 2 * DOOR_MARGIN
        if self.room_width[0] < need or self.room_depth[0] < dw[1] + CLEARANCE:
            raise InfeasibleSpecError(f"rooms too small for doors up to {dw[1]} m wide")


@dataclass(frozen=True)
class DoorAnnotation:
    id: int
    corners: np.ndarray  # (4, 2) float, (row, col) cell coordinates
    instances: tuple[int, int]

    @property
    def rect(self) -> RotatedRect:
        c = self.corners
        e1, e2 = c[1] - c[0], c[3] - c[0]
        return RotatedRect(tuple(c.mean(axis=0)), float(np.hypot(*e1)), float(np.hypot(*e2)),
                           math.atan2(e1[0], e1[1]))


@dataclass
class GroundTruth:
    doors: list[DoorAnnotation]
    class_map: np.ndarray     # uint8 class codes
    instance_map: np.ndarray  # int32, 0 = none, corridor and rooms numbered from 1
    corridor_ids: list[int]
    room_ids: list[int]
    _door_cells: dict = field(default_factory=dict, repr=False)

    @property
    def n_places(self) -> int:
        return len(self.corridor_ids) + len(self.room_ids)

    def door_cells(self, door: DoorAnnotation | int) -> np.ndarray:
        if not isinstance(door, DoorAnnotation):
            door = self.doors[door]
        cells = self._door_cells.get(door.id)
        if cells is None:
            cells = door.rect.rasterize(self.class_map.shape)
            self._door_cells[door.id] = cells
        return cells


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "combined"
    level: int = 0

    def __post_init__(self):
        if self.kind not in ("gaussian", "combined"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not 0 <= int(self.level) <= 10:
            raise ValueError("noise level must be within 0..10")

    @property
    def sigma(self) -> float:
        return 0.015 * self.level

    @property
    def edge_salt(self) -> float:
        return 0.03 * self.level if self.kind == "combined" else 0.0

    @property
    def edge_pepper(self) -> float:
        return 0.03 * self.level if self.kind == "combined" else 0.0

    @property
    def free_pepper(self) -> float:
        return 0.002 * self.level if self.kind == "combined" else 0.0


# ---------------------------------------------------------------------------
# layout in the local frame
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Box:
    u0: float
    u1: float
    v0: float
    v1: float

    def grow(self, d: float) -> "_Box":
        return _Box(self.u0 - d, self.u1 + d, self.v0 - d, self.v1 + d)

    def overlaps(self, other: "_Box") -> bool:
        return (self.u0 < other.u1 and other.u0 < self.u1
                and self.v0 < other.v1 and other.v0 < self.v1)

    def inside(self, other: "_Box") -> bool:
        return (self.u0 >= other.u0 and self.u1 <= other.u1
                and self.v0 >= other.v0 and self.v1 <= other.v1)


@dataclass
class _Room:
    instance: int
    interior: _Box
    side: int  # +1 above the corridor, -1 below
    keepout: list = field(default_factory=list)


@dataclass
class _Door:
    gap: _Box
    along_u: bool          # gap runs along u (wall parallel to the corridor)
    swing: int             # +1/-1 along the wall normal
    hinge_at_start: bool
    angle: float           # radians
    instances: tuple[int, int]


def _uniform(rng, interval):
    lo, hi = interval
    return float(lo) if lo == hi else float(rng.uniform(lo, hi))


def _integer(rng, interval):
    lo, hi = interval
    return int(rng.integers(lo, hi + 1))


def _leaf_box(door: _Door, width: float) -> _Box:
    """Keep-out area swept by the leaf, on the swing side."""
    g = door.gap
    if door.along_u:
        face = g.v1 if door.swing > 0 else g.v0
        v_far = face + door.swing * (width + CLEARANCE)
        return _Box(g.u0 - CLEARANCE, g.u1 + CLEARANCE, min(face, v_far), max(face, v_far))
    face = g.u1 if door.swing > 0 else g.u0
    u_far = face + door.swing * (width + CLEARANCE)
    return _Box(min(face, u_far), max(face, u_far), g.v0 - CLEARANCE, g.v1 + CLEARANCE)


def _approach_box(door: _Door) -> _Box:
    """Keep-out area in front of the door on the non-swing side."""
    g = door.gap
    depth = 0.8
    if door.along_u:
        face = g.v0 if door.swing > 0 else g.v1
        v_far = face - door.swing * depth
        return _Box(g.u0 - CLEARANCE, g.u1 + CLEARANCE, min(face, v_far), max(face, v_far))
    face = g.u0 if door.swing > 0 else g.u1
    u_far = face - door.swing * depth
    return _Box(min(face, u_far), max(face, u_far), g.v0 - CLEARANCE, g.v1 + CLEARANCE)


def _layout(spec: FloorplanSpec, rng):
    t = spec.wall_thickness
    n_rooms = _integer(rng, spec.room_count)
    n_top = (n_rooms + 1) // 2
    cw = _uniform(rng, spec.corridor_width)
    widths = [_uniform(rng, spec.room_width) for _ in range(n_rooms)]
    depths = [_uniform(rng, spec.room_depth) for _ in range(n_rooms)]

    rooms: list[_Room] = []
    sides = [(+1, range(n_top)), (-1, range(n_top, n_rooms))]
    side_lengths = []
    for side, idx in sides:
        u = 0.0
        for k in idx:
            w, h = widths[k], depths[k]
            if side > 0:
                box = _Box(u, u + w, cw + t, cw + t + h)
            else:
                box = _Box(u, u + w, -t - h, -t)
            rooms.append(_Room(instance=len(rooms) + 2, interior=box, side=side))
            u += w + t
        side_lengths.append(u - t if len(idx) else 0.0)
    length = max(side_lengths)
    corridor = _Box(0.0, length, 0.0, cw)
    return corridor, rooms, cw


def _place_doors(spec: FloorplanSpec, rng, corridor: _Box, rooms: list[_Room]) -> list[_Door]:
    t = spec.wall_thickness
    doors: list[_Door] = []

    def new_door(gap, along_u, swing, instances):
        return _Door(gap, along_u, swing, bool(rng.integers(0, 2)),
                     math.radians(_uniform(rng, spec.leaf_angle)), instances)

    def corridor_door(room: _Room, width: float):
        box = room.interior
        lo, hi = box.u0 + DOOR_MARGIN, box.u1 - DOOR_MARGIN - width
        if hi < lo:
            return None
        u0 = _uniform(rng, (lo, hi))
        if room.side > 0:
            gap = _Box(u0, u0 + width, corridor.v1, corridor.v1 + t)
        else:
            gap = _Box(u0, u0 + width, corridor.v0 - t, corridor.v0)
        return new_door(gap, True, room.side, (1, room.instance))

    def side_door(left: _Room, right: _Room, width: float):
        a, b = left.interior, right.interior
        v_lo = max(a.v0, b.v0) + DOOR_MARGIN
        v_hi = min(a.v1, b.v1) - DOOR_MARGIN - width
        if v_hi < v_lo:
            return None
        v0 = _uniform(rng, (v_lo, v_hi))
        gap = _Box(a.u1, b.u0, v0, v0 + width)
        swing = 1 if rng.integers(0, 2) else -1
        return new_door(gap, False, swing, (left.instance, right.instance))

    def register(door: _Door, width: float, owner: _Room, other: _Room | None) -> bool:
        swing_room, far_room = owner, other
        if not door.along_u and other is not None:
            # swing +1 along u goes into the right-hand room
            right = owner if owner.interior.u0 > other.interior.u0 else other
            left = other if right is owner else owner
            swing_room, far_room = (right, left) if door.swing > 0 else (left, right)
        leaf = _leaf_box(door, width)
        approach = _approach_box(door)
        if not leaf.inside(swing_room.interior.grow(CLEARANCE)):
            return False
        if any(leaf.overlaps(k) for k in swing_room.keepout):
            return False
        if far_room is not None and any(approach.overlaps(k) for k in far_room.keepout):
            return False
        swing_room.keepout.append(leaf)
        if far_room is not None:
            far_room.keepout.append(approach)
        doors.append(door)
        return True

    counts = [_integer(rng, spec.doors_per_room) for _ in rooms]
    for room in rooms:
        for _ in range(50):
            width = _uniform(rng, spec.door_width)
            door = corridor_door(room, width)
            if door is not None and register(door, width, room, None):
                break
        else:
            raise InfeasibleSpecError(f"cannot place a corridor door for room {room.instance}")

    by_side = {}
    for room in rooms:
        by_side.setdefault(room.side, []).append(room)
    linked = set()
    for k, room in enumerate(rooms):
        row = by_side[room.side]
        pos = row.index(room)
        neighbor = row[pos + 1] if pos + 1 < len(row) else None
        for _ in range(counts[k] - 1):
            to_neighbor = (neighbor is not None and (room.instance, neighbor.instance) not in linked
                           and rng.integers(0, 2) == 1)
            for _ in range(50):
                width = _uniform(rng, spec.door_width)
                if to_neighbor:
                    door = side_door(room, neighbor, width)
                    ok = door is not None and register(door, width, room, neighbor)
                else:
                    door = corridor_door(room, width)
                    ok = (door is not None and not any(
                        door.gap.grow(2 * DOOR_MARGIN).overlaps(d.gap) for d in doors)
                        and register(door, width, room, None))
                if ok:
                    if to_neighbor:
                        linked.add((room.instance, neighbor.instance))
                    break
    return doors


def _place_furniture(spec: FloorplanSpec, rng, rooms: list[_Room]):
    shapes = []
    for room in rooms:
        n = _integer(rng, spec.furniture_count)
        placed: list[_Box] = []
        area = room.interior.grow(-CLEARANCE)
        for _ in range(n):
            for _ in range(30):
                disc = bool(rng.integers(0, 2))
                if disc:
                    d = _uniform(rng, (0.2, 1.2))
                    sw = sh = d
                else:
                    sw, sh = _uniform(rng, (0.2, 1.2)), _uniform(rng, (0.2, 1.2))
                if area.u1 - area.u0 < sw or area.v1 - area.v0 < sh:
                    continue
                u0 = _uniform(rng, (area.u0, area.u1 - sw))
                v0 = _uniform(rng, (area.v0, area.v1 - sh))
                box = _Box(u0, u0 + sw, v0, v0 + sh)
                grown = box.grow(CLEARANCE)
                if any(grown.overlaps(k) for k in room.keepout) or any(grown.overlaps(p) for p in placed):
                    continue
                placed.append(box)
                shapes.append((room.instance, "disc" if disc else "rect", box))
                break
    return shapes


# ---------------------------------------------------------------------------
# rasterization
# ---------------------------------------------------------------------------

class _Frame:
    """Maps between the local metric frame and rotated grid cells."""

    def __init__(self, bounds: _Box, angle_deg: float, padding: float, res: float):
        self.res = res
        self.angle = math.radians(angle_deg)
        self.center = np.array([(bounds.u0 + bounds.u1) / 2, (bounds.v0 + bounds.v1) / 2])
        ca, sa = math.cos(self.angle), math.sin(self.angle)
        self.rot = np.array([[ca, -sa], [sa, ca]])
        corners = np.array([[bounds.u0, bounds.v0], [bounds.u1, bounds.v0],
                            [bounds.u1, bounds.v1], [bounds.u0, bounds.v1]]) - self.center
        rotated = corners @ self.rot.T
        ext = rotated.max(axis=0) - rotated.min(axis=0)
        pad = int(math.ceil(padding / res))
        self.width = max(WINDOW, int(math.ceil(ext[0] / res)) + 2 * pad)
        self.height = max(WINDOW, int(math.ceil(ext[1] / res)) + 2 * pad)
        rr, cc = np.mgrid[0:self.height, 0:self.width]
        self.U, self.V = self.to_local(rr, cc)

    def to_local(self, rows, cols):
        x = (np.asarray(cols, dtype=np.float64) - (self.width - 1) / 2.0) * self.res
        y = ((self.height - 1) / 2.0 - np.asarray(rows, dtype=np.float64)) * self.res
        # inverse rotation
        u = self.rot[0, 0] * x + self.rot[1, 0] * y + self.center[0]
        v = self.rot[0, 1] * x + self.rot[1, 1] * y + self.center[1]
        return u, v

    def to_cells(self, uv) -> np.ndarray:
        uv = np.asarray(uv, dtype=np.float64) - self.center
        xy = uv @ self.rot.T
        cols = xy[:, 0] / self.res + (self.width - 1) / 2.0
        rows = (self.height - 1) / 2.0 - xy[:, 1] / self.res
        return np.column_stack([rows, cols])

    def box_mask(self, box: _Box) -> np.ndarray:
        return (self.U >= box.u0) & (self.U < box.u1) & (self.V >= box.v0) & (self.V < box.v1)


def _leaf_segment(door: _Door, t: float):
    g = door.gap
    width = (g.u1 - g.u0) if door.along_u else (g.v1 - g.v0)
    ca, sa = math.cos(door.angle), math.sin(door.angle)
    if door.along_u:
        face = g.v1 if door.swing > 0 else g.v0
        hinge = np.array([g.u0 if door.hinge_at_start else g.u1, face])
        d = np.array([ca if door.hinge_at_start else -ca, door.swing * sa])
    else:
        face = g.u1 if door.swing > 0 else g.u0
        hinge = np.array([face, g.v0 if door.hinge_at_start else g.v1])
        d = np.array([door.swing * sa, ca if door.hinge_at_start else -ca])
    return hinge, d, width


def generate_floorplan(spec: FloorplanSpec) -> tuple[OccupancyGrid, GroundTruth]:
    """Sample, rotate and rasterize one annotated floorplan; deterministic in `spec.seed`."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    t = spec.wall_thickness
    corridor, rooms, cw = _layout(spec, rng)
    doors = _place_doors(spec, rng, corridor, rooms)
    furniture = _place_furniture(spec, rng, rooms)
    angle = _uniform(rng, spec.rotation)

    bounds = _Box(-t, corridor.u1 + t,
                  min([r.interior.v0 for r in rooms] + [corridor.v0]) - t,
                  max([r.interior.v1 for r in rooms] + [corridor.v1]) + t)
    frame = _Frame(bounds, angle, spec.padding, TARGET_RESOLUTION)
    shape = (frame.height, frame.width)

    cls = np.full(shape, EXTERIOR, dtype=np.uint8)
    inst = np.zeros(shape, dtype=np.int32)
    for box in [corridor] + [r.interior for r in rooms]:
        cls[frame.box_mask(box.grow(t))] = WALL
    cls[frame.box_mask(corridor)] = CORRIDOR
    inst[frame.box_mask(corridor)] = 1
    for room in rooms:
        m = frame.box_mask(room.interior)
        cls[m] = ROOM
        inst[m] = room.instance

    annotations = []
    for k, door in enumerate(doors):
        g = door.gap
        corners_uv = [(g.u0, g.v0), (g.u1, g.v0), (g.u1, g.v1), (g.u0, g.v1)]
        ann = DoorAnnotation(k, frame.to_cells(corners_uv), door.instances)
        cells = ann.rect.rasterize(shape)
        cls[cells[:, 0], cells[:, 1]] = DOOR
        inst[cells[:, 0], cells[:, 1]] = 0
        annotations.append(ann)

    occupied = np.zeros(shape, dtype=bool)
    occupied[cls == WALL] = True
    for _, kind, box in furniture:
        if kind == "rect":
            occupied |= frame.box_mask(box)
        else:
            cu, cv = (box.u0 + box.u1) / 2, (box.v0 + box.v1) / 2
            r = (box.u1 - box.u0) / 2
            occupied |= (frame.U - cu) ** 2 + (frame.V - cv) ** 2 < r * r
    for door in doors:
        hinge, d, width = _leaf_segment(door, t)
        du, dv = frame.U - hinge[0], frame.V - hinge[1]
        along = du * d[0] + dv * d[1]
        across = -du * d[1] + dv * d[0]
        leaf = (along >= 0) & (along <= width) & (np.abs(across) <= LEAF_THICKNESS / 2)
        occupied |= leaf & (cls != DOOR)

    cells = np.where(occupied, 1.0, 0.0)
    unknown = cls == EXTERIOR
    cells[unknown] = 0.5
    grid = OccupancyGrid(cells, TARGET_RESOLUTION, (0.0, 0.0), unknown)
    gt = GroundTruth(annotations, cls, inst, [1], [r.instance for r in rooms])
    return grid, gt


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------

def _edge_zone(occ: np.ndarray, free: np.ndarray):
    """Known cells with an 8-neighbor of the opposite state."""
    k = np.ones((3, 3), dtype=bool)
    near_free = ndimage.binary_dilation(free, structure=k)
    near_occ = ndimage.binary_dilation(occ, structure=k)
    return occ & near_free, free & near_occ


def apply_noise(g: OccupancyGrid, n: NoiseSpec, seed: int = 0) -> OccupancyGrid:
    """Edge salt/pepper, then additive Gaussian noise, then free-space pepper."""
    if n.level == 0:
        return OccupancyGrid(g.cells.copy(), g.resolution, g.origin, g.unknown.copy())
    rng = np.random.default_rng(seed)
    shape = g.cells.shape
    cells = g.cells.copy()
    known = ~g.unknown
    occ = known & (cells >= 0.5)
    free = known & (cells < 0.5)

    u_edge = rng.random(shape)
    noise = rng.normal(0.0, 1.0, shape)
    u_free = rng.random(shape)

    if n.kind == "combined":
        occ_edge, free_edge = _edge_zone(occ, free)
        salt = occ_edge & (u_edge < n.edge_salt)
        pepper = free_edge & (u_edge < n.edge_pepper)
        cells[salt] = 0.0
        cells[pepper] = 1.0
        free = (free & ~pepper) | salt
    cells = np.clip(cells + n.sigma * noise, 0.0, 1.0)
    if n.kind == "combined":
        cells[free & (u_free < n.free_pepper)] = 1.0
    return OccupancyGrid(cells, g.resolution, g.origin, g.unknown.copy())


# ---------------------------------------------------------------------------
# training samples
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainingSample:
    patch: Patch
    label: str  # "door" or "background"
    mask: np.ndarray | None


def contained_doors(gt: GroundTruth, origin, margin: int = PATCH_MARGIN, window: int = WINDOW):
    """Doors whose rectangle lies inside the window with `margin` cells to every border."""
    r0, c0 = origin
    lo_r, hi_r = r0 - 0.5 + margin, r0 + window - 0.5 - margin
    lo_c, hi_c = c0 - 0.5 + margin, c0 + window - 0.5 - margin
    out = []
    for door in gt.doors:
        c = door.corners
        if (c[:, 0].min() >= lo_r and c[:, 0].max() <= hi_r
                and c[:, 1].min() >= lo_c and c[:, 1].max() <= hi_c):
            out.append(door)
    return out


def patch_doors(gt: GroundTruth, origin, margin: int = PATCH_MARGIN):
    """Window-local doorway mask of the contained doors, or None if there are none."""
    doors = contained_doors(gt, origin, margin)
    if not doors:
        return None
    mask = np.zeros((WINDOW, WINDOW), dtype=bool)
    for door in doors:
        cells = gt.door_cells(door) - np.asarray(origin)
        mask[cells[:, 0], cells[:, 1]] = True
    return mask


def extract_training_samples(g: OccupancyGrid, t: GroundTruth, stride: int = 8, seed: int = 0,
                             margin: int = PATCH_MARGIN, balance: bool = True) -> list[TrainingSample]:
    """Labeled patches; background is subsampled to the door count when balancing."""
    door, background = [], []
    for patch in sliding_windows(g, stride):
        mask = patch_doors(t, patch.origin, margin)
        if mask is None:
            background.append(TrainingSample(patch, "background", None))
        else:
            door.append(TrainingSample(patch, "door", mask))
    if balance and door and len(background) > len(door):
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(background), size=len(door), replace=False))
        background = [background[i] for i in keep]
    if balance and door and len(door) > len(background):
        door = door[:len(background)]
    samples = door + background
    samples.sort(key=lambda s: s.patch.origin)
    return samples


def inject_false_hypotheses(occupied: np.ndarray, count: int, seed: int = 0,
                            avoid: np.ndarray | None = None, clearance: int = 3,
                            attempts: int = 5000) -> list[np.ndarray]:
    """Door-sized free rectangles placed mid-room, clear of any occupied cell.

    Each rectangle keeps `clearance` free cells around it, so closing it never
    separates free space. Returns cell arrays.
    """
    rng = np.random.default_rng(seed)
    blocked = occupied.copy()
    if avoid is not None and len(avoid):
        blocked[avoid[:, 0], avoid[:, 1]] = True
    h, w = blocked.shape
    placed = []
    for _ in range(attempts):
        if len(placed) == count:
            break
        length = int(rng.integers(14, 33))
        thick = 4
        if rng.integers(0, 2):
            length, thick = thick, length
        r0 = int(rng.integers(clearance, h - length - clearance))
        c0 = int(rng.integers(clearance, w - thick - clearance))
        window = blocked[r0 - clearance:r0 + length + clearance, c0 - clearance:c0 + thick + clearance]
        if window.any():
            continue
        rr, cc = np.mgrid[r0:r0 + length, c0:c0 + thick]
        placed.append(np.column_stack([rr.ravel(), cc.ravel()]).astype(np.int64))
        blocked[r0 - clearance:r0 + length + clearance, c0 - clearance:c0 + thick + clearance] = True
    return placed


# ---------------------------------------------------------------------------
# ground truth files
# ---------------------------------------------------------------------------

def _palette_image(codes: np.ndarray, palette: dict) -> Image.Image:
    img = Image.fromarray(codes.astype(np.uint8), mode="P")
    flat = []
    for k in range(256):
        flat.extend(palette.get(k, (0, 0, 0)))
    img.putpalette(flat)
    return img


def save_ground_truth(gt: GroundTruth, path) -> Path:
    """Write <stem>.json with door rectangles plus class and instance map images."""
    path = Path(path)
    stem = path.stem
    class_name = f"{stem}_classes.png"
    inst_name = f"{stem}_instances.png"
    _palette_image(gt.class_map, CLASS_PALETTE).save(path.parent / class_name)
    if gt.instance_map.max() > 255:
        raise ValueError("too many instances for an 8-bit instance image")
    Image.fromarray(gt.instance_map.astype(np.uint8), mode="L").save(path.parent / inst_name)
    doc = {
        "version": GT_VERSION,
        "class_codes": {str(k): v for k, v in CLASS_NAMES.items()},
        "class_map": class_name,
        "instance_map": inst_name,
        "corridor_ids": list(gt.corridor_ids),
        "room_ids": list(gt.room_ids),
        "doors": [{"id": d.id,
                   "mbr_corners": [[round(float(x), 6) for x in p] for p in d.corners],
                   "instances": list(d.instances)} for d in gt.doors],
    }
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def load_ground_truth(path) -> GroundTruth:
    path = Path(path)
    doc = json.loads(path.read_text())
    if doc.get("version") != GT_VERSION:
        raise ValueError(f"unsupported ground truth version {doc.get('version')!r}")
    with Image.open(path.parent / doc["class_map"]) as img:
        cls = np.array(img, dtype=np.uint8)
    with Image.open(path.parent / doc["instance_map"]) as img:
        inst = np.array(img, dtype=np.int32)
    doors = [DoorAnnotation(int(d["id"]), np.array(d["mbr_corners"], dtype=np.float64),
                            tuple(int(x) for x in d["instances"])) for d in doc["doors"]]
    return GroundTruth(doors, cls, inst, list(doc["corridor_ids"]), list(doc["room_ids"]))
