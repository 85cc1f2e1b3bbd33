"""Door hypothesis validation by repeated segmentation, and door-to-segment association."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .grid import BinaryGrid
from .segmentation import MIN_SEGMENT_SIZE, SegmentLabelMap, close_doors, count_segments, segment

_NEIGHBORS = ((-1, 0), (1, 0), (0, -1), (0, 1))


@dataclass
class ValidationResult:
    hypotheses: list
    labels: SegmentLabelMap
    k0: int
    k_open: dict[int, int]
    adjacency: dict[int, tuple[int, int]]
    ambiguous: list[int] = field(default_factory=list)
    unlinked: list[int] = field(default_factory=list)

    @property
    def valid(self) -> list:
        return [h for h in self.hypotheses if h.state == "valid"]

    @property
    def rejected(self) -> list:
        return [h for h in self.hypotheses if h.state == "rejected"]

    def report(self) -> dict:
        return {
            "k0": self.k0,
            "k_final": self.labels.count,
            "valid": len(self.valid),
            "rejected": len(self.rejected),
            "hypotheses": [{
                "id": h.id,
                "state": h.state,
                "k_open": self.k_open[h.id],
                "ambiguous": h.id in self.ambiguous,
                "linked": list(self.adjacency[h.id]) if h.id in self.adjacency else None,
                "cells": int(len(h.mask)),
            } for h in self.hypotheses],
        }

    def report_json(self) -> str:
        return json.dumps(self.report(), indent=1, sort_keys=True) + "\n"


def border_cells(cells: np.ndarray, shape) -> np.ndarray:
    """Cells 4-adjacent to the set but outside it, clipped to the grid."""
    inside = set(map(tuple, cells.tolist()))
    out = set()
    h, w = shape
    for r, c in inside:
        for dr, dc in _NEIGHBORS:
            q = (r + dr, c + dc)
            if q not in inside and 0 <= q[0] < h and 0 <= q[1] < w:
                out.add(q)
    return np.array(sorted(out), dtype=np.int64).reshape(-1, 2)


def adjacent_segments(cells: np.ndarray, labels: np.ndarray) -> list[tuple[int, int]]:
    """(label, contact count) pairs around a cell set, most contact first, then lowest id."""
    ring = border_cells(cells, labels.shape)
    if len(ring) == 0:
        return []
    found = labels[ring[:, 0], ring[:, 1]]
    found = found[found > 0]
    ids, counts = np.unique(found, return_counts=True)
    pairs = sorted(zip(ids.tolist(), counts.tolist()), key=lambda p: (-p[1], p[0]))
    return pairs


def associate_doors(valid, labels: SegmentLabelMap):
    """Map each valid door to the unordered pair of segments bordering its footprint.

    Returns (adjacency, unlinked ids). When more than two segments touch a door,
    the two with the most contact cells are taken.
    """
    adjacency = {}
    unlinked = []
    for h in valid:
        around = adjacent_segments(h.footprint, labels.labels)
        if len(around) < 2:
            unlinked.append(h.id)
            continue
        a, b = around[0][0], around[1][0]
        adjacency[h.id] = (min(a, b), max(a, b))
    return adjacency, unlinked


def validate(b: BinaryGrid, hyps, method: str = "components",
             min_size: int = MIN_SEGMENT_SIZE, intensity=None) -> ValidationResult:
    """Decide each hypothesis by opening it alone against the all-closed map.

    K(h) = K0 - 1 means valid, K(h) >= K0 rejected; K(h) < K0 - 1 is reported
    as ambiguous and kept as valid. The final label map closes the valid
    hypotheses and leaves rejected ones at their original occupancy.
    """
    hyps = sorted(hyps, key=lambda h: h.id)
    if len({h.id for h in hyps}) != len(hyps):
        raise ValueError("duplicate hypothesis ids")
    closed = close_doors(b, hyps)
    k0 = count_segments(closed, method, min_size)
    k_open = {}
    ambiguous = []
    occ = closed.occupied
    for h in hyps:
        opened = occ.copy()
        cells = h.footprint
        opened[cells[:, 0], cells[:, 1]] = False
        k = count_segments(BinaryGrid(opened), method, min_size)
        k_open[h.id] = k
        if k == k0 - 1:
            h.state = "valid"
        elif k < k0 - 1:
            h.state = "valid"
            ambiguous.append(h.id)
        else:
            h.state = "rejected"
        h.ambiguous = h.id in ambiguous

    valid = [h for h in hyps if h.state == "valid"]
    final = close_doors(b, valid)
    labels = segment(final, method, intensity=intensity, min_size=min_size)
    adjacency, unlinked = associate_doors(valid, labels)
    for h in hyps:
        h.linked = adjacency.get(h.id)
    return ValidationResult(hyps, labels, k0, k_open, adjacency, ambiguous, unlinked)
