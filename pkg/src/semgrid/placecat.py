"""Corridor confidence from door count and shape compactness, and room/corridor labels."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

CORRIDOR_THRESHOLD = 0.5
FALLBACK_THRESHOLD = 0.2


class NoDoorsError(ValueError):
    """Raised when the door score is undefined because no doors were found."""


@dataclass(frozen=True)
class EntityScore:
    segment: int
    n_cells: int
    n_d: int
    p_d: float
    s: float
    s_eac: float
    p_s: float
    p_comb: float = 0.0
    label: str = "room"
    uncertain: bool = False

    def as_dict(self) -> dict:
        return {"segment": self.segment, "n_cells": self.n_cells, "n_d": self.n_d,
                "p_d": round(self.p_d, 12), "s": round(self.s, 9), "s_eac": round(self.s_eac, 9),
                "p_s": round(self.p_s, 12), "p_comb": round(self.p_comb, 12),
                "label": self.label, "uncertain": self.uncertain}


def door_counts(adjacency, segments) -> dict[int, int]:
    counts = {int(s): 0 for s in segments}
    for pair in adjacency.values():
        for s in set(pair):
            if s not in counts:
                raise KeyError(f"door links unknown segment {s}")
            counts[s] += 1
    return counts


def compute_pd(adjacency, segments) -> dict[int, float]:
    """Door count per segment over the largest door count."""
    counts = door_counts(adjacency, segments)
    top = max(counts.values(), default=0)
    if top == 0:
        raise NoDoorsError("no doors link any segment")
    return {s: n / top for s, n in counts.items()}


def compute_spin(cells, squared: bool = True) -> tuple[float, float, float]:
    """(s, s_EAC, p_s) of a cell set.

    s is the mean squared distance of cell centers to their centroid; the
    equal-area disk has s_EAC = r^2 / 2 with r = sqrt(n / pi). With
    `squared=False` the mean plain distance is used and compared with the
    disk's 2r/3.
    """
    pts = np.asarray(cells, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        raise ValueError("empty segment")
    d2 = ((pts - pts.mean(axis=0)) ** 2).sum(axis=1)
    r_eac = math.sqrt(n / math.pi)
    if squared:
        s = float(d2.mean())
        s_eac = 0.5 * r_eac ** 2
    else:
        s = float(np.sqrt(d2).mean())
        s_eac = 2.0 * r_eac / 3.0
    if n == 1 or s == 0.0:
        return s, s_eac, 1.0
    return s, s_eac, min(1.0, s_eac / s)


def combine_and_label(scores, threshold: float = CORRIDOR_THRESHOLD,
                      fallback: float = FALLBACK_THRESHOLD) -> list[EntityScore]:
    """p_comb = p_d (1 - p_s); corridor above `threshold`, or the strict best above `fallback`."""
    scored = [replace(e, p_comb=e.p_d * (1.0 - e.p_s)) for e in scores]
    best = max((e.p_comb for e in scored), default=0.0)
    n_best = sum(1 for e in scored if e.p_comb == best)
    out = []
    for e in scored:
        corridor = e.p_comb >= threshold or (n_best == 1 and e.p_comb == best and e.p_comb >= fallback)
        out.append(replace(e, label="corridor" if corridor else "room",
                           uncertain=fallback <= e.p_comb < threshold))
    return out


def strict_max(scores) -> int | None:
    """Segment id with the strictly largest p_comb, or None on a tie."""
    if not scores:
        return None
    best = max(e.p_comb for e in scores)
    top = [e.segment for e in scores if e.p_comb == best]
    return top[0] if len(top) == 1 else None


def categorize(labels, adjacency, squared: bool = True, threshold: float = CORRIDOR_THRESHOLD):
    """Scores for every segment of a label map; all rooms when no door exists.

    Returns (scores, no_doors flag).
    """
    segments = list(range(1, labels.count + 1))
    try:
        p_d = compute_pd(adjacency, segments)
        no_doors = False
    except NoDoorsError:
        p_d = {s: 0.0 for s in segments}
        no_doors = True
    counts = door_counts(adjacency, segments)
    flat = labels.labels.ravel()
    order = np.argsort(flat, kind="stable")
    bounds = np.searchsorted(flat[order], np.arange(labels.count + 2))
    w = labels.labels.shape[1]
    scores = []
    for s in segments:
        idx = order[bounds[s]:bounds[s + 1]]
        cells = np.column_stack([idx // w, idx % w])
        spin, s_eac, p_s = compute_spin(cells, squared)
        scores.append(EntityScore(s, len(cells), counts[s], p_d[s], spin, s_eac, p_s))
    return combine_and_label(scores, threshold), no_doors


def scores_json(scores, no_doors: bool = False) -> str:
    doc = {"no_doors": no_doors, "strict_max": strict_max(scores),
           "corridors": [e.segment for e in scores if e.label == "corridor"],
           "segments": [e.as_dict() for e in scores]}
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"
