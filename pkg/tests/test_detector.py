import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from semgrid.detector import (DEFAULT_THRESHOLD, DetectionBox, DetectionsFormatError,
                              DetectorConfig, baseline_detect, detect, filter_detections,
                              load_detections, oracle_detect, rle_decode, rle_encode,
                              save_detections)
from semgrid.geometry import RotatedRect
from semgrid.grid import Patch, sliding_windows
from semgrid.simulator import FloorplanSpec, NoiseSpec, apply_noise, generate_floorplan, patch_doors


def wall_patch(gap_start, gap_width, rows=(30, 34)):
    data = np.zeros((64, 64))
    data[rows[0]:rows[1], :] = 1.0
    data[rows[0]:rows[1], gap_start:gap_start + gap_width] = 0.0
    return Patch((0, 0), data)


def rotated_wall_patch(angle_deg, gap=20, thickness=4):
    """Two wall bars on one line at `angle_deg`, separated by `gap` cells."""
    data = np.zeros((64, 64))
    t = math.radians(angle_deg)
    u = np.array([math.sin(t), math.cos(t)])
    half = gap / 2 + 15
    for sign in (1, -1):
        center = np.array([31.5, 31.5]) + sign * u * half
        bar = RotatedRect(tuple(center), 30.0, float(thickness), t).rasterize((64, 64))
        data[bar[:, 0], bar[:, 1]] = 1.0
    return Patch((0, 0), data)


def transformed(p, f):
    return Patch(p.origin, np.ascontiguousarray(f(p.data)), np.ascontiguousarray(f(p.unknown)))


@pytest.fixture(scope="module")
def sim_patches():
    out = []
    for seed in (0, 1):
        g, gt = generate_floorplan(FloorplanSpec(seed=seed))
        g = apply_noise(g, NoiseSpec("combined", 3), seed)
        out.extend((p, patch_doors(gt, p.origin)) for p in sliding_windows(g, 16))
    return out


class TestBaseline:
    def test_all_free(self):
        conf, mask = baseline_detect(Patch((0, 0), np.zeros((64, 64))))
        assert conf < DEFAULT_THRESHOLD and mask is None

    def test_straight_wall(self):
        conf, mask = baseline_detect(wall_patch(0, 0))
        assert conf == 0.0 and mask is None

    def test_twenty_cell_gap(self):
        conf, mask = baseline_detect(wall_patch(22, 20))
        assert conf >= DEFAULT_THRESHOLD
        cols = np.flatnonzero(mask.any(axis=0))
        assert cols.min() == 22 and cols.max() == 41 and len(cols) == 20
        rows = np.flatnonzero(mask.any(axis=1))
        assert set(rows) <= set(range(30, 34))
        assert not (mask & (wall_patch(22, 20).data > 0.5)).any()

    def test_six_cell_gap(self):
        conf, _ = baseline_detect(wall_patch(29, 6))
        assert conf < DEFAULT_THRESHOLD

    @pytest.mark.parametrize("width", [14, 20, 26, 32])
    def test_gap_widths_inside_interval(self, width):
        conf, mask = baseline_detect(wall_patch(32 - width // 2, width))
        assert conf >= DEFAULT_THRESHOLD
        assert len(np.flatnonzero(mask.any(axis=0))) == width

    @pytest.mark.parametrize("width", [8, 12, 36, 40])
    def test_gap_widths_outside_interval(self, width):
        conf, _ = baseline_detect(wall_patch(32 - width // 2, width))
        assert conf < DEFAULT_THRESHOLD

    def test_centrality_raises_confidence(self):
        mid, _ = baseline_detect(wall_patch(21, 23))
        edge, _ = baseline_detect(wall_patch(25, 15))
        assert mid > edge

    @pytest.mark.parametrize("angle", [0, 17, 30, 45, 62, 90, 135, 160])
    def test_rotated_gap(self, angle):
        conf, mask = baseline_detect(rotated_wall_patch(angle))
        assert conf >= DEFAULT_THRESHOLD
        assert mask[28:36, 28:36].any()

    def test_thick_block_is_not_a_jamb(self):
        data = np.zeros((64, 64))
        data[30:34, :20] = 1.0
        data[10:54, 40:64] = 1.0   # 24-cell thick block, not a wall
        conf, _ = baseline_detect(Patch((0, 0), data))
        assert conf < DEFAULT_THRESHOLD

    def test_gap_without_free_sides(self):
        data = np.ones((64, 64))
        data[30:34, 22:42] = 0.0   # a pocket enclosed by occupied space
        conf, _ = baseline_detect(Patch((0, 0), data))
        assert conf < DEFAULT_THRESHOLD

    def test_unknown_counts_as_occupied(self):
        p = wall_patch(22, 20)
        unknown = np.zeros((64, 64), dtype=bool)
        unknown[30:34, 22:42] = True
        conf, _ = baseline_detect(Patch((0, 0), np.where(unknown, 0.5, p.data), unknown))
        assert conf < DEFAULT_THRESHOLD

    @pytest.mark.parametrize("f", [np.transpose, lambda a: a[::-1, ::-1],
                                   lambda a: a[::-1, ::-1].T])
    def test_symmetry_on_fixtures(self, f):
        for p in (wall_patch(22, 20), rotated_wall_patch(30), rotated_wall_patch(62, 17)):
            conf, mask = baseline_detect(p)
            conf2, mask2 = baseline_detect(transformed(p, f))
            assert conf == conf2
            assert np.array_equal(f(mask), mask2)

    def test_symmetry_on_simulated_patches(self, sim_patches):
        for p, _ in sim_patches[::3]:
            conf, mask = baseline_detect(p)
            for f in (np.transpose, lambda a: a[::-1, ::-1]):
                conf2, mask2 = baseline_detect(transformed(p, f))
                assert conf == conf2
                assert (mask is None and mask2 is None) or np.array_equal(f(mask), mask2)

    @settings(max_examples=60, deadline=None)
    @given(hnp.arrays(bool, (64, 64), elements=st.booleans()).map(lambda a: a.astype(float)))
    def test_symmetry_on_random_patches(self, data):
        p = Patch((0, 0), data)
        conf, _ = baseline_detect(p)
        assert 0.0 <= conf <= 1.0
        assert baseline_detect(transformed(p, np.transpose))[0] == conf
        assert baseline_detect(transformed(p, lambda a: a[::-1, ::-1]))[0] == conf

    @settings(max_examples=40, deadline=None)
    @given(st.integers(14, 32), st.integers(2, 6), st.floats(0, 180))
    def test_mask_avoids_occupied(self, gap, thickness, angle):
        p = rotated_wall_patch(angle, gap, thickness)
        conf, mask = baseline_detect(p)
        if mask is not None:
            assert not (mask & (p.data >= 0.65)).any()
            assert conf >= DEFAULT_THRESHOLD

    def test_recall_on_simulated(self, sim_patches):
        doors = [(p, m) for p, m in sim_patches if m is not None]
        hits = sum(baseline_detect(p)[0] >= DEFAULT_THRESHOLD for p, _ in doors)
        assert hits / len(doors) >= 0.9


class TestContract:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            DetectorConfig(1.5)
        with pytest.raises(ValueError):
            DetectorConfig(0.5, "cnn")

    def test_box_validation(self):
        with pytest.raises(ValueError):
            DetectionBox((0, 0), 1.2)
        with pytest.raises(ValueError):
            DetectionBox((0, 0), 0.5, np.zeros((10, 10), dtype=bool))

    def test_detect_one_box_per_patch(self, sim_patches):
        patches = [p for p, _ in sim_patches[:20]]
        boxes = detect(patches)
        assert [b.origin for b in boxes] == [p.origin for p in patches]

    def test_detect_jobs_identical(self, sim_patches):
        patches = [p for p, _ in sim_patches[:40]]
        a, b = detect(patches), detect(patches, jobs=2)
        assert [x.confidence for x in a] == [x.confidence for x in b]
        for x, y in zip(a, b):
            assert (x.mask is None) == (y.mask is None)
            assert x.mask is None or np.array_equal(x.mask, y.mask)

    def test_oracle(self):
        g, gt = generate_floorplan(FloorplanSpec(seed=3))
        patches = sliding_windows(g)
        boxes = detect(patches, DetectorConfig(backend="oracle"), ground_truth=gt)
        for p, b in zip(patches, boxes):
            m = patch_doors(gt, p.origin)
            if m is None:
                assert b.confidence == 0.0 and b.mask is None
            else:
                assert b.confidence == 1.0 and np.array_equal(b.mask, m)
        assert any(b.confidence == 1.0 for b in boxes)

    def test_oracle_needs_ground_truth(self):
        with pytest.raises(ValueError):
            detect([], DetectorConfig(backend="oracle"))

    def test_filter(self):
        boxes = [DetectionBox((0, 8 * i), c) for i, c in enumerate((0.2, 0.7, 0.9))]
        assert [b.confidence for b in filter_detections(boxes, 0.5)] == [0.7, 0.9]
        assert len(filter_detections(boxes, 0.0)) == 3
        assert filter_detections(boxes, 1.0) == []
        assert [b.origin for b in filter_detections(boxes, 0.5)] == [(0, 8), (0, 16)]

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 1), max_size=20), st.floats(0, 1))
    def test_filter_is_subsequence(self, confs, threshold):
        boxes = [DetectionBox((0, i), c) for i, c in enumerate(confs)]
        kept = filter_detections(boxes, threshold)
        assert kept == [b for b in boxes if b.confidence >= threshold]


class TestIngest:
    def patches(self):
        g = generate_floorplan(FloorplanSpec(seed=1))[0]
        return sliding_windows(g, 32)

    def test_round_trip(self, tmp_path):
        patches = self.patches()
        rng = np.random.default_rng(0)
        boxes = [DetectionBox(p.origin, round(float(rng.random()), 3),
                              rng.random((64, 64)) > 0.9 if i % 3 == 0 else None)
                 for i, p in enumerate(patches)]
        save_detections(boxes, tmp_path / "d.json")
        back = detect(patches, DetectorConfig(backend="ingest"), detections_path=tmp_path / "d.json")
        assert [b.confidence for b in back] == [b.confidence for b in boxes]
        for x, y in zip(back, boxes):
            assert (x.mask is None) == (y.mask is None)
            assert x.mask is None or np.array_equal(x.mask, y.mask)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DetectionsFormatError):
            detect(self.patches(), DetectorConfig(backend="ingest"),
                   detections_path=tmp_path / "none.json")

    def test_no_path(self):
        with pytest.raises(DetectionsFormatError):
            detect(self.patches(), DetectorConfig(backend="ingest"))

    def test_count_mismatch(self, tmp_path):
        patches = self.patches()
        save_detections([DetectionBox(patches[0].origin, 0.5)], tmp_path / "d.json")
        with pytest.raises(DetectionsFormatError):
            detect(patches, DetectorConfig(backend="ingest"), detections_path=tmp_path / "d.json")

    def test_origin_mismatch(self, tmp_path):
        patches = self.patches()
        boxes = [DetectionBox((p.origin[0] + 1, p.origin[1]), 0.1) for p in patches]
        save_detections(boxes, tmp_path / "d.json")
        with pytest.raises(DetectionsFormatError):
            detect(patches, DetectorConfig(backend="ingest"), detections_path=tmp_path / "d.json")

    @pytest.mark.parametrize("doc", [
        "not json",
        json.dumps({"records": []}),
        json.dumps({"version": 99, "records": []}),
        json.dumps({"version": 1, "window": 32, "records": []}),
        json.dumps({"version": 1, "records": [{"origin": [0, 0]}]}),
        json.dumps({"version": 1, "records": [{"origin": [0, 0], "confidence": 2.0}]}),
        json.dumps({"version": 1, "records": [{"origin": [0, 0], "confidence": 0.5,
                                               "mask_rle": [10, 5]}]}),
    ])
    def test_malformed(self, tmp_path, doc):
        (tmp_path / "d.json").write_text(doc)
        with pytest.raises(DetectionsFormatError):
            load_detections(tmp_path / "d.json")


@settings(max_examples=100, deadline=None)
@given(hnp.arrays(bool, (64, 64), elements=st.booleans()))
def test_rle_round_trip(mask):
    runs = rle_encode(mask)
    assert sum(runs) == mask.size
    assert all(r > 0 for r in runs[1:])
    assert np.array_equal(rle_decode(runs, mask.shape), mask)


def test_rle_examples():
    assert rle_encode(np.array([[0, 0, 1, 1, 1, 0]], dtype=bool)) == [2, 3, 1]
    assert rle_encode(np.array([[1, 0]], dtype=bool)) == [0, 1, 1]


def test_oracle_recall_is_one():
    g, gt = generate_floorplan(FloorplanSpec(seed=4))
    patches = sliding_windows(g)
    boxes = oracle_detect(patches, gt)
    labeled = [patch_doors(gt, p.origin) is not None for p in patches]
    assert all(b.confidence == 1.0 for b, lab in zip(boxes, labeled) if lab)
