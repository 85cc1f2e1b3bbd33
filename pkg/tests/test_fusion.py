import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from semgrid.detector import DetectionBox
from semgrid.fusion import (MAX_AREA_RATIO, DetectionCluster, area_ratio, build_hypotheses,
                            cluster, connected_parts, erode_2x2, fuse_masks, iou,
                            load_hypotheses, make_hypothesis, mbr, merge_touching,
                            save_hypotheses, split_if_merged, watershed)
from semgrid.geometry import as_cells


def blk(r0, r1, c0, c1):
    rr, cc = np.mgrid[r0:r1, c0:c1]
    return np.column_stack([rr.ravel(), cc.ravel()])


def box(r, c, conf=0.9, cells=None):
    mask = None
    if cells is not None:
        mask = np.zeros((64, 64), dtype=bool)
        cells = np.asarray(cells)
        mask[cells[:, 0], cells[:, 1]] = True
    return DetectionBox((r, c), conf, mask)


def iou_oracle(a, b):
    """Cell-set IoU by explicit enumeration."""
    sa = set(itertools.product(range(a[0], a[2]), range(a[1], a[3])))
    sb = set(itertools.product(range(b[0], b[2]), range(b[1], b[3])))
    return Fraction(len(sa & sb), len(sa | sb))


class TestIoU:
    def test_identity(self):
        assert iou((0, 0, 64, 64), (0, 0, 64, 64)) == 1.0

    def test_disjoint(self):
        assert iou((0, 0, 64, 64), (0, 64, 64, 128)) == 0.0

    def test_stride_neighbours(self):
        assert iou(box(0, 0), box(0, 8)) == 3584 / 4608
        assert iou_oracle((0, 0, 64, 64), (0, 8, 64, 72)) == Fraction(3584, 4608)
        assert iou(box(0, 0), box(8, 8)) == 3136 / 5056
        assert iou_oracle((0, 0, 64, 64), (8, 8, 72, 72)) == Fraction(3136, 5056)

    def test_zero_area(self):
        with pytest.raises(ValueError):
            iou((0, 0, 0, 5), (0, 0, 4, 4))

    @settings(max_examples=60, deadline=None)
    @given(*[st.integers(0, 12)] * 4, *[st.integers(1, 8)] * 4)
    def test_matches_enumeration(self, r0, c0, r1, c1, h0, w0, h1, w1):
        a, b = (r0, c0, r0 + h0, c0 + w0), (r1, c1, r1 + h1, c1 + w1)
        assert iou(a, b) == pytest.approx(float(iou_oracle(a, b)))
        assert iou(a, b) == iou(b, a)


class TestCluster:
    def test_empty(self):
        assert cluster([]) == []

    def test_single(self):
        assert len(cluster([box(0, 0)])) == 1

    def test_horizontal_neighbours_join(self):
        assert len(cluster([box(0, 0), box(0, 8)])) == 1

    def test_diagonal_neighbours_split(self):
        assert len(cluster([box(0, 0), box(8, 8)])) == 2

    def test_seed_is_most_confident(self):
        cs = cluster([box(0, 8, 0.6), box(0, 0, 0.95), box(0, 16, 0.7)])
        assert cs[0].seed.origin == (0, 0)
        assert [b.origin for b in cs[0].members] == [(0, 0), (0, 8)]
        assert cs[0].confidence == 0.95
        assert [b.origin for b in cs[1].members] == [(0, 16)]

    def test_ties_by_origin(self):
        cs = cluster([box(0, 16, 0.8), box(0, 0, 0.8), box(0, 8, 0.8)])
        assert cs[0].seed.origin == (0, 0)

    @settings(max_examples=80, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6),
                              st.sampled_from([0.5, 0.6, 0.7, 0.8, 0.9, 1.0])),
                    min_size=1, max_size=25, unique_by=lambda t: t[:2]))
    def test_partition_and_seed_overlap(self, spec):
        boxes = [box(8 * r, 8 * c, conf) for r, c, conf in spec]
        cs = cluster(boxes)
        members = [b for c in cs for b in c.members]
        assert sorted(b.origin for b in members) == sorted(b.origin for b in boxes)
        for c in cs:
            assert all(iou(c.seed, b) > 0.7 for b in c.members[1:])
            assert c.seed.confidence == c.confidence
        # permuting the input never changes the clustering
        again = cluster(list(reversed(boxes)))
        assert [[b.origin for b in c.members] for c in again] == \
            [[b.origin for b in c.members] for c in cs]


class TestFuse:
    def test_single_member(self):
        cells = blk(10, 14, 5, 25)
        fused = fuse_masks(DetectionCluster([box(8, 0, cells=cells)]))
        assert np.array_equal(fused, as_cells(cells + (8, 0)))

    def test_disjoint(self):
        a, b = blk(0, 4, 0, 10), blk(20, 25, 0, 10)
        fused = fuse_masks(DetectionCluster([box(0, 0, cells=a), box(0, 0, cells=b)]))
        assert len(fused) == 90

    def test_shared_cells(self):
        a = blk(0, 4, 0, 10)                      # 40 cells
        b = np.concatenate([blk(0, 1, 0, 10), blk(4, 8, 0, 10)])  # 50 cells, 10 shared
        fused = fuse_masks(DetectionCluster([box(0, 0, cells=a), box(0, 0, cells=b)]))
        assert len(fused) == 80

    def test_offsets_into_map(self):
        fused = fuse_masks(DetectionCluster([box(0, 0, cells=[(5, 5)]), box(0, 8, cells=[(5, 5)])]))
        assert fused.tolist() == [[5, 5], [5, 13]]

    def test_missing_mask(self):
        with pytest.raises(ValueError):
            fuse_masks(DetectionCluster([box(0, 0)]))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.lists(st.tuples(st.integers(0, 63), st.integers(0, 63)), min_size=1,
                             max_size=30), min_size=1, max_size=4))
    def test_union_bounds(self, masks):
        boxes = [box(0, 0, cells=m) for m in masks]
        fused = {tuple(p) for p in fuse_masks(DetectionCluster(boxes))}
        sets = [{tuple(p) for p in m} for m in masks]
        assert all(s <= fused for s in sets)
        assert len(fused) <= sum(len(s) for s in sets)


class TestMBR:
    def test_single_cell(self):
        assert mbr([(3, 3)]).area == pytest.approx(1.0)

    def test_block(self):
        r = mbr(blk(0, 3, 0, 10))
        assert r.area == pytest.approx(30.0)
        assert area_ratio(blk(0, 3, 0, 10)) == pytest.approx(1.0)

    def test_empty(self):
        with pytest.raises(ValueError):
            mbr(np.zeros((0, 2)))

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)), min_size=1, max_size=40))
    def test_contains_and_bounds(self, cells):
        cells = as_cells(cells)
        r = mbr(cells)
        assert r.contains(cells).all()
        assert r.area >= len(cells) - 1e-6


class TestErode:
    def test_anchored_kernel(self):
        m = np.zeros((5, 5), dtype=bool)
        m[1:4, 1:4] = True
        e = erode_2x2(m)
        assert np.argwhere(e).tolist() == [[1, 1], [1, 2], [2, 1], [2, 2]]

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), max_size=60))
    def test_matches_scipy(self, cells):
        m = np.zeros((10, 10), dtype=bool)
        for r, c in cells:
            m[r, c] = True
        ref = ndimage.binary_erosion(m, np.ones((2, 2)), origin=(-1, -1), border_value=0)
        assert np.array_equal(erode_2x2(m), ref)


class TestWatershed:
    def test_two_basins(self):
        mask = np.ones((1, 9), dtype=bool)
        surface = np.array([[0, 1, 2, 3, 9, 3, 2, 1, 0]], dtype=float)
        markers = np.zeros((1, 9), dtype=np.int32)
        markers[0, 0], markers[0, 8] = 1, 2
        labels = watershed(surface, markers, mask)
        assert labels.tolist() == [[1, 1, 1, 1, 1, 2, 2, 2, 2]]

    def test_respects_mask(self):
        mask = np.ones((3, 3), dtype=bool)
        mask[1, 1] = False
        markers = np.zeros((3, 3), dtype=np.int32)
        markers[0, 0] = 1
        labels = watershed(np.zeros((3, 3)), markers, mask)
        assert labels[1, 1] == 0 and (labels[mask] == 1).all()


class TestSplit:
    def test_compact_unchanged(self):
        cells = blk(0, 4, 0, 20)
        parts = split_if_merged(cells)
        assert len(parts) == 1 and np.array_equal(parts[0], as_cells(cells))

    def test_l_shape_two_doors(self):
        cells = np.concatenate([blk(0, 4, 0, 20), blk(3, 23, 18, 22)])
        parts = split_if_merged(cells)
        assert len(parts) == 2
        for p in parts:
            assert len(p) == pytest.approx(80, rel=0.10)

    def test_staircase_three_doors(self):
        cells = np.concatenate([blk(0, 4, 0, 20), blk(3, 7, 19, 39), blk(6, 10, 38, 58)])
        parts = split_if_merged(cells)
        assert len(parts) == 3
        for p in parts:
            assert len(p) == pytest.approx(80, rel=0.10)

    def test_collinear_bridged_bars_stay_whole(self):
        # end-to-end bars along one axis keep a tight MBR, so the area guard never fires
        cells = np.concatenate([blk(0, 4, 0, 20), blk(1, 2, 20, 21), blk(0, 4, 21, 41),
                                blk(1, 2, 41, 42), blk(0, 4, 42, 62)])
        assert area_ratio(cells) <= MAX_AREA_RATIO
        assert len(split_if_merged(cells)) == 1

    def test_empty(self):
        with pytest.raises(ValueError):
            split_if_merged(np.zeros((0, 2)))

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 30), st.integers(0, 30), st.integers(2, 6),
                              st.integers(2, 25)), min_size=1, max_size=4))
    def test_partition_and_bound(self, rects):
        cells = as_cells(np.concatenate([blk(r, r + h, c, c + w) for r, c, h, w in rects]))
        parts = split_if_merged(cells)
        flat = np.concatenate(parts)
        assert len(flat) == len(cells)
        assert np.array_equal(as_cells(flat), cells)
        for p in parts:
            hyp = make_hypothesis(0, p)
            assert hyp.area_ratio <= MAX_AREA_RATIO + 1e-9 or hyp.unsplittable


class TestHypotheses:
    def test_connected_parts(self):
        cells = np.concatenate([blk(0, 2, 0, 2), blk(5, 6, 5, 6), [(2, 2)]])
        parts = connected_parts(cells)
        assert sorted(len(p) for p in parts) == [1, 5]

    def test_merge_touching(self):
        a, b, c = blk(0, 2, 0, 2), blk(0, 2, 2, 4), blk(10, 11, 10, 11)
        merged = merge_touching([a, c, b])
        assert sorted(len(m) for m in merged) == [1, 8]

    def test_make_hypothesis_footprint(self):
        h = make_hypothesis(3, blk(0, 4, 0, 20))
        assert h.state == "candidate" and h.id == 3
        assert np.array_equal(h.footprint, h.mask)
        loose = make_hypothesis(4, np.concatenate([blk(0, 4, 0, 20), blk(3, 23, 18, 22)]))
        assert loose.unsplittable and np.array_equal(loose.footprint, loose.mask)

    def test_bad_state(self):
        h = make_hypothesis(0, blk(0, 2, 0, 2))
        with pytest.raises(ValueError):
            type(h)(0, h.mask, h.rect, state="maybe")

    def test_build_from_overlapping_boxes(self):
        door = blk(30, 34, 22, 42)
        boxes = [box(0, 0, cells=door), box(0, 8, cells=door - (0, 8)), box(8, 0, cells=door - (8, 0))]
        hyps = build_hypotheses(boxes, (200, 200))
        assert len(hyps) == 1
        assert np.array_equal(hyps[0].mask, as_cells(door))
        assert hyps[0].area_ratio == pytest.approx(1.0)

    def test_build_two_doors_in_one_patch(self):
        cells = np.concatenate([blk(10, 14, 5, 25), blk(40, 44, 30, 50)])
        hyps = build_hypotheses([box(0, 0, cells=cells)], (64, 64))
        assert [len(h.mask) for h in hyps] == [80, 80]
        assert [h.id for h in hyps] == [0, 1]

    def test_build_skips_maskless(self):
        assert build_hypotheses([box(0, 0)], (64, 64)) == []

    def test_checkpoint_round_trip(self, tmp_path):
        hyps = [make_hypothesis(0, blk(3, 7, 10, 30)),
                make_hypothesis(1, np.concatenate([blk(0, 4, 0, 20), blk(3, 23, 18, 22)]))]
        hyps[0].state, hyps[0].linked = "valid", (1, 2)
        hyps[1].state = "rejected"
        save_hypotheses(hyps, tmp_path / "h.json")
        back = load_hypotheses(tmp_path / "h.json")
        for a, b in zip(back, hyps):
            assert a.id == b.id and a.state == b.state and a.linked == b.linked
            assert np.array_equal(a.mask, b.mask)
            assert np.allclose(a.corners, b.corners)
        first = (tmp_path / "h.json").read_bytes()
        save_hypotheses(back, tmp_path / "h2.json")
        assert (tmp_path / "h2.json").read_bytes() == first
