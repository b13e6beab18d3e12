import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pyxrai.attribution import BaselineSpec, ig_multi_baseline
from pyxrai.core import ParameterError
from pyxrai.segmentation import Segment, multi_scale_segments
from pyxrai.xrai import (
    NO_GAIN,
    SUBTRACT,
    UNION,
    heatmap_from_trajectory,
    mask_at_area,
    xrai,
    xrai_gain,
    xrai_trajectory,
)

from oracles import greedy_oracle, random_instance


class TestGain:
    def test_empty_mask_is_segment_mean(self, rng):
        attr = rng.normal(size=(5, 5))
        seg = rng.random((5, 5)) > 0.5
        empty = np.zeros((5, 5), bool)
        for mode in (UNION, SUBTRACT):
            assert xrai_gain(seg, empty, attr, mode) == pytest.approx(attr[seg].mean(), abs=1e-14)

    def test_segment_inside_mask(self):
        seg = np.zeros((4, 4), bool)
        seg[0, 0] = True
        assert xrai_gain(seg, np.ones((4, 4), bool), np.ones((4, 4)), SUBTRACT) == NO_GAIN

    def test_hand_computed(self):
        attr = np.arange(16, dtype=float).reshape(4, 4)
        seg = np.zeros((4, 4), bool)
        seg[:, :2] = True  # columns 0-1
        mask = np.zeros((4, 4), bool)
        mask[:2, :] = True  # rows 0-1
        # s \ M = rows 2-3, columns 0-1 -> 8, 9, 12, 13
        assert xrai_gain(seg, mask, attr, SUBTRACT) == pytest.approx(42 / 4)
        # s | M = rows 0-1 (0..7) plus 8, 9, 12, 13
        assert xrai_gain(seg, mask, attr, UNION) == pytest.approx((28 + 42) / 12)

    def test_bad_mode(self):
        with pytest.raises(ParameterError):
            xrai_gain(np.ones((2, 2), bool), np.zeros((2, 2), bool), np.ones((2, 2)), "max")


class TestTrajectory:
    @pytest.mark.parametrize("mode", [UNION, SUBTRACT])
    def test_matches_exhaustive_oracle(self, mode):
        rng = np.random.default_rng(100)
        for _ in range(100):
            attr, segs = random_instance(rng)
            traj = xrai_trajectory(attr, segs, mode)
            oracle = greedy_oracle(attr, segs, mode)
            assert [s.segment_id for s in traj.steps] == [o[0] for o in oracle]
            for step, (_, gain, mask) in zip(traj.steps, oracle):
                assert abs(step.gain - gain) <= 1e-12
                np.testing.assert_array_equal(step.mask, mask)

    def test_disjoint_segments_sorted_by_mean(self, rng):
        attr = rng.normal(size=(12, 12))
        labels = np.repeat(np.arange(6), 24).reshape(12, 12)
        segs = [Segment(labels == k, 1.0, k) for k in range(6)]
        traj = xrai_trajectory(attr, segs, SUBTRACT)
        expected = sorted(range(6), key=lambda k: -attr[labels == k].mean())
        assert [s.segment_id for s in traj.steps] == expected

    def test_single_full_segment(self, rng):
        traj = xrai_trajectory(rng.normal(size=(5, 5)), [Segment(np.ones((5, 5), bool), 1.0, 0)])
        assert len(traj) == 1 and traj.steps[0].mask.all()

    def test_areas_strictly_increase_and_nest(self, rng):
        attr, segs = random_instance(rng, max_segments=20)
        traj = xrai_trajectory(attr, segs)
        assert all(b > a for a, b in zip(traj.areas, traj.areas[1:]))
        for a, b in zip(traj.steps, traj.steps[1:]):
            assert np.all(b.mask >= a.mask)

    def test_ties_go_to_smaller_id(self):
        m = np.zeros((4, 4), bool)
        m[:2] = True
        segs = [Segment(m, 1.0, 7), Segment(m.copy(), 1.0, 3), Segment(~m, 1.0, 5)]
        traj = xrai_trajectory(np.ones((4, 4)), segs)
        assert [s.segment_id for s in traj.steps] == [3, 5]

    def test_stops_when_covered(self):
        full = Segment(np.ones((3, 3), bool), 1.0, 0)
        part = Segment(np.eye(3, dtype=bool), 1.0, 1)
        traj = xrai_trajectory(np.ones((3, 3)), [full, part])
        assert len(traj) == 1

    def test_errors(self):
        with pytest.raises(ParameterError):
            xrai_trajectory(np.zeros((3, 3)), [])
        with pytest.raises(ParameterError):
            xrai_trajectory(np.zeros((3, 3)), [Segment(np.ones((3, 4), bool), 1.0, 0)])
        with pytest.raises(ParameterError):
            xrai_trajectory(np.full((2, 2), np.nan), [Segment(np.ones((2, 2), bool), 1.0, 0)])


class TestHeatmapAndMasks:
    @pytest.fixture
    def traj(self):
        rng = np.random.default_rng(5)
        attr, segs = random_instance(rng, max_segments=15)
        while len(xrai_trajectory(attr, segs)) < 3:
            attr, segs = random_instance(rng, max_segments=15)
        return xrai_trajectory(attr, segs, SUBTRACT)

    def test_one_step(self):
        m = np.zeros((4, 4), bool)
        m[1:3, 1:3] = True
        traj = xrai_trajectory(np.ones((4, 4)) * 2.0, [Segment(m, 1.0, 0)])
        heat = heatmap_from_trajectory(traj)
        np.testing.assert_array_equal(heat[m], 2.0)
        np.testing.assert_array_equal(heat[~m], 1.0)

    def test_first_entry_rule(self, traj):
        heat = heatmap_from_trajectory(traj)
        seen = np.zeros(traj.shape, bool)
        for s in traj.steps:
            new = s.mask & ~seen
            np.testing.assert_array_equal(heat[new], s.gain)
            seen |= s.mask

    def test_threshold_round_trip(self, traj):
        heat = heatmap_from_trajectory(traj)
        gains = [s.gain for s in traj.steps]
        for k, s in enumerate(traj.steps):
            if all(g > s.gain for g in gains[:k]) and all(g < s.gain for g in gains[k + 1:]):
                np.testing.assert_array_equal(heat >= s.gain, s.mask)

    def test_mask_at_area(self, traj):
        total = traj.shape[0] * traj.shape[1]
        np.testing.assert_array_equal(mask_at_area(traj, 1.0), traj.steps[-1].mask)
        first = traj.steps[0].area / total
        np.testing.assert_array_equal(mask_at_area(traj, first / 2), traj.steps[0].mask)
        for f in np.linspace(0.01, 1, 25):
            m = mask_at_area(traj, f)
            assert m.sum() >= f * total or np.array_equal(m, traj.steps[-1].mask)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.001, 1.0), st.floats(0.001, 1.0))
    def test_mask_monotone_in_fraction(self, a, b):
        rng = np.random.default_rng(3)
        attr, segs = random_instance(rng)
        traj = xrai_trajectory(attr, segs)
        lo, hi = sorted((a, b))
        assert np.all(mask_at_area(traj, hi) >= mask_at_area(traj, lo))

    def test_mask_at_area_bounds(self, traj):
        for bad in (0.0, 1.5):
            with pytest.raises(ParameterError):
                mask_at_area(traj, bad)


class TestPipeline:
    def test_xrai_end_to_end(self, trained_net, corpus):
        x = corpus.images[0]
        c = int(corpus.labels[0])
        res = xrai(trained_net, x, c, steps=16)
        np.testing.assert_array_equal(res.attribution, ig_multi_baseline(trained_net, x, BaselineSpec(), c, 16))
        assert res.heatmap.shape == (32, 32)
        assert res.trajectory.steps[-1].mask.all()

    def test_deterministic(self, trained_net, corpus):
        x = corpus.images[1]
        segs = multi_scale_segments(x)
        a = xrai(trained_net, x, 0, steps=8, segments=segs)
        b = xrai(trained_net, x, 0, steps=8, segments=segs)
        assert [s.segment_id for s in a.trajectory.steps] == [s.segment_id for s in b.trajectory.steps]
        np.testing.assert_array_equal(a.heatmap, b.heatmap)
