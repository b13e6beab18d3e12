import json

import numpy as np
import pytest

from pyxrai.core import ParameterError, read_image
from pyxrai.formats import (
    curves_svg,
    diverging_colormap,
    mask_runs,
    read_float_map,
    read_segments,
    runs_to_mask,
    scatter_svg,
    trajectory_json,
    write_csv,
    write_float_map,
    write_heatmap,
    write_json,
    write_segments,
)
from pyxrai.segmentation import multi_scale_segments
from pyxrai.xrai import xrai_trajectory


class TestFloatMap:
    def test_round_trip(self, tmp_path, rng):
        a = rng.normal(size=(5, 7))
        write_float_map(tmp_path / "a.f32", a)
        np.testing.assert_array_equal(read_float_map(tmp_path / "a.f32"), a.astype(np.float32))
        assert (tmp_path / "a.f32").stat().st_size == 16 + 4 * 35

    def test_rejects_other_files(self, tmp_path):
        (tmp_path / "x").write_bytes(b"junk" * 8)
        with pytest.raises(ParameterError):
            read_float_map(tmp_path / "x")


class TestColormap:
    def test_anchor_colors(self):
        rgb = diverging_colormap(np.array([[-2.0, 0.0, 2.0, 1.0]]))
        np.testing.assert_allclose(rgb[0], [[0, 0, 1], [1, 1, 1], [1, 0, 0], [1, 0.5, 0.5]])

    def test_zero_map_white(self):
        np.testing.assert_array_equal(diverging_colormap(np.zeros((2, 2))), 1.0)

    def test_heatmap_png(self, tmp_path, rng):
        write_heatmap(tmp_path / "h.png", rng.normal(size=(6, 6)))
        assert read_image(tmp_path / "h.png").shape == (6, 6, 3)


class TestSegmentFiles:
    def test_runs_round_trip(self, rng):
        m = rng.random((9, 11)) > 0.6
        np.testing.assert_array_equal(runs_to_mask(mask_runs(m), m.shape), m)
        np.testing.assert_array_equal(mask_runs(np.array([[0, 1, 1], [1, 0, 1]], bool)), [[1, 3], [5, 1]])

    def test_segment_set_round_trip(self, tmp_path, corpus):
        segset = multi_scale_segments(corpus.images[0])
        write_segments(tmp_path, segset)
        back = read_segments(tmp_path)
        assert len(back) == len(segset)
        for a, b in zip(segset, back):
            assert (a.id, a.scale) == (b.id, b.scale)
            np.testing.assert_array_equal(a.mask, b.mask)
            np.testing.assert_array_equal(a.core, b.core)
        manifest = json.loads((tmp_path / "segments.json").read_text())
        assert manifest["segments"][0].keys() >= {"id", "scale", "area"}
        assert read_image(tmp_path / "segments.png").shape[1] == 6 * 32 + 5


class TestTextOutputs:
    def test_trajectory_records(self, rng):
        from pyxrai.segmentation import Segment
        m = np.zeros((4, 4), bool)
        m[:2] = True
        traj = xrai_trajectory(rng.normal(size=(4, 4)), [Segment(m, 1.0, 0), Segment(~m, 1.0, 1)])
        doc = trajectory_json(traj)
        assert [s["area"] for s in doc["steps"]] == [8, 16]
        assert doc["steps"][1]["area_fraction"] == 1.0

    def test_json_is_canonical(self, tmp_path):
        write_json(tmp_path / "a.json", {"b": np.float64(0.5), "a": [np.int64(2), float("nan")]})
        assert (tmp_path / "a.json").read_text() == '{\n  "a": [\n    2,\n    null\n  ],\n  "b": 0.5\n}\n'

    def test_csv_exact_floats(self, tmp_path):
        write_csv(tmp_path / "t.csv", ("x", "ok"), [(0.1 + 0.2, True)])
        assert (tmp_path / "t.csv").read_text() == "x,ok\n0.30000000000000004,1\n"

    def test_svgs_deterministic(self):
        curves = {"a": ([0, 0.5, 1], [0.1, 0.4, 1.0])}
        assert curves_svg([("AIC", curves)]) == curves_svg([("AIC", curves)])
        svg = scatter_svg([0.0, 0.2], [0.1, 0.0], [True, False], "t", "x1", "x2")
        assert svg.startswith("<svg") and "<circle" in svg and "<path" in svg
