import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heliofit.envmap import HdrImage, render_lm_dome
from heliofit.geometry import Direction
from heliofit.hdrio import write_hdr
from heliofit.metrics import (
    cloud_coverage,
    evaluate_batch,
    rmse,
    si_rmse,
    weather_bin,
)
from heliofit.sky import ColorRGB, LMParams

from test_envmap import dome


def img_of(data):
    return HdrImage(np.asarray(data, dtype=float), projection="raster")


class TestRmse:
    def test_identical_zero(self, rng):
        a = img_of(rng.uniform(0, 5, (8, 8, 3)))
        assert rmse(a, a) == 0.0

    def test_constants(self):
        a = img_of(np.full((4, 4, 3), 1.0))
        b = img_of(np.full((4, 4, 3), 3.0))
        assert rmse(a, b) == pytest.approx(2.0)

    def test_symmetric_and_matches_loop(self, rng):
        a = img_of(rng.uniform(0, 5, (6, 6, 3)))
        b = img_of(rng.uniform(0, 5, (6, 6, 3)))
        acc = 0.0
        for i in range(6):
            for j in range(6):
                for c in range(3):
                    acc += (a.data[i, j, c] - b.data[i, j, c]) ** 2
        want = math.sqrt(acc / (6 * 6 * 3))
        assert rmse(a, b) == pytest.approx(want, rel=1e-12)
        assert rmse(a, b) == rmse(b, a)


class TestSiRmse:
    def test_scale_invariant(self, rng):
        a = img_of(rng.uniform(0.1, 5, (8, 8, 3)))
        b = img_of(a.data * 2.0)
        assert si_rmse(a, b) <= 1e-9

    def test_two_vector_case(self):
        # a = [1, 0], b = [0, 1] replicated over channels: alpha = 0 and the
        # result is exactly 1/sqrt(2)
        a = img_of(np.array([[[1.0] * 3, [0.0] * 3]]))
        b = img_of(np.array([[[0.0] * 3, [1.0] * 3]]))
        assert si_rmse(a, b) == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-12)

    def test_never_exceeds_rmse(self, rng):
        for _ in range(25):
            a = img_of(rng.uniform(0, 4, (5, 5, 3)))
            b = img_of(rng.uniform(0, 4, (5, 5, 3)))
            assert si_rmse(a, b) <= rmse(a, b) + 1e-12

    def test_zero_reference_defined(self):
        a = img_of(np.zeros((3, 3, 3)))
        b = img_of(np.ones((3, 3, 3)))
        assert si_rmse(a, b) == pytest.approx(rmse(a, b))

    @given(st.sampled_from([0.1, 1.0, 10.0]))
    @settings(max_examples=10, deadline=None)
    def test_scale_family(self, c):
        rng = np.random.default_rng(7)
        a = img_of(rng.uniform(0.1, 3, (6, 6, 3)))
        b = img_of(a.data * c)
        assert si_rmse(a, b) <= 1e-9


class TestCloudCoverage:
    def test_blue_dome_is_clear(self):
        # display-space blue-red gap of 0.5: red = sqrt(2)-1 when blue = 1
        data = np.zeros((64, 64, 3))
        data[..., 0] = math.sqrt(2.0) - 1.0
        data[..., 1] = 0.5
        data[..., 2] = 1.0
        img = HdrImage(data)
        cov = cloud_coverage(img, Direction(0.0, 0.0))
        assert cov == 0.0

    def test_gray_dome_is_overcast(self):
        img = HdrImage(np.ones((64, 64, 3)))
        cov = cloud_coverage(img, Direction(0.0, 0.0))
        assert cov == 1.0

    def test_half_split_by_azimuth(self):
        data = np.zeros((128, 128, 3))
        data[..., 0] = math.sqrt(2.0) - 1.0
        data[..., 1] = 0.7
        data[..., 2] = 1.0
        gray = np.ones(3)
        # right half of the image (azimuth in (-pi/2, pi/2)) turns gray
        data[:, 64:, :] = gray
        img = HdrImage(data)
        # sun at the zenith so the mask is azimuth-symmetric
        cov = cloud_coverage(img, Direction(0.0, 0.0))
        assert cov == pytest.approx(0.5, abs=0.02)


class TestWeatherBin:
    @pytest.mark.parametrize(
        "coverage,zenith,want",
        [
            (0.0, 30.0, "sunny"),
            (0.10, 30.0, "sunny"),
            (1 / 8, 30.0, "mostly_sunny"),  # boundary opens the next bin
            (0.25, 30.0, "mostly_sunny"),
            (3 / 8, 30.0, "partly_cloudy"),
            (0.5, 30.0, "partly_cloudy"),
            (5 / 8, 30.0, "mostly_cloudy"),
            (0.8, 30.0, "mostly_cloudy"),
            (7 / 8, 30.0, "overcast"),
            (1.0, 30.0, "overcast"),
            (0.5, 75.0, "sunrise_sunset"),
            (0.0, 70.0, "sunny"),  # exactly 70 is not yet sunset
            (0.0, 70.01, "sunrise_sunset"),
        ],
    )
    def test_bins(self, coverage, zenith, want):
        assert weather_bin(coverage, zenith).category == want

    def test_total_over_grid(self):
        for cov in np.linspace(0, 1, 101):
            for zen in np.linspace(0, 90, 46):
                b = weather_bin(float(cov), float(zen))
                assert b.category in {
                    "sunny", "mostly_sunny", "partly_cloudy",
                    "mostly_cloudy", "overcast", "sunrise_sunset",
                }

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            weather_bin(1.2, 30.0)


class TestEvaluateBatch:
    def _write_entry(self, tmp_path, name, ref_img, cand_img, params):
        write_hdr(tmp_path / "ref" / f"{name}.pfm", ref_img)
        write_hdr(tmp_path / "cand" / f"{name}.pfm", cand_img)
        rec = {"id": name}
        rec.update(params.to_dict())
        return rec

    def test_identical_entries_all_zero(self, tmp_path, transport_default_64):
        (tmp_path / "ref").mkdir()
        (tmp_path / "cand").mkdir()
        p, img = dome(size=64)
        recs = [self._write_entry(tmp_path, "a", img, img, p)]
        manifest = tmp_path / "m.jsonl"
        manifest.write_text("\n".join(json.dumps(r) for r in recs) + "\n")
        report = evaluate_batch(manifest, tmp_path / "ref", tmp_path / "cand", transport_default_64)
        assert report.table["rmse_texture"]["all"] == 0.0
        assert report.table["si_rmse_render"]["all"] == 0.0
        assert report.table["fid"] == {}
        assert "n/a" in report.to_csv()

    def test_two_entry_mean(self, tmp_path, transport_default_64):
        (tmp_path / "ref").mkdir()
        (tmp_path / "cand").mkdir()
        p1, img1 = dome(size=64, zen_deg=30)
        p2, img2 = dome(size=64, zen_deg=50)
        cand1 = img1.with_data(img1.data * 1.5)
        cand2 = img2.with_data(np.minimum(img2.data + 0.3, img2.data.max()))
        recs = [
            self._write_entry(tmp_path, "a", img1, cand1, p1),
            self._write_entry(tmp_path, "b", img2, cand2, p2),
        ]
        manifest = tmp_path / "m.jsonl"
        manifest.write_text("\n".join(json.dumps(r) for r in recs) + "\n")
        report = evaluate_batch(manifest, tmp_path / "ref", tmp_path / "cand", transport_default_64)
        # float32 file round-trip: compare against metrics of the reloaded pair
        from heliofit.hdrio import read_hdr

        vals = []
        for name, cand in (("a", cand1), ("b", cand2)):
            ref = read_hdr(tmp_path / "ref" / f"{name}.pfm")
            c = read_hdr(tmp_path / "cand" / f"{name}.pfm")
            vals.append(rmse(c, ref))
        want = float(np.mean(vals))
        assert report.table["rmse_texture"]["all"] == pytest.approx(want, rel=1e-9)
        assert report.counts["all"] == 2

    def test_text_table_mirrors_bins(self, tmp_path, transport_default_64):
        (tmp_path / "ref").mkdir()
        (tmp_path / "cand").mkdir()
        p, img = dome(size=64)
        recs = [self._write_entry(tmp_path, "x", img, img, p)]
        manifest = tmp_path / "m.jsonl"
        manifest.write_text(json.dumps(recs[0]) + "\n")
        report = evaluate_batch(manifest, tmp_path / "ref", tmp_path / "cand", transport_default_64)
        text = report.to_text()
        for col in ("su", "ms", "pc", "mc", "oc", "ss", "all"):
            assert col in text
