import json
import math

import numpy as np
import pytest

from heliofit.cli import main
from heliofit.envmap import HdrImage, render_lm_dome
from heliofit.hdrio import read_hdr, write_hdr
from heliofit.sky import ColorRGB, LMParams
from heliofit.geometry import Direction
from heliofit.transport import SceneSpec, build_transport, save_transport

from test_envmap import dome


def params_json(tmp_path, p: LMParams):
    path = tmp_path / "params.json"
    path.write_text(json.dumps(p.to_dict()))
    return str(path)


@pytest.fixture()
def small_transport_file(tmp_path_factory, transport_default_64):
    path = tmp_path_factory.mktemp("transport") / "scene64.hftm"
    save_transport(path, transport_default_64)
    return str(path)


class TestRender:
    def test_zero_colors_zero_file(self, tmp_path):
        out = tmp_path / "zero.pfm"
        rc = main([
            "render", "--sky-color", "0", "0", "0", "--sun-color", "0", "0", "0",
            "--turbidity", "3", "--beta", "1", "--kappa", "0.5",
            "--sun-zenith-deg", "30", "--sun-azimuth-deg", "0",
            "--size", "32", "--out", str(out),
        ])
        assert rc == 0
        img = read_hdr(out)
        assert np.all(img.data == 0.0)

    def test_round_trip_matches_library_bit_exact(self, tmp_path):
        p, img = dome(size=64)
        out = tmp_path / "dome.pfm"
        rc = main(["render", "--params-file", params_json(tmp_path, p),
                   "--size", "64", "--out", str(out)])
        assert rc == 0
        back = read_hdr(out)
        assert np.array_equal(back.data, img.data.astype(np.float32).astype(np.float64))

    def test_downsampled_128_matches_64(self, tmp_path):
        # 2x2 box downsample of the 128 render approximates the 64 render;
        # a gentle sun keeps the sun pixel from dominating the comparison
        p = LMParams(ColorRGB(0.3, 0.4, 0.7), 3.0, ColorRGB(2.0, 1.9, 1.8), 2.0, 0.5,
                     Direction(math.radians(40), math.radians(70)))
        o64 = tmp_path / "d64.pfm"
        o128 = tmp_path / "d128.pfm"
        for size, out in ((64, o64), (128, o128)):
            assert main(["render", "--params-file", params_json(tmp_path, p),
                         "--size", str(size), "--out", str(out)]) == 0
        i64 = read_hdr(o64)
        i128 = read_hdr(o128)
        down = i128.data.reshape(64, 2, 64, 2, 3).mean(axis=(1, 3))
        m = i64.mask & HdrImage(down).mask
        rel = np.abs(down[m] - i64.data[m]).mean() / i64.data[m].mean()
        assert rel < 0.02

    def test_out_of_range_param_is_validation_error(self, tmp_path):
        rc = main([
            "render", "--sky-color", "0.2", "0.3", "0.5", "--sun-color", "1", "1", "1",
            "--turbidity", "99", "--beta", "1", "--kappa", "0.5",
            "--sun-zenith-deg", "30", "--sun-azimuth-deg", "0",
            "--out", str(tmp_path / "x.pfm"),
        ])
        assert rc == 2


class TestFit:
    def test_synthetic_fixture_appends_record(self, tmp_path, small_transport_file, capsys):
        p = LMParams(ColorRGB(0.25, 0.3, 0.45), 4.0, ColorRGB(12.0, 11.0, 10.0), 6.0, 0.3,
                     Direction(math.radians(35), math.radians(120)))
        img = render_lm_dome(p, 64)
        src = tmp_path / "sky.pfm"
        write_hdr(src, img)
        manifest = tmp_path / "fits.jsonl"
        cfgf = tmp_path / "cfg.toml"
        cfgf.write_text("[fit]\niterations = 60\n")
        rc = main(["fit", str(src), "--out", str(manifest), "--id", "fx",
                   "--config", str(cfgf), "--transport", small_transport_file])
        assert rc == 0
        lines = manifest.read_text().strip().splitlines()
        assert len(lines) == 1
        rec = json.loads(lines[0])
        assert rec["id"] == "fx"
        assert not rec["flags"]["rejected_zenith"]
        # losses present and finite-ish small for a synthetic target
        assert rec["losses"]["step4_total"] < 0.2

    def test_zenith_cutoff_rejection_exit_code(self, tmp_path, small_transport_file):
        p = LMParams(ColorRGB(0.25, 0.3, 0.45), 4.0, ColorRGB(5.0, 4.0, 3.0), 8.0, 0.2,
                     Direction(math.radians(85), math.radians(120)))
        img = render_lm_dome(p, 64)
        src = tmp_path / "low.pfm"
        write_hdr(src, img)
        manifest = tmp_path / "fits.jsonl"
        rc = main(["fit", str(src), "--out", str(manifest), "--id", "low",
                   "--transport", small_transport_file])
        assert rc == 2
        rec = json.loads(manifest.read_text().strip())
        assert rec["flags"]["rejected_zenith"]

    def test_malformed_input_is_io_error(self, tmp_path):
        bad = tmp_path / "bad.pfm"
        bad.write_bytes(b"PF\n8 8\n-1.0\n" + b"\x00" * 4)
        rc = main(["fit", str(bad), "--out", str(tmp_path / "m.jsonl")])
        assert rc == 3
        assert not (tmp_path / "m.jsonl").exists()


class TestTransportAndRelight:
    def test_transport_build_and_relight_furnace(self, tmp_path):
        tf = tmp_path / "white.hftm"
        cfgf = tmp_path / "scene.toml"
        cfgf.write_text("[scene]\nalbedo = 1.0\n")
        assert main(["transport", "--env-size", "64", "--config", str(cfgf),
                     "--out", str(tf)]) == 0
        env = tmp_path / "uniform.pfm"
        write_hdr(env, HdrImage(np.ones((64, 64, 3))))
        out = tmp_path / "render.pfm"
        assert main(["relight", "--transport", str(tf), "--env", str(env),
                     "--out", str(out)]) == 0
        img = read_hdr(out, projection="raster")
        # unoccluded far-plane pixels sit at 1 within the furnace tolerance
        vals = img.data[..., 0]
        assert vals.max() <= 1.0 + 1e-2
        assert np.percentile(vals[vals > 0.5], 90) == pytest.approx(1.0, abs=2e-2)


class TestMetricsAndClassify:
    def test_metrics_identical_zero(self, tmp_path, capsys):
        _, img = dome(size=64)
        a = tmp_path / "a.pfm"
        write_hdr(a, img)
        assert main(["metrics", str(a), str(a), "--json"]) == 0
        vals = json.loads(capsys.readouterr().out.strip())
        assert vals["rmse_texture"] == 0.0
        assert vals["si_rmse_texture"] == 0.0

    def test_classify_gray_is_overcast(self, tmp_path, capsys):
        env = tmp_path / "gray.pfm"
        write_hdr(env, HdrImage(np.ones((64, 64, 3))))
        assert main(["classify", str(env), "--sun", "30", "0"]) == 0
        out = json.loads(capsys.readouterr().out.strip())
        assert out["category"] == "overcast"
        assert out["coverage"] == 1.0

    def test_unknown_file_io_error(self, tmp_path):
        assert main(["metrics", str(tmp_path / "nope.pfm"), str(tmp_path / "nope.pfm")]) == 3
