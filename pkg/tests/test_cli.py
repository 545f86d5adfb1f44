"""Command-line entry points: outputs, JSON summaries and exit codes."""

import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import textured_image
from palsim import cli
from palsim.degrade import DegradationRecipe
from palsim.image import ImagePlane, read_png, write_png
from palsim.isp import IspParams
from palsim.metrics import psnr
from palsim.prescription import default_prescription
from palsim.projection import CameraModel
from test_metrics import slanted_edge


def _run(capsys, *argv):
    code = cli.run([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def small_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    pr = default_prescription(128, np.linspace(30, 100, 6), [450.0, 550.0, 650.0])
    pr.save(d / "lens.json")
    write_png(ImagePlane(textured_image(36, 160)), d / "clean.png")
    DegradationRecipe(IspParams().with_noise(1e-4, 1e-6), noise_seed=3,
                      prescription="lens.json").save(d / "recipe.json")
    return d


@pytest.fixture(scope="module")
def built_stack(small_files):
    out = small_files / "stack"
    assert cli.run(["psf", "build", "--prescription", str(small_files / "lens.json"),
                    "--out", str(out), "--jobs", "1"]) == 0
    return out


def test_psf_build_layout(built_stack):
    man = json.loads((built_stack / "manifest.json").read_text())
    assert len(man["kernels"]) == 6 * 3
    rgb = json.loads((built_stack / "rgb" / "manifest.json").read_text())
    assert rgb["tags"] == ["R", "G", "B"]


def test_psf_inspect_json(capsys, built_stack):
    code, out, _ = _run(capsys, "psf", "inspect", "--stack", built_stack, "--json")
    assert code == 0
    doc = json.loads(out)
    assert doc["n_fov"] == 6 and doc["n_tags"] == 3
    assert 0 < doc["strehl"][0] <= doc["strehl"][1] <= 1


def test_degrade_writes_outputs(capsys, small_files, built_stack, tmp_path):
    code, out, _ = _run(capsys, "degrade", "--in", small_files / "clean.png", "--recipe",
                        small_files / "recipe.json", "--stack", built_stack, "--out",
                        tmp_path / "d.png", "--out16", tmp_path / "d16.png", "--phys",
                        tmp_path / "p.raw", "--json", "--seed", 9)
    assert code == 0
    assert json.loads(out)["noise_seed"] == 9
    deg = read_png(tmp_path / "d.png")
    assert deg.shape == (36, 160, 3)
    assert psnr(read_png(small_files / "clean.png"), deg) < 40
    assert read_png(tmp_path / "d16.png").shape == (36, 160, 3)
    assert (tmp_path / "p.json").is_file()


def test_degrade_is_reproducible(capsys, small_files, built_stack, tmp_path):
    for name in ("a.png", "b.png"):
        assert _run(capsys, "degrade", "--in", small_files / "clean.png", "--recipe",
                    small_files / "recipe.json", "--stack", built_stack, "--out",
                    tmp_path / name)[0] == 0
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


def test_unfold_with_camera(capsys, tmp_path):
    cam = CameraModel.linear(0.6, (30.0, 100.0), center=(63.5, 63.5))
    (tmp_path / "cam.json").write_text(json.dumps(cam.to_dict()))
    write_png(ImagePlane(np.full((128, 128, 3), 0.5)), tmp_path / "ann.png")
    code, out, _ = _run(capsys, "unfold", "--in", tmp_path / "ann.png", "--camera",
                        tmp_path / "cam.json", "--out", tmp_path / "u.png", "--size", "16x64",
                        "--json")
    assert code == 0
    assert json.loads(out) == {"out": str(tmp_path / "u.png"), "shape": [16, 64, 3],
                               "out_of_bounds": 0}
    assert np.allclose(read_png(tmp_path / "u.png").data, 128 / 255, atol=1 / 255)


def test_dataset_generate_and_report(capsys, small_files, tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    write_png(ImagePlane(textured_image(50, 170)), src / "one.png")
    spec = {"source_dir": str(src), "output_dir": str(tmp_path / "ds"), "target_size": [40, 160],
            "n_train": 1, "n_val": 1}
    (tmp_path / "spec.json").write_text(json.dumps(spec))
    code, out, err = _run(capsys, "dataset", "generate", "--spec", tmp_path / "spec.json",
                          "--prescription", small_files / "lens.json", "--seed", 2, "--jobs", 1,
                          "--json")
    assert code == 0, err
    doc = json.loads(out)
    assert doc["items"] == 2 and doc["failed"] == 0
    assert "building PSF stack" in err
    code, out, _ = _run(capsys, "metrics", "report", "--pairs", tmp_path / "ds", "--out",
                        tmp_path / "r.csv", "--json")
    assert code == 0 and json.loads(out)["pairs"] == 2
    assert (tmp_path / "r.csv").read_text().startswith("pair_id,psnr_db,ssim,mtf50_cyc_per_px")


def test_mtf_subcommands(capsys, built_stack, tmp_path):
    edge = np.repeat(slanted_edge(sigma=1.0)[:, :, None], 3, axis=2)
    write_png(ImagePlane(edge), tmp_path / "edge.png")
    code, out, _ = _run(capsys, "mtf", "edge", "--in", tmp_path / "edge.png", "--out",
                        tmp_path / "e.csv", "--json")
    assert code == 0 and 0.15 < json.loads(out)["mtf50_cyc_per_px"] < 0.23
    code, out, _ = _run(capsys, "mtf", "psf", "--stack", built_stack, "--fov-index", 2)
    assert code == 0 and out.startswith("MTF50 = ")
    code, out, _ = _run(capsys, "mtf", "limit", "--D", 5, "--distance", 50, "--pitch", 2, "--json")
    assert code == 0 and json.loads(out)["mode"] == "limit"


@pytest.mark.parametrize("argv", [
    ["degrade", "--in", "missing.png", "--recipe", "r.json", "--stack", "s", "--out", "o.png"],
    ["psf", "inspect", "--stack", "nowhere"],
    ["dataset", "generate", "--out", "x"],
    ["psf", "build", "--out", "x", "--bogus"],
    ["unfold", "--in", "a.png", "--out", "b.png", "--size", "12"],
    ["frobnicate"],
])
def test_usage_errors_exit_2(capsys, argv):
    try:
        code = cli.run(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == 2
    assert capsys.readouterr().err


def test_runtime_error_exits_1_with_cause(capsys, tmp_path):
    (tmp_path / "stack").mkdir()
    (tmp_path / "stack" / "manifest.json").write_text(json.dumps({"format": "other"}))
    code, _, err = _run(capsys, "psf", "inspect", "--stack", tmp_path / "stack")
    assert code == 1
    assert "InvalidArgument" in err and "unsupported stack format" in err


def test_environment_prescription(capsys, small_files, tmp_path, monkeypatch):
    monkeypatch.setenv("PALSIM_PRESCRIPTION", str(small_files / "lens.json"))
    code, out, _ = _run(capsys, "psf", "build", "--out", tmp_path / "s", "--jobs", 1, "--json")
    assert code == 0 and json.loads(out)["n_fov"] == 6


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "palsim", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "dataset" in res.stdout
