"""PSNR, SSIM, Strehl, PSF and slanted-edge MTF."""

import csv
import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import erf
from skimage.metrics import structural_similarity

from conftest import make_prescription
from palsim import metrics as mt
from palsim.diffraction import PsfKernel
from palsim.errors import EdgeNotFound, InvalidArgument
from palsim.image import ImagePlane, write_png


def gaussian_mtf50(sigma):
    # |FT| of a Gaussian LSF: exp(-2 pi^2 sigma^2 f^2)
    return math.sqrt(math.log(2) / 2) / (math.pi * sigma)


def slanted_edge(h=64, w=64, angle_deg=5.0, sigma=1.0, lo=0.2, hi=0.8):
    y, x = np.mgrid[:h, :w].astype(float)
    edge = w / 2 + (y - h / 2) * math.tan(math.radians(angle_deg))
    return lo + (hi - lo) * 0.5 * (1 + erf((x - edge) / (math.sqrt(2) * sigma)))


# ------------------------------------------------------------ psnr / ssim

def test_psnr_known_mse():
    assert mt.psnr(np.zeros((4, 4)), np.full((4, 4), 0.1)) == pytest.approx(20.0, abs=1e-12)


def test_psnr_identical_is_infinite():
    a = np.random.default_rng(0).random((5, 5, 3))
    assert mt.psnr(a, a) == math.inf


def test_pair_checks():
    with pytest.raises(InvalidArgument):
        mt.psnr(np.zeros((4, 4)), np.zeros((4, 5)))
    a = ImagePlane(np.zeros((4, 4, 3)))
    b = ImagePlane(np.zeros((4, 4, 3)), color_state="linear_rgb")
    with pytest.raises(InvalidArgument):
        mt.ssim(a, b)


def test_ssim_identical_is_one():
    a = np.random.default_rng(1).random((32, 32, 3))
    assert mt.ssim(a, a) == 1.0


def test_ssim_constant_images_closed_form():
    c1, c2 = 0.01**2, 0.03**2
    expected = (2 * 0.3 * 0.5 + c1) * c2 / ((0.3**2 + 0.5**2 + c1) * c2)
    assert mt.ssim(np.full((20, 20), 0.3), np.full((20, 20), 0.5)) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("seed", [0, 1])
def test_ssim_matches_reference_implementation(seed):
    rng = np.random.default_rng(seed)
    a = rng.random((40, 48, 3))
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
    ref = structural_similarity(a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                data_range=1.0, channel_axis=2)
    assert mt.ssim(a, b) == pytest.approx(ref, abs=1e-9)


def test_ssim_rejects_small_images_and_even_window():
    with pytest.raises(InvalidArgument):
        mt.ssim(np.zeros((8, 8)), np.zeros((8, 8)))
    with pytest.raises(InvalidArgument):
        mt.ssim(np.zeros((20, 20)), np.zeros((20, 20)), window=10)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**16), s=st.floats(0.01, 0.3))
def test_ssim_symmetric_and_bounded(seed, s):
    rng = np.random.default_rng(seed)
    a = rng.random((16, 16))
    b = np.clip(a + s * rng.standard_normal(a.shape), 0, 1)
    v = mt.ssim(a, b)
    assert v == pytest.approx(mt.ssim(b, a), abs=1e-12)
    assert -1.0 <= v < 1.0


# ------------------------------------------------------------ strehl

def test_strehl_piston_is_one():
    pr = make_prescription(grid=64)
    c = np.zeros(37)
    c[0] = 0.3
    assert mt.strehl(c, pr) == pytest.approx(1.0, abs=1e-12)


def test_strehl_small_defocus_near_marechal():
    pr = make_prescription(grid=128)
    c = np.zeros(37)
    c[3] = 0.05
    rms = 0.05 / math.sqrt(3)  # rms of the unnormalized defocus term over the disk
    assert mt.strehl(c, pr) == pytest.approx(math.exp(-(2 * math.pi * rms) ** 2), rel=0.01)


def test_strehl_decreases_with_aberration():
    pr = make_prescription(grid=64)
    vals = []
    for a in (0.0, 0.05, 0.1, 0.2):
        c = np.zeros(37)
        c[8] = a
        vals.append(mt.strehl(c, pr))
    assert all(x > y for x, y in zip(vals, vals[1:]))


# ------------------------------------------------------------ PSF MTF

def test_mtf_of_delta_is_flat():
    k = np.zeros((5, 5))
    k[2, 2] = 1
    out = mt.mtf_from_psf(PsfKernel(k))
    npt.assert_allclose(out["sagittal"].modulation, 1.0, atol=1e-12)
    npt.assert_allclose(out["tangential"].modulation, 1.0, atol=1e-12)


def test_mtf_of_box_is_dirichlet():
    k = np.zeros((1, 3))
    k[0] = 1 / 3
    out = mt.mtf_from_psf(k, n_fft=64)["sagittal"]
    f = out.frequencies
    npt.assert_allclose(out.modulation, np.abs(1 + 2 * np.cos(2 * np.pi * f)) / 3, atol=1e-12)


def test_mtf_axes_are_separate():
    k = np.zeros((1, 5))
    k[0] = 0.2
    out = mt.mtf_from_psf(k)
    npt.assert_allclose(out["tangential"].modulation, 1.0, atol=1e-12)
    assert out["sagittal"].at(0.2) < 0.1


def test_diffraction_limit_values():
    npt.assert_allclose(mt.diffraction_mtf_values([0.0, 0.5, 1.0, 1.5]),
                        [1.0, (2 / np.pi) * (np.arccos(0.5) - 0.5 * np.sqrt(0.75)), 0.0, 0.0],
                        atol=1e-15)
    curve = mt.diffraction_limit_mtf(1.0, 500.0, 2.0, 1.0)
    assert curve.meta["cutoff_cyc_per_px"] == pytest.approx(1.0)
    with pytest.raises(InvalidArgument):
        mt.diffraction_limit_mtf(0.0, 500.0, 2.0, 1.0)


def test_mtf50_interpolates_and_sentinel():
    f = np.linspace(0, 0.5, 51)
    assert mt.mtf50(mt.MtfCurve(f, 1 - 2 * f)) == pytest.approx(0.25, abs=1e-12)
    assert mt.mtf50(mt.MtfCurve(f, np.full(51, 0.9))) == 0.5
    assert mt.mtf50(mt.MtfCurve(f, np.full(51, 0.4))) == 0.0


def test_mtf_curve_validation_and_csv(tmp_path):
    with pytest.raises(InvalidArgument):
        mt.MtfCurve([0.0, 0.0], [1.0, 1.0])
    c = mt.MtfCurve([0.0, 0.25, 0.5], [1.0, 0.6, 0.2])
    assert c.at(0.125) == pytest.approx(0.8)
    c.write_csv(tmp_path / "c.csv")
    rows = list(csv.reader(open(tmp_path / "c.csv")))
    assert rows[0] == ["frequency_cyc_per_px", "modulation"] and len(rows) == 4


# ------------------------------------------------------------ slanted edge

@pytest.mark.parametrize("sigma", [1.0, 1.5, 2.5])
@pytest.mark.parametrize("angle", [4.0, -6.0])
def test_slanted_edge_gaussian_blur(sigma, angle):
    curve = mt.mtf_slanted_edge(slanted_edge(angle_deg=angle, sigma=sigma))
    assert mt.mtf50(curve) == pytest.approx(gaussian_mtf50(sigma), rel=0.05)
    assert curve.meta["edge_angle_deg"] == pytest.approx(angle, abs=0.3)


def test_slanted_edge_curve_matches_gaussian():
    curve = mt.mtf_slanted_edge(slanted_edge(sigma=1.5))
    f = curve.frequencies
    use = f <= 0.3
    npt.assert_allclose(curve.modulation[use], np.exp(-2 * (np.pi * 1.5 * f[use]) ** 2), atol=0.03)


def test_slanted_edge_dark_to_bright_either_way():
    a = mt.mtf50(mt.mtf_slanted_edge(slanted_edge(sigma=1.2)))
    b = mt.mtf50(mt.mtf_slanted_edge(slanted_edge(sigma=1.2, lo=0.8, hi=0.2)))
    assert a == pytest.approx(b, rel=0.01)


def test_slanted_edge_roi_and_color():
    img = np.repeat(slanted_edge(sigma=1.0)[:, :, None], 3, axis=2)
    big = np.zeros((100, 120, 3))
    big[10:74, 20:84] = img
    curve = mt.mtf_slanted_edge(ImagePlane(big), roi=(10, 74, 20, 84))
    assert mt.mtf50(curve) == pytest.approx(gaussian_mtf50(1.0), rel=0.05)


@pytest.mark.parametrize("image", [
    np.full((40, 40), 0.5),
    np.random.default_rng(0).random((40, 40)),
    slanted_edge(angle_deg=0.0),
    np.zeros((5, 40)),
])
def test_edge_not_found(image):
    with pytest.raises(EdgeNotFound):
        mt.mtf_slanted_edge(image)


def test_edge_angle_hint_rejects_mismatch():
    with pytest.raises(EdgeNotFound):
        mt.mtf_slanted_edge(slanted_edge(angle_deg=5.0), edge_angle_hint=20.0)


# ------------------------------------------------------------ reports

def test_report_pairs(tmp_path):
    sharp = slanted_edge(sigma=0.8)
    blur = slanted_edge(sigma=2.0)
    for name, deg in (("a", sharp), ("b", blur)):
        d = tmp_path / "pairs" / name
        d.mkdir(parents=True)
        gt = np.repeat(sharp[:, :, None], 3, axis=2)
        write_png(ImagePlane(gt), d / "gt.png")
        write_png(ImagePlane(np.repeat(deg[:, :, None], 3, axis=2)), d / "degraded.png")
    rows = mt.report_pairs(tmp_path / "pairs", tmp_path / "r.csv", tmp_path / "curves")
    assert [r["pair_id"] for r in rows] == ["a", "b"]
    assert rows[0]["psnr_db"] == math.inf and rows[0]["ssim"] == 1.0
    assert rows[1]["psnr_db"] < 40 and rows[1]["ssim"] < 1.0
    assert float(rows[1]["mtf50_cyc_per_px"]) < float(rows[0]["mtf50_cyc_per_px"])
    back = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert list(back[0]) == ["pair_id", "psnr_db", "ssim", "mtf50_cyc_per_px"]
    assert sorted(p.name for p in (tmp_path / "curves").iterdir()) == ["a.csv", "b.csv"]
