"""Shared fixtures and the acceptance-criteria summary."""

import numpy as np
import pytest

from palsim import zernike
from palsim.prescription import OpticalPrescription, default_prescription
from palsim.projection import CameraModel

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_runtest_logreport(report):
    crit = getattr(report, "_criterion", None)
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE.setdefault(crit, []).append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        rep._criterion = (mark.args[0], mark.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for (num, title), outcomes in sorted(_ACCEPTANCE.items()):
        ok = all(o == "passed" for o in outcomes)
        tr.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {title}")


def make_prescription(fov=(30.0, 65.0, 100.0), wl=(450.0, 550.0, 650.0), coeffs=None,
                      grid=64, D=0.5, d=1.4, pitch=4.8, spot=4.8, illumination=None):
    fov = np.asarray(fov, dtype=float)
    wl = np.asarray(wl, dtype=float)
    if coeffs is None:
        coeffs = np.zeros((fov.size, wl.size, zernike.N_TERMS))
    field = zernike.ZernikeField(coeffs, fov, wl)
    ill = np.ones(fov.size) if illumination is None else illumination
    camera = CameraModel.linear(2.0, (min(fov[0], 30.0), max(fov[-1], 100.0)))
    return OpticalPrescription(fov, wl, field, D, d, pitch, ill, np.full(fov.size, float(spot)),
                               camera, grid_size=grid)


@pytest.fixture
def tiny_prescription():
    return make_prescription()


@pytest.fixture(scope="session")
def small_default():
    """The built-in lens on 8 FoVs, 3 wavelengths and a 128^2 pupil."""
    return default_prescription(128, np.linspace(30.0, 100.0, 8), [450.0, 550.0, 650.0])


@pytest.fixture(scope="session")
def small_rgb_stack(small_default):
    from palsim.diffraction import build_stack, spectral_to_rgb

    return spectral_to_rgb(build_stack(small_default), small_default.sensor_response)


def textured_image(h, w, seed=0):
    """Smooth random texture with edges, values in [0.05, 0.85]."""
    from scipy import ndimage

    rng = np.random.default_rng(seed)
    base = ndimage.gaussian_filter(rng.random((h, w, 3)), (1.5, 1.5, 0))
    base = (base - base.min()) / (np.ptp(base) + 1e-12)
    y, x = np.mgrid[:h, :w]
    bars = ((x // 8 + y // 8) % 2)[:, :, None] * 0.4
    return 0.05 + 0.8 * np.clip(0.5 * base + bars, 0, 1)
