"""Optical prescriptions: everything needed to synthesize a PAL PSF stack.

``default_prescription()`` returns the built-in design used when no
prescription file is given. It keeps the reference sampling (101 FoVs from
30 to 100 deg in 0.7 deg steps, 31 wavelengths from 400 to 700 nm, 37 Fringe
terms) but its aberration content is a smooth synthetic stand-in: field
curvature, astigmatism, coma and spherical aberration that grow with field
angle plus axial and lateral color. Spot sizes are derived from the same
wavefronts, so the kernel supports are consistent with the PSFs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import zernike
from .diffraction import SensorResponse, support_from_spot
from .errors import InvalidArgument
from .projection import CameraModel, ScaleProfile, scale_profile

ENV_PRESCRIPTION = "PALSIM_PRESCRIPTION"


@dataclass(frozen=True, eq=False)
class OpticalPrescription:
    fov_samples: np.ndarray
    wavelength_samples: np.ndarray
    zernike: zernike.ZernikeField
    pupil_diameter_mm: float
    distance_mm: float
    pixel_pitch_um: float
    illumination: np.ndarray
    spot_rms_um: np.ndarray
    camera: CameraModel
    sensor_response: SensorResponse | None = None
    grid_size: int = 512
    pad_factor: int = 4
    name: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        fov = np.asarray(self.fov_samples, dtype=float)
        wl = np.asarray(self.wavelength_samples, dtype=float)
        ill = np.asarray(self.illumination, dtype=float)
        spot = np.asarray(self.spot_rms_um, dtype=float)
        for name, a in (("illumination", ill), ("spot_rms_um", spot)):
            if a.shape != fov.shape:
                raise InvalidArgument(f"{name} needs one value per FoV sample")
        if min(self.pupil_diameter_mm, self.distance_mm, self.pixel_pitch_um) <= 0:
            raise InvalidArgument("pupil diameter, distance and pixel pitch must be positive")
        zernike.PupilGrid(self.grid_size, self.pupil_diameter_mm)
        object.__setattr__(self, "fov_samples", fov)
        object.__setattr__(self, "wavelength_samples", wl)
        object.__setattr__(self, "illumination", ill)
        object.__setattr__(self, "spot_rms_um", spot)
        if self.sensor_response is None:
            object.__setattr__(self, "sensor_response", SensorResponse.default(wl))

    @property
    def grid(self) -> zernike.PupilGrid:
        return zernike.PupilGrid(self.grid_size, self.pupil_diameter_mm)

    @property
    def f_number(self):
        return self.distance_mm / self.pupil_diameter_mm

    def supports(self):
        return support_from_spot(self.spot_rms_um, self.pixel_pitch_um)

    def scale_profile(self) -> ScaleProfile:
        return scale_profile(self.camera, self.fov_samples)

    def with_zernike(self, field: zernike.ZernikeField) -> "OpticalPrescription":
        from dataclasses import replace

        return replace(self, zernike=field)

    # ------------------------------------------------------------- JSON

    def to_dict(self, zernike_ref=None):
        return {
            "name": self.name,
            "fov_deg": self.fov_samples.tolist(),
            "wavelength_nm": self.wavelength_samples.tolist(),
            "pupil": {"grid_size": self.grid_size, "diameter_mm": self.pupil_diameter_mm,
                      "distance_mm": self.distance_mm, "pad_factor": self.pad_factor},
            "pixel_pitch_um": self.pixel_pitch_um,
            "illumination": self.illumination.tolist(),
            "spot_rms_um": self.spot_rms_um.tolist(),
            "camera": self.camera.to_dict(),
            "sensor_response": self.sensor_response.to_dict(),
            "zernike": zernike_ref if zernike_ref is not None else zernike.field_to_json(self.zernike),
        }

    def save(self, path, zernike_file=None):
        """Write JSON; with ``zernike_file`` the coefficient table goes to a sibling file."""
        path = Path(path)
        ref = None
        if zernike_file:
            zpath = path.parent / zernike_file
            if zpath.suffix.lower() == ".csv":
                zernike.write_field_csv(self.zernike, zpath)
            else:
                zpath.write_text(json.dumps(zernike.field_to_json(self.zernike)))
            ref = str(zernike_file)
        path.write_text(json.dumps(self.to_dict(ref), indent=1))

    @classmethod
    def from_dict(cls, doc, base_dir=None):
        base = Path(base_dir) if base_dir else Path(".")
        fov = _axis(doc["fov_deg"])
        wl = _axis(doc["wavelength_nm"])
        zdoc = doc["zernike"]
        if isinstance(zdoc, str):
            zfield = zernike.load_field(base / zdoc, fov, wl)
        else:
            zfield = zernike.field_from_json(zdoc, fov, wl)
        cam = doc["camera"]
        camera = CameraModel.load(base / cam) if isinstance(cam, str) else CameraModel.from_dict(cam)
        sr = doc.get("sensor_response")
        if isinstance(sr, str):
            sr = json.loads((base / sr).read_text())
        pupil = doc["pupil"]
        return cls(
            fov_samples=fov, wavelength_samples=wl, zernike=zfield,
            pupil_diameter_mm=float(pupil["diameter_mm"]),
            distance_mm=float(pupil["distance_mm"]),
            pixel_pitch_um=float(doc["pixel_pitch_um"]),
            illumination=doc["illumination"], spot_rms_um=doc["spot_rms_um"],
            camera=camera,
            sensor_response=SensorResponse.from_dict(sr) if sr else None,
            grid_size=int(pupil.get("grid_size", 512)),
            pad_factor=int(pupil.get("pad_factor", 4)),
            name=doc.get("name", "custom"),
        )


def _axis(spec):
    if isinstance(spec, dict):
        n = int(round((spec["stop"] - spec["start"]) / spec["step"])) + 1
        return np.round(spec["start"] + spec["step"] * np.arange(n), 9)
    return np.asarray(spec, dtype=float)


def load_prescription(path=None) -> OpticalPrescription:
    """Load a prescription file; ``None`` or ``'default'`` gives the built-in design.

    Without a path, the ``PALSIM_PRESCRIPTION`` environment variable is consulted.
    """
    if path is None:
        path = os.environ.get(ENV_PRESCRIPTION) or "default"
    if str(path) == "default":
        return default_prescription()
    path = Path(path)
    return OpticalPrescription.from_dict(json.loads(path.read_text()), path.parent)


# ---------------------------------------------------------- built-in design

DEFAULT_FOV = np.round(30.0 + 0.7 * np.arange(101), 9)
DEFAULT_WAVELENGTHS = np.arange(400.0, 701.0, 10.0)
DEFAULT_PIXEL_PITCH_UM = 4.8
DEFAULT_F_NUMBER = 2.8
# r(theta) = 2.2 theta + a2 theta^2 with r(90) equal to the 1504-px unfolded circumference
_A2 = (1504 / (2 * np.pi) - 2.2 * 90.0) / 90.0 ** 2
DEFAULT_CAMERA = CameraModel((0.0, 2.2, _A2), (640.0, 512.0), (30.0, 100.0), 90.0)


def _synthetic_opd_um(u, t):
    """Fringe OPD coefficients (um) at normalized field u and color t, both in [-1, 1]."""
    c = np.zeros(zernike.N_TERMS)
    c[1] = 0.12 * t * (1.0 + u) / 2.0          # lateral color
    c[3] = 0.45 + 0.9 * u * u + 0.35 * t       # field curvature + axial color
    c[4] = 0.75 * u * u                        # astigmatism
    c[5] = 0.12 * u
    c[6] = 0.55 * u                            # coma
    c[7] = 0.08 * u * u
    c[8] = 0.28 + 0.06 * t                     # spherical
    c[9] = c[10] = 0.06 * u
    c[11] = 0.10 * u * u
    c[12] = 0.03 * u
    c[13] = 0.07 * u
    c[15] = 0.05
    rng = np.random.default_rng(20220705)
    c[16:] = 0.02 * rng.standard_normal(zernike.N_TERMS - 16)
    return c


def _geometric_spot_rms(coeff_waves, wavelengths_nm, f_number, n=64):
    """Polychromatic RMS transverse ray error (um) about the common centroid."""
    grid = zernike.PupilGrid(n, 1.0)
    m = grid.mask
    step = 2.0 / n
    eps = []
    for c, wl in zip(coeff_waves, wavelengths_nm):
        opd = zernike.coeffs_to_map(c, grid) * wl * 1e-3
        gy, gx = np.gradient(opd, step)
        eps.append(np.stack([gx[m], gy[m]], axis=1) * (-2.0 * f_number))
    eps = np.concatenate(eps)
    geo = np.sqrt(np.mean(np.sum((eps - eps.mean(axis=0)) ** 2, axis=1)))
    diff = 0.55 * f_number
    return float(np.hypot(geo, diff))


def default_prescription(grid_size=512, fov_samples=None, wavelength_samples=None) -> OpticalPrescription:
    """Built-in design; sampling overrides give cheaper variants of the same lens."""
    fov = DEFAULT_FOV if fov_samples is None else np.asarray(fov_samples, dtype=float)
    wl = DEFAULT_WAVELENGTHS if wavelength_samples is None else np.asarray(wavelength_samples, dtype=float)
    u = (fov - 65.0) / 35.0
    t = (wl - 550.0) / 150.0
    coeffs = np.empty((fov.size, wl.size, zernike.N_TERMS))
    for i, ui in enumerate(u):
        for k, tk in enumerate(t):
            coeffs[i, k] = _synthetic_opd_um(ui, tk) / (wl[k] * 1e-3)
    spot = np.array([_geometric_spot_rms(coeffs[i], wl, DEFAULT_F_NUMBER) for i in range(fov.size)])
    cam = DEFAULT_CAMERA
    efl_px = np.polynomial.polynomial.polyval(cam.theta0, np.polynomial.polynomial.polyder(cam.taylor_coeffs))
    distance_mm = efl_px * 180.0 / np.pi * DEFAULT_PIXEL_PITCH_UM * 1e-3
    return OpticalPrescription(
        fov_samples=fov, wavelength_samples=wl,
        zernike=zernike.ZernikeField(coeffs, fov, wl, {"source": "synthetic-default"}),
        pupil_diameter_mm=distance_mm / DEFAULT_F_NUMBER,
        distance_mm=distance_mm,
        pixel_pitch_um=DEFAULT_PIXEL_PITCH_UM,
        illumination=1.0 - 0.25 * u * u,
        spot_rms_um=spot,
        camera=cam,
        grid_size=grid_size,
        name="default" if fov_samples is None and wavelength_samples is None else "default-subsampled",
    )
