"""PAL camera geometry: FoV-to-radius model, unfolding and scale factors.

The camera maps a polar FoV angle theta (deg) to an image radius through an
ascending power series ``r(theta) = sum a_k theta**k`` in pixels. An annular
image unfolds to an equirectangular strip whose rows are FoVs and whose
columns are azimuths; its width is the circumference at the reference FoV
theta0, so a ring at theta is stretched by ``S = r(theta0) / r(theta)``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from ._resample import area_weights, linear_cyclic_resample, overlap_matrix
from .diffraction import PsfKernel, PsfStack
from .errors import DegenerateModel, InvalidArgument, OutOfRange
from .image import ImagePlane

log = logging.getLogger(__name__)

UNFOLDED_SIZE = (288, 1504)


@dataclass(frozen=True, eq=False)
class CameraModel:
    taylor_coeffs: tuple
    center: tuple
    theta_range: tuple
    theta0: float | None = None

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.taylor_coeffs)
        lo, hi = (float(v) for v in self.theta_range)
        if not coeffs or not lo < hi:
            raise InvalidArgument("camera model needs coefficients and a non-empty FoV range")
        object.__setattr__(self, "taylor_coeffs", coeffs)
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "theta_range", (lo, hi))
        dense = np.polynomial.polynomial.polyval(np.linspace(lo, hi, 2049), coeffs)
        if np.any(np.diff(dense) <= 0):
            raise InvalidArgument("r(theta) must be strictly increasing over the FoV range")
        t0 = self.theta0
        if t0 is None:
            t0 = 90.0 if lo <= 90.0 <= hi else (hi if hi < 90.0 else lo)
        elif not lo <= t0 <= hi:
            raise InvalidArgument(f"theta0 {t0} outside FoV range {self.theta_range}")
        object.__setattr__(self, "theta0", float(t0))

    @classmethod
    def linear(cls, px_per_deg, theta_range, center=(0.0, 0.0), theta0=None):
        """r = px_per_deg * theta; the fallback model for synthetic data."""
        return cls((0.0, px_per_deg), center, theta_range, theta0)

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["taylor_coeffs"], doc.get("center", (0.0, 0.0)),
                   doc["theta_range_deg"], doc.get("theta0_deg"))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self):
        return {"taylor_coeffs": list(self.taylor_coeffs), "center": list(self.center),
                "theta_range_deg": list(self.theta_range), "theta0_deg": self.theta0}

    def radius(self, theta):
        return np.polynomial.polynomial.polyval(np.asarray(theta, dtype=float), self.taylor_coeffs)


def reference_fov(theta_range, fov_samples=None):
    """Reference FoV: 90 deg when inside the range, else the sample nearest the equator."""
    lo, hi = theta_range
    if lo <= 90.0 <= hi:
        return 90.0
    if fov_samples is None:
        return hi if hi < 90.0 else lo
    s = np.asarray(fov_samples, dtype=float)
    return float(s[np.argmin(np.abs(s - 90.0))])


def radius_of_fov(model: CameraModel, theta):
    """Image radius in pixels for FoV angle(s) in degrees."""
    t = np.asarray(theta, dtype=float)
    lo, hi = model.theta_range
    if np.any(t < lo) or np.any(t > hi):
        raise OutOfRange(f"FoV {theta} outside model range {model.theta_range}")
    r = model.radius(t)
    return float(r) if r.ndim == 0 else r


@dataclass(frozen=True, eq=False)
class ScaleProfile:
    """Per-FoV horizontal stretch factors of the unfolded image."""

    fov_samples: np.ndarray
    scale: np.ndarray
    theta0: float

    def __post_init__(self):
        f = np.asarray(self.fov_samples, dtype=float)
        s = np.asarray(self.scale, dtype=float)
        if f.shape != s.shape:
            raise InvalidArgument("one scale factor per FoV sample is required")
        if np.any(s <= 0):
            raise InvalidArgument("scale factors must be positive")
        object.__setattr__(self, "fov_samples", f)
        object.__setattr__(self, "scale", s)

    @classmethod
    def unity(cls, fov_samples, theta0=90.0):
        return cls(fov_samples, np.ones(len(fov_samples)), theta0)

    def to_dict(self):
        return {"theta0_deg": self.theta0, "fov_deg": self.fov_samples.tolist(),
                "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["fov_deg"], doc["scale"], doc["theta0_deg"])


def scale_profile(model: CameraModel, fov_samples) -> ScaleProfile:
    """S(theta) = r(theta0) / r(theta) for each sample."""
    fov = np.asarray(fov_samples, dtype=float)
    r = radius_of_fov(model, fov)
    r = np.atleast_1d(r)
    if np.any(r == 0):
        bad = fov[np.atleast_1d(r) == 0]
        raise DegenerateModel(f"zero image radius at FoV {bad.tolist()}")
    r0 = radius_of_fov(model, model.theta0)
    return ScaleProfile(fov, r0 / r, model.theta0)


def row_assignment(height: int, fov_samples) -> np.ndarray:
    """Sample index per image row.

    Row i sits at ``theta_min + i * (theta_max - theta_min) / (h - 1)`` and is
    snapped to the nearest sampled FoV.
    """
    fov = np.asarray(fov_samples, dtype=float)
    if height == 1 or fov.size == 1:
        theta = np.full(height, fov[0])
    else:
        theta = fov[0] + np.arange(height) * (fov[-1] - fov[0]) / (height - 1)
    return np.argmin(np.abs(theta[:, None] - fov[None, :]), axis=1)


def _stripe_operator(w, s):
    """Dense (w, w) operator: area-downsample to round(w / s), linear-upsample back."""
    n_low = max(1, int(round(w / s)))
    down = area_weights(w, n_low)
    eye = np.eye(n_low)
    up = linear_cyclic_resample(eye, w)
    return up.T @ down


def unfold_resample(image: ImagePlane, profile: ScaleProfile, row_to_fov) -> ImagePlane:
    """Simulate the uneven sampling of unfolding on a perspective image.

    Rows whose FoV has ``S > 1`` are area-averaged down to ``round(w / S)``
    samples and linearly interpolated back to ``w`` (azimuth wraps). Rows with
    ``S <= 1`` are returned untouched.
    """
    data = image.data
    h, w, c = data.shape
    row_to_fov = np.asarray(row_to_fov)
    if row_to_fov.shape != (h,):
        raise InvalidArgument("row_to_fov must assign one FoV index per image row")
    out = data.copy()
    for fi in np.unique(row_to_fov):
        s = float(profile.scale[fi])
        if s <= 1.0:
            continue
        rows = np.flatnonzero(row_to_fov == fi)
        op = _stripe_operator(w, s)
        out[rows] = np.einsum("jk,rkc->rjc", op, data[rows])
    return image.with_data(out)


def deform_psf(kernel: PsfKernel, s: float) -> PsfKernel:
    """Stretch a kernel horizontally by ``s`` for the unfolded plane.

    Each kernel pixel is treated as a box of width ``s``; the new pixel
    values are the exact overlaps with unit output cells, so row sums and the
    vertical profile are preserved. The new width is the next odd integer
    >= ``width * s``.
    """
    if not s > 0:
        raise InvalidArgument("scale factor must be positive")
    k = np.asarray(kernel.data, dtype=float)
    h, w = k.shape
    new_w = math.ceil(w * s - 1e-9)
    new_w += 1 - new_w % 2
    clamped = w * s < 1.0
    if clamped:
        log.warning("deformed kernel narrower than one pixel; clamped to %dx1", h)
    src_edges = (np.arange(w + 1) - w / 2) * s
    dst_edges = np.arange(new_w + 1) - new_w / 2
    m = overlap_matrix(dst_edges, src_edges) / s
    out = k @ m.T
    out /= out.sum()
    meta = dict(kernel.meta, scale=float(s), clamped=clamped)
    return PsfKernel(out, kernel.fov_deg, kernel.tag, kernel.energy, meta)


def deform_stack(stack: PsfStack, profile: ScaleProfile) -> PsfStack:
    """Apply :func:`deform_psf` with each FoV's scale factor."""
    if not np.allclose(profile.fov_samples, stack.fov_samples):
        raise InvalidArgument("scale profile FoVs do not match the stack")
    rows = [[deform_psf(k, profile.scale[i]) for k in row] for i, row in enumerate(stack.kernels)]
    return PsfStack(rows, stack.fov_samples, stack.tags, stack.illumination, stack.spot_rms_um,
                    dict(stack.meta, deformed=True))


def unfold_annular(image: ImagePlane, model: CameraModel, out_size=UNFOLDED_SIZE) -> ImagePlane:
    """Equirectangular unfolding of an annular PAL image.

    Output row i is FoV ``theta_min + i (theta_max - theta_min) / (h - 1)``,
    column j is azimuth ``2 pi j / w``; samples are bilinear at
    ``(cx + r cos phi, cy + r sin phi)``. Samples falling outside the source
    are zero and counted in ``meta['out_of_bounds']``.
    """
    h, w = out_size
    lo, hi = model.theta_range
    theta = lo + np.arange(h) * (hi - lo) / max(h - 1, 1)
    r = model.radius(theta)
    phi = 2.0 * np.pi * np.arange(w) / w
    cx, cy = model.center
    mx = cx + r[:, None] * np.cos(phi)[None, :]
    my = cy + r[:, None] * np.sin(phi)[None, :]
    out, valid = _kernels.remap_bilinear(image.data, mx, my)
    n_bad = int(valid.size - valid.sum())
    if n_bad:
        log.warning("%d unfolded samples fell outside the annular image", n_bad)
    meta = dict(image.meta, out_of_bounds=n_bad, theta_deg=theta.tolist())
    return ImagePlane(np.clip(out, 0.0, 1.0), image.color_state, "perspective_unfolded", meta)
