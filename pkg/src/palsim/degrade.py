"""Spatially-variant degradation of unfolded panoramas.

The pipeline is ``unfold_resample -> invert_isp -> patchwise_convolve ->
forward_isp``. Rows of the unfolded plane are grouped into stripes that share
a FoV sample; each stripe is convolved with its FoV's (deformed) RGB kernel,
scaled by the relative illumination and cross-faded into its neighbours.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from . import _kernels
from .diffraction import PsfStack, build_stack, spectral_to_rgb
from .errors import ConfigurationError, InvalidArgument
from .image import ImagePlane
from .isp import IspParams, forward_isp, invert_isp
from .projection import ScaleProfile, deform_stack, row_assignment, unfold_resample
from . import zernike

log = logging.getLogger(__name__)

PLANES = ("psf_height", "psf_width", "scale_factor")


@dataclass(frozen=True, eq=False)
class DegradationRecipe:
    """One concrete degradation: ISP, noise seed, geometry and stripe settings.

    ``scale_profile`` and ``row_to_fov`` may be left ``None``; they are then
    derived from the prescription's camera model and the image height.
    """

    isp: IspParams = field(default_factory=IspParams)
    noise_seed: int | None = 0
    scale_profile: ScaleProfile | None = None
    row_to_fov: np.ndarray | None = None
    blend_margin: int = 4
    fft_threshold: int = 15
    prescription: str | None = None
    perturbation_fraction: float = 0.0
    perturbation_seed: int | None = None
    per_wavelength: bool = False

    def __post_init__(self):
        if self.blend_margin < 0:
            raise InvalidArgument("blend_margin must be non-negative")
        if self.fft_threshold < 1:
            raise InvalidArgument("fft_threshold must be positive")
        if self.row_to_fov is not None:
            object.__setattr__(self, "row_to_fov", np.asarray(self.row_to_fov, dtype=np.int64))

    @classmethod
    def identity(cls, fov_samples=None):
        prof = None if fov_samples is None else ScaleProfile.unity(fov_samples)
        return cls(IspParams.identity(), 0, prof)

    def to_dict(self):
        doc = {
            "prescription": self.prescription,
            "perturbation": {"fraction": self.perturbation_fraction, "seed": self.perturbation_seed,
                             "per_wavelength": self.per_wavelength},
            "isp": self.isp.to_dict(),
            "noise_seed": self.noise_seed,
            "blend_margin": self.blend_margin,
            "fft_threshold": self.fft_threshold,
        }
        if self.scale_profile is not None:
            doc["scale_profile"] = self.scale_profile.to_dict()
        if self.row_to_fov is not None:
            doc["row_to_fov"] = self.row_to_fov.tolist()
        return doc

    @classmethod
    def from_dict(cls, doc):
        pert = doc.get("perturbation") or {}
        prof = doc.get("scale_profile")
        return cls(
            isp=IspParams.from_dict(doc.get("isp", {})),
            noise_seed=doc.get("noise_seed", 0),
            scale_profile=ScaleProfile.from_dict(prof) if isinstance(prof, dict) else None,
            row_to_fov=doc.get("row_to_fov"),
            blend_margin=int(doc.get("blend_margin", 4)),
            fft_threshold=int(doc.get("fft_threshold", 15)),
            prescription=doc.get("prescription"),
            perturbation_fraction=float(pert.get("fraction", 0.0)),
            perturbation_seed=pert.get("seed"),
            per_wavelength=bool(pert.get("per_wavelength", False)),
        )

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


@dataclass(frozen=True, eq=False)
class PhysicalInfoMap:
    """(h, w, 3) map of PSF height, PSF width and scale factor, each in [0, 1]."""

    data: np.ndarray
    normalizers: dict

    def write(self, raw_path, json_path=None):
        raw_path = Path(raw_path)
        json_path = Path(json_path) if json_path else raw_path.with_suffix(".json")
        np.ascontiguousarray(self.data, dtype="<f4").tofile(raw_path)
        sidecar = {"shape": list(self.data.shape), "dtype": "float32-le", "planes": list(PLANES),
                   "normalizers": self.normalizers}
        json_path.write_text(json.dumps(sidecar, indent=1))

    @classmethod
    def read(cls, raw_path, json_path=None):
        raw_path = Path(raw_path)
        json_path = Path(json_path) if json_path else raw_path.with_suffix(".json")
        side = json.loads(json_path.read_text())
        data = np.fromfile(raw_path, dtype="<f4").reshape(side["shape"])
        return cls(data, side["normalizers"])


# ------------------------------------------------------------- convolution

def stripes(row_to_fov):
    """Runs of equal FoV index as (start, stop, fov_index)."""
    r = np.asarray(row_to_fov)
    cuts = np.flatnonzero(np.diff(r)) + 1
    starts = np.concatenate([[0], cuts])
    stops = np.concatenate([cuts, [r.size]])
    return [(int(a), int(b), int(r[a])) for a, b in zip(starts, stops)]


def _convolve_fft(src, kernel, r0, r1):
    """Same contract as ``convolve_rows`` via one FFT over the needed block."""
    h, w = src.shape
    kh, kw = kernel.shape
    ch, cw = kh // 2, kw // 2
    rows = np.clip(np.arange(r0 - ch, r1 + ch), 0, h - 1)
    block = src[rows]
    L = block.shape[0]
    kp = np.zeros((L, w))
    cols = (np.arange(kw) - cw) % w
    for i in range(kh):
        np.add.at(kp[i], cols, kernel[i])
    shape = (sfft.next_fast_len(L, real=True), w)
    spec = sfft.rfft2(block, s=shape) * sfft.rfft2(kp, s=shape)
    full = sfft.irfft2(spec, s=shape)
    return full[kh - 1: kh - 1 + (r1 - r0)]


def convolve_stripe(src, kernel, r0, r1, fft_threshold=15):
    """Rows [r0, r1) of ``src`` convolved with ``kernel``; rows replicate, columns wrap."""
    k = np.asarray(kernel, dtype=np.float64)
    if max(k.shape) <= fft_threshold:
        return _kernels.convolve_rows(np.ascontiguousarray(src, dtype=np.float64), k, r0, r1)
    return _convolve_fft(src, k, r0, r1)


def patchwise_convolve(raw: ImagePlane, stack: PsfStack, row_to_fov, blend_margin=4,
                       fft_threshold=15) -> ImagePlane:
    """Stripe-wise convolution with the kernels of each row's FoV.

    Stripe k covers a run of rows with one FoV. Its result is computed on
    the run extended by ``blend_margin`` rows each side, multiplied by the
    FoV's illumination and faded in over the ``2 * blend_margin`` rows that
    straddle its first row: ``out = out + t * (stripe - out)``. Identical
    stripe results therefore blend exactly.
    """
    data = raw.data
    h, w, c = data.shape
    r2f = np.asarray(row_to_fov)
    if r2f.shape != (h,):
        raise InvalidArgument("row_to_fov must assign one FoV index per image row")
    if r2f.min() < 0 or r2f.max() >= stack.n_fov:
        raise ConfigurationError("row_to_fov refers to FoVs missing from the stack")
    if stack.n_tags not in (1, c):
        raise ConfigurationError(f"stack has {stack.n_tags} channels but the image has {c}")
    m = int(blend_margin)
    out = np.zeros_like(data)
    for si, (a, b, fi) in enumerate(stripes(r2f)):
        lo, hi = max(0, a - m), min(h, b + m)
        gain = float(stack.illumination[fi])
        res = np.empty((hi - lo, w, c))
        for ch in range(c):
            k = stack.kernel(fi, ch if stack.n_tags == c else 0).data
            if k.shape[0] > h or k.shape[1] > w:
                raise ConfigurationError(f"kernel {k.shape} larger than the image {(h, w)}")
            res[:, :, ch] = convolve_stripe(data[:, :, ch], k, lo, hi, fft_threshold)
        if gain != 1.0:
            res *= gain
        if si == 0 or m == 0:
            out[lo:hi] = res
            continue
        # cross-fade over [a - m, a + m), then take over the rest
        fade_hi = min(hi, a + m)
        t = (np.arange(lo, fade_hi) - (a - m) + 0.5) / (2 * m)
        seg = out[lo:fade_hi]
        out[lo:fade_hi] = seg + t[:, None, None] * (res[: fade_hi - lo] - seg)
        out[fade_hi:hi] = res[fade_hi - lo:]
    return raw.with_data(out)


# ------------------------------------------------------------- pipeline

def resolve_geometry(recipe: DegradationRecipe, stack: PsfStack, height: int, prescription=None):
    """Scale profile and row assignment for an image of ``height`` rows."""
    profile = recipe.scale_profile
    if profile is None:
        if prescription is None and recipe.prescription:
            from .prescription import load_prescription

            prescription = load_prescription(recipe.prescription)
        if prescription is not None:
            profile = prescription.scale_profile()
        else:
            profile = ScaleProfile.unity(stack.fov_samples)
    if not np.allclose(profile.fov_samples, stack.fov_samples):
        raise ConfigurationError("scale profile FoVs do not match the stack")
    r2f = recipe.row_to_fov
    if r2f is None:
        r2f = row_assignment(height, stack.fov_samples)
    elif r2f.shape != (height,):
        raise ConfigurationError(f"row_to_fov has {r2f.size} rows, image has {height}")
    return profile, r2f


def physical_info(stack: PsfStack, profile: ScaleProfile, shape, row_to_fov=None) -> PhysicalInfoMap:
    """Per-row PSF height, width and scale factor normalized by their maxima."""
    h, w = shape[:2]
    r2f = row_assignment(h, stack.fov_samples) if row_to_fov is None else np.asarray(row_to_fov)
    hw = stack.supports().astype(float)
    s = np.asarray(profile.scale, dtype=float)
    norms = {"psf_height": float(hw[:, 0].max()), "psf_width": float(hw[:, 1].max()),
             "scale_factor": float(s.max())}
    per_fov = np.stack([hw[:, 0] / norms["psf_height"], hw[:, 1] / norms["psf_width"],
                        s / norms["scale_factor"]], axis=1)
    data = np.broadcast_to(per_fov[r2f][:, None, :], (h, w, 3)).astype(np.float32)
    return PhysicalInfoMap(data, norms)


def degrade_image(clean: ImagePlane, recipe: DegradationRecipe, stack: PsfStack,
                  prescription=None) -> tuple[ImagePlane, PhysicalInfoMap]:
    """Degrade an sRGB unfolded-plane image.

    Args:
        clean: sRGB image treated as the unfolded ground truth.
        recipe: ISP, noise seed and geometry.
        stack: RGB kernels in the perspective plane; they are deformed here
            with the scale profile unless the stack is already marked deformed.
        prescription: optional, supplies the camera model when the recipe
            has no explicit scale profile.
    """
    clean.require("srgb")
    if clean.geometry != "perspective_unfolded":
        raise InvalidArgument("degradation expects an unfolded-plane image")
    profile, r2f = resolve_geometry(recipe, stack, clean.height, prescription)
    resampled = unfold_resample(clean, profile, r2f)
    raw = invert_isp(resampled, recipe.isp)
    deformed = stack if stack.meta.get("deformed") else deform_stack(stack, profile)
    blurred = patchwise_convolve(raw, deformed, r2f, recipe.blend_margin, recipe.fft_threshold)
    out = forward_isp(blurred, recipe.isp, recipe.noise_seed)
    info = physical_info(deformed, profile, clean.shape, r2f)
    return out, info


def stack_for_recipe(recipe: DegradationRecipe, prescription=None, jobs=1) -> PsfStack:
    """RGB stack of the recipe's prescription after its coefficient perturbation."""
    if prescription is None:
        from .prescription import load_prescription

        prescription = load_prescription(recipe.prescription)
    field_ = zernike.perturb(prescription.zernike, recipe.perturbation_fraction,
                             recipe.perturbation_seed, recipe.per_wavelength)
    spectral = build_stack(prescription, field_, jobs=jobs)
    return spectral_to_rgb(spectral, prescription.sensor_response)
