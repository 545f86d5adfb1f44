"""Focal-plane PSFs from Zernike pupils by Fourier-transform diffraction.

The image-plane amplitude is the scaled Fourier transform of the pupil
function ``P(x', y') = circ * exp(i 2 pi W)``:

    E(x, y) = E0 / (lambda d) * sum P(x', y') exp(-i 2 pi (x' x + y' y) / (lambda d)) dx'^2

evaluated with a zero-padded FFT. With pupil spacing ``dx'`` and FFT length
``N`` the image-plane spacing is ``lambda d / (N dx')``; the padding factor
is raised until that spacing is no coarser than the sensor pixel pitch.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from . import zernike
from ._resample import overlap_matrix
from .errors import InvalidArgument, PrescriptionIncomplete, SamplingError

MIN_PAD = 4
MAX_FFT = 32768
CHANNELS = ("R", "G", "B")


@dataclass(frozen=True, eq=False)
class PupilFunction:
    values: np.ndarray
    grid: zernike.PupilGrid
    wavelength_nm: float
    fov_deg: float = 0.0


@dataclass(frozen=True, eq=False)
class PsfKernel:
    """Non-negative kernel on an odd-sided pixel grid.

    ``energy`` is the fraction of the focal-plane power that fell inside the
    crop before normalization; ``tag`` is a channel name or a wavelength.
    """

    data: np.ndarray
    fov_deg: float = 0.0
    tag: object = None
    energy: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.dtype not in (np.float32, np.float64):
            d = d.astype(np.float64)
        if d.ndim != 2 or d.shape[0] % 2 == 0 or d.shape[1] % 2 == 0:
            raise InvalidArgument(f"kernel must be 2-D with odd sides, got {d.shape}")
        if np.any(d < 0):
            raise InvalidArgument("kernel has negative entries")
        object.__setattr__(self, "data", d)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def support_px(self):
        return max(self.data.shape)


@dataclass(frozen=True, eq=False)
class PsfStack:
    """Kernels indexed ``[fov_index][tag_index]`` plus per-FoV metadata.

    ``tags`` are wavelengths in nm for a spectral stack and channel names for
    an RGB stack. ``illumination`` is the per-FoV relative gain applied during
    degradation; kernels themselves stay unit-sum.
    """

    kernels: tuple
    fov_samples: np.ndarray
    tags: tuple
    illumination: np.ndarray
    spot_rms_um: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        kernels = tuple(tuple(row) for row in self.kernels)
        fov = np.asarray(self.fov_samples, dtype=float)
        ill = np.asarray(self.illumination, dtype=float)
        if len(kernels) != fov.size or any(len(r) != len(self.tags) for r in kernels):
            raise InvalidArgument("stack must hold exactly one kernel per (fov, tag) cell")
        if ill.shape != fov.shape:
            raise InvalidArgument("illumination must have one value per FoV")
        if np.any(ill <= 0) or np.any(ill > 1):
            raise InvalidArgument("illumination values must lie in (0, 1]")
        object.__setattr__(self, "kernels", kernels)
        object.__setattr__(self, "fov_samples", fov)
        object.__setattr__(self, "tags", tuple(self.tags))
        object.__setattr__(self, "illumination", ill)
        if self.spot_rms_um is not None:
            object.__setattr__(self, "spot_rms_um", np.asarray(self.spot_rms_um, dtype=float))

    @property
    def n_fov(self):
        return len(self.kernels)

    @property
    def n_tags(self):
        return len(self.tags)

    def kernel(self, fov_index, tag_index=0) -> PsfKernel:
        return self.kernels[fov_index][tag_index]

    def supports(self):
        """(height, width) per FoV, taken from the first tag."""
        return np.array([[row[0].height, row[0].width] for row in self.kernels])

    def strehl(self, tag_index):
        return np.array([row[tag_index].meta.get("strehl", np.nan) for row in self.kernels])


@dataclass(frozen=True, eq=False)
class SensorResponse:
    """Per-channel spectral weights; each channel is normalized to unit sum."""

    wavelengths_nm: np.ndarray
    weights: np.ndarray
    channels: tuple = CHANNELS

    def __post_init__(self):
        wl = np.asarray(self.wavelengths_nm, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.channels), wl.size):
            raise InvalidArgument(f"weights must be shaped ({len(self.channels)}, {wl.size})")
        if np.any(w < 0):
            raise InvalidArgument("spectral weights must be non-negative")
        sums = w.sum(axis=1, keepdims=True)
        if np.any(sums <= 0):
            raise InvalidArgument("each channel needs at least one nonzero weight")
        object.__setattr__(self, "wavelengths_nm", wl)
        object.__setattr__(self, "weights", w / sums)
        object.__setattr__(self, "channels", tuple(self.channels))

    @classmethod
    def default(cls, wavelengths_nm, centers=(610.0, 540.0, 460.0), fwhm=60.0):
        """Bell-shaped stand-in responses for R, G, B."""
        wl = np.asarray(wavelengths_nm, dtype=float)
        sigma = fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
        w = np.exp(-0.5 * ((wl[None, :] - np.asarray(centers)[:, None]) / sigma) ** 2)
        return cls(wl, w)

    @classmethod
    def from_dict(cls, doc):
        chans = tuple(doc.get("channels", CHANNELS))
        return cls(doc["wavelength_nm"], [doc[c] for c in chans], chans)

    def to_dict(self):
        out = {"wavelength_nm": self.wavelengths_nm.tolist(), "channels": list(self.channels)}
        for c, w in zip(self.channels, self.weights):
            out[c] = w.tolist()
        return out


# ------------------------------------------------------------------ pupils

def pupil_function(W, grid: zernike.PupilGrid, wavelength_nm: float, fov_deg: float = 0.0) -> PupilFunction:
    """circ(rho) * exp(i 2 pi W) for a wavefront W given in waves."""
    if not wavelength_nm > 0:
        raise InvalidArgument("wavelength must be positive")
    W = np.asarray(W, dtype=float)
    if W.shape != (grid.n, grid.n):
        raise InvalidArgument(f"wavefront shape {W.shape} does not match grid {grid.n}")
    vals = np.zeros((grid.n, grid.n), dtype=complex)
    m = grid.mask
    vals[m] = np.exp(2j * np.pi * W[m])
    return PupilFunction(vals, grid, float(wavelength_nm), float(fov_deg))


def _field_scale(pupil, d_mm, amplitude):
    lam_mm = pupil.wavelength_nm * 1e-6
    dx = pupil.grid.spacing
    return amplitude * dx * dx / (lam_mm * d_mm)


def image_spacing_um(pupil, d_mm, pad):
    """Image-plane sample spacing in micrometres for an FFT of length pad*n."""
    lam_mm = pupil.wavelength_nm * 1e-6
    return lam_mm * d_mm / (pad * pupil.grid.n * pupil.grid.spacing) * 1e3


def pad_for_pitch(pupil, d_mm, pixel_pitch_um, min_pad=MIN_PAD):
    """Smallest padding factor >= min_pad whose image spacing is <= the pixel pitch."""
    base = image_spacing_um(pupil, d_mm, 1)
    return max(int(min_pad), math.ceil(base / pixel_pitch_um - 1e-12))


def focal_intensity(pupil: PupilFunction, d_mm: float, pad: int = MIN_PAD, amplitude: float = 1.0):
    """Full un-normalized focal-plane intensity |E|^2 on the padded FFT grid.

    Returns:
        (intensity, spacing_um) with the optical axis at index ``N // 2``.
    """
    if not d_mm > 0:
        raise InvalidArgument("pupil-to-image distance must be positive")
    n = pupil.grid.n
    N = int(pad) * n
    E = sfft.fft2(pupil.values, s=(N, N))
    I = np.abs(sfft.fftshift(E)) ** 2 * _field_scale(pupil, d_mm, amplitude) ** 2
    return I, image_spacing_um(pupil, d_mm, pad)


def _window_intensity(values, N, half):
    """|FFT|^2 at frequency indices -half..half on both axes, skipping zero rows."""
    idx = np.arange(-half, half + 1) % N
    A = sfft.fft(values, n=N, axis=1)[:, idx]
    B = sfft.fft(A, n=N, axis=0)[idx]
    return B.real ** 2 + B.imag ** 2


def _pixel_binning(support, pitch_um, half, spacing_um):
    c = support // 2
    pix = (np.arange(support + 1) - c - 0.5) * pitch_um
    fine = (np.arange(-half, half + 2) - 0.5) * spacing_um
    return overlap_matrix(pix, fine)


def _check_sampling(n, N, half, support, pitch_um, spacing_um):
    needed = support * pitch_um + 2 * spacing_um
    available = N * spacing_um
    if 2 * half + 1 > N or available < needed:
        min_grid = 1 << math.ceil(math.log2(max(32, n * needed / available)))
        raise SamplingError(
            f"image-plane window {available:.1f} um is smaller than the {needed:.1f} um crop",
            min_grid,
        )


def psf(pupil: PupilFunction, d_mm: float, pixel_pitch_um: float, out_support: int,
        pad: int | None = None, amplitude: float = 1.0) -> PsfKernel:
    """Sensor-sampled, unit-sum PSF of a pupil.

    The focal intensity is integrated over square pixels of side
    ``pixel_pitch_um`` centered on the optical axis and cropped to
    ``out_support`` pixels. Only the FFT outputs inside the crop are formed.
    """
    if not d_mm > 0:
        raise InvalidArgument("pupil-to-image distance must be positive")
    if out_support < 1 or out_support % 2 == 0:
        raise InvalidArgument("out_support must be a positive odd integer")
    if pad is None:
        pad = pad_for_pitch(pupil, d_mm, pixel_pitch_um)
    n = pupil.grid.n
    N = int(pad) * n
    if N > MAX_FFT:
        raise SamplingError(f"padding {pad} exceeds the {MAX_FFT}-point FFT limit", n)
    spacing = image_spacing_um(pupil, d_mm, pad)
    if spacing > pixel_pitch_um * (1 + 1e-12):
        raise SamplingError(f"image spacing {spacing:.3f} um exceeds pixel pitch", n)
    half = math.ceil((out_support / 2) * pixel_pitch_um / spacing + 0.5) + 1
    _check_sampling(n, N, half, out_support, pixel_pitch_um, spacing)

    scale2 = _field_scale(pupil, d_mm, amplitude) ** 2
    I = _window_intensity(pupil.values, N, half) * scale2
    B = _pixel_binning(out_support, pixel_pitch_um, half, spacing)
    K = B @ I @ B.T
    amp = np.abs(pupil.values)
    total = N * N * np.sum(amp ** 2) * scale2 * spacing ** 2
    ideal_peak = (np.sum(amp)) ** 2 * scale2
    kernel_sum = K.sum()
    return PsfKernel(
        K / kernel_sum,
        fov_deg=pupil.fov_deg,
        tag=pupil.wavelength_nm,
        energy=float(kernel_sum / total),
        meta={"strehl": float(I.max() / ideal_peak), "pad": int(pad), "spacing_um": spacing},
    )


def ideal_peak(pupil: PupilFunction, d_mm: float, amplitude: float = 1.0) -> float:
    """On-axis intensity of the same pupil amplitude with a flat wavefront."""
    return float(np.sum(np.abs(pupil.values)) ** 2 * _field_scale(pupil, d_mm, amplitude) ** 2)


# ------------------------------------------------------------------ stacks

def support_from_spot(rms_um, pixel_pitch_um, lo=3, hi=63):
    """Next odd integer >= 2*rms/pitch + 1, clamped to [lo, hi]."""
    s = 2.0 * np.asarray(rms_um, dtype=float) / pixel_pitch_um + 1.0
    s = np.ceil(s - 1e-9).astype(int)
    s = np.where(s % 2 == 0, s + 1, s)
    return np.clip(s, lo, hi)


def _fov_kernels(args):
    coeffs, wavelengths, n, D, d, pitch, support, fov, pad = args
    grid = zernike.PupilGrid(n, D)
    out = []
    for c, wl in zip(coeffs, wavelengths):
        W = zernike.coeffs_to_map(c, grid)
        p = pupil_function(W, grid, wl, fov)
        out.append(psf(p, d, pitch, int(support), pad=pad_for_pitch(p, d, pitch, pad or MIN_PAD)))
    return out


def build_stack(prescription, field=None, jobs: int = 1) -> PsfStack:
    """Per-wavelength PSF stack for every (fov, wavelength) sample.

    Args:
        prescription: an ``OpticalPrescription``.
        field: coefficient table to use instead of the prescription's own
            (e.g. a perturbed copy); its sampling must match.
        jobs: worker processes; results do not depend on this value.
    """
    field = prescription.zernike if field is None else field
    pr = prescription
    if field.coeffs.shape[:2] != (len(pr.fov_samples), len(pr.wavelength_samples)) or not (
        np.allclose(field.fov_samples, pr.fov_samples) and
        np.allclose(field.wavelength_samples, pr.wavelength_samples)
    ):
        raise PrescriptionIncomplete("Zernike field does not cover the prescription sampling")
    supports = pr.supports()
    tasks = [
        (field.coeffs[i], pr.wavelength_samples, pr.grid_size, pr.pupil_diameter_mm,
         pr.distance_mm, pr.pixel_pitch_um, supports[i], float(pr.fov_samples[i]), pr.pad_factor)
        for i in range(len(pr.fov_samples))
    ]
    if jobs and jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_fov_kernels, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        rows = [_fov_kernels(t) for t in tasks]
    return PsfStack(rows, pr.fov_samples, tuple(float(w) for w in pr.wavelength_samples),
                    pr.illumination, pr.spot_rms_um,
                    {"kind": "spectral", "field": dict(field.meta)})


def spectral_to_rgb(stack: PsfStack, response: SensorResponse) -> PsfStack:
    """Collapse wavelengths into channels: K_c = sum_l w_c(l) K_l, renormalized."""
    wl = np.asarray(stack.tags, dtype=float)
    if wl.shape != response.wavelengths_nm.shape or not np.allclose(wl, response.wavelengths_nm, atol=1e-9):
        raise InvalidArgument("sensor response wavelengths do not match the stack")
    rows = []
    for fi, row in enumerate(stack.kernels):
        out = []
        for ci, ch in enumerate(response.channels):
            w = response.weights[ci]
            acc = np.zeros(row[0].data.shape)
            energy = strehl = 0.0
            for k, wk in zip(row, w):
                if wk:
                    acc += wk * k.data
                    energy += wk * k.energy
                    strehl += wk * k.meta.get("strehl", np.nan)
            out.append(PsfKernel(acc / acc.sum(), row[0].fov_deg, ch, energy, {"strehl": strehl}))
        rows.append(out)
    meta = dict(stack.meta, kind="rgb")
    return PsfStack(rows, stack.fov_samples, response.channels, stack.illumination, stack.spot_rms_um, meta)
