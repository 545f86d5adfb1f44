"""Image- and optical-quality measures.

PSNR and SSIM compare image pairs on [0, 1] data. Strehl ratio and the
PSF-derived MTF characterize kernels; the slanted-edge MTF measures a
finished image the way ISO 12233 does (edge fit, 4x oversampled ESF,
derivative, Hamming window, FFT).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import zernike
from .diffraction import PsfKernel, focal_intensity, ideal_peak, pupil_function
from .errors import EdgeNotFound, InvalidArgument
from .image import ImagePlane, as_array

NYQUIST = 0.5


@dataclass(frozen=True, eq=False)
class MtfCurve:
    """Modulation against spatial frequency in cycles/pixel."""

    frequencies: np.ndarray
    modulation: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        m = np.asarray(self.modulation, dtype=float)
        if f.shape != m.shape or f.ndim != 1 or f.size < 2:
            raise InvalidArgument("frequencies and modulation must be matching 1-D arrays")
        if np.any(np.diff(f) <= 0):
            raise InvalidArgument("frequencies must be strictly increasing")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "modulation", m)

    def at(self, f):
        return np.interp(f, self.frequencies, self.modulation)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["frequency_cyc_per_px", "modulation"])
            w.writerows(zip(self.frequencies.tolist(), self.modulation.tolist()))


# ------------------------------------------------------------ image pairs

def _pair(a, b):
    if isinstance(a, ImagePlane) and isinstance(b, ImagePlane) and a.color_state != b.color_state:
        raise InvalidArgument(f"color states differ: {a.color_state} vs {b.color_state}")
    x, y = as_array(a), as_array(b)
    if x.shape != y.shape:
        raise InvalidArgument(f"shape mismatch {x.shape} vs {y.shape}")
    return x, y


def psnr(a, b) -> float:
    """10 log10(1 / MSE) for data on [0, 1]; identical inputs give ``inf``."""
    x, y = _pair(a, b)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def ssim(a, b, window=11, k1=0.01, k2=0.03, sigma=1.5) -> float:
    """Mean local SSIM with a Gaussian window, over fully-covered positions.

    Channels are scored independently and averaged.
    """
    x, y = _pair(a, b)
    if window % 2 == 0 or window < 3:
        raise InvalidArgument("window must be an odd integer >= 3")
    if x.ndim == 2:
        x, y = x[:, :, None], y[:, :, None]
    if min(x.shape[:2]) < window:
        raise InvalidArgument(f"images smaller than the {window}-px window")
    r = window // 2
    c1, c2 = (k1 * 1.0) ** 2, (k2 * 1.0) ** 2
    trunc = (r + 0.25) / sigma

    def filt(z):
        return ndimage.gaussian_filter(z, sigma, truncate=trunc, mode="reflect")[r:-r, r:-r]

    scores = []
    for c in range(x.shape[2]):
        u, v = x[:, :, c], y[:, :, c]
        mu_u, mu_v = filt(u), filt(v)
        suu = filt(u * u) - mu_u ** 2
        svv = filt(v * v) - mu_v ** 2
        suv = filt(u * v) - mu_u * mu_v
        num = (2 * mu_u * mu_v + c1) * (2 * suv + c2)
        den = (mu_u ** 2 + mu_v ** 2 + c1) * (suu + svv + c2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))


# ------------------------------------------------------------ optics

def strehl(coeffs, prescription, wavelength_nm=550.0, pad=None) -> float:
    """Peak intensity of the aberrated PSF over that of the flat-wavefront PSF.

    Both use the prescription's pupil grid, distance and padding, and the
    same pupil amplitude, so the ratio is 1 for a piston-only wavefront.

    Args:
        coeffs: 37 Fringe coefficients in waves.
        prescription: supplies grid size, pupil diameter and distance.
        wavelength_nm: evaluation wavelength; 550 nm by default.
    """
    grid = prescription.grid
    W = zernike.coeffs_to_map(np.asarray(coeffs, dtype=float), grid)
    p = pupil_function(W, grid, wavelength_nm)
    I, _ = focal_intensity(p, prescription.distance_mm, pad or prescription.pad_factor)
    return float(I.max() / ideal_peak(p, prescription.distance_mm))


def _axis_mtf(lsf, n_fft):
    spec = np.abs(np.fft.rfft(lsf, n_fft))
    return spec / spec[0]


def mtf_from_psf(kernel, n_fft=None) -> dict:
    """Axis MTFs of a kernel: ``sagittal`` along x (azimuth), ``tangential`` along y.

    Each is the DFT modulus of the line spread function (the kernel summed
    across the other axis), zero-padded to ``n_fft`` and normalized at DC.
    """
    k = np.asarray(kernel.data if isinstance(kernel, PsfKernel) else kernel, dtype=float)
    if k.ndim != 2 or k.sum() <= 0:
        raise InvalidArgument("kernel must be a 2-D array with positive sum")
    if n_fft is None:
        n_fft = max(128, 1 << int(math.ceil(math.log2(4 * max(k.shape)))))
    f = np.fft.rfftfreq(n_fft)
    return {
        "sagittal": MtfCurve(f, _axis_mtf(k.sum(axis=0), n_fft), {"axis": "x"}),
        "tangential": MtfCurve(f, _axis_mtf(k.sum(axis=1), n_fft), {"axis": "y"}),
    }


def diffraction_limit_mtf(D_mm, wavelength_nm, d_mm, pixel_pitch_um, n=256,
                          max_frequency=NYQUIST) -> MtfCurve:
    """Incoherent circular-aperture MTF in cycles/pixel; cutoff D / (lambda d)."""
    if min(D_mm, wavelength_nm, d_mm, pixel_pitch_um) <= 0:
        raise InvalidArgument("aperture, wavelength, distance and pitch must be positive")
    fc = D_mm / (wavelength_nm * 1e-6 * d_mm) * pixel_pitch_um * 1e-3
    f = np.linspace(0.0, max_frequency, n)
    return MtfCurve(f, diffraction_mtf_values(f / fc), {"cutoff_cyc_per_px": fc})


def diffraction_mtf_values(nu):
    nu = np.clip(np.asarray(nu, dtype=float), 0.0, 1.0)
    return (2.0 / np.pi) * (np.arccos(nu) - nu * np.sqrt(1.0 - nu * nu))


def mtf50(curve: MtfCurve) -> float:
    """First frequency where the curve falls to 0.5, linearly interpolated.

    A curve that never drops to 0.5 returns its last frequency, i.e. the
    Nyquist sentinel 0.5 for curves on [0, Nyquist].
    """
    f, m = curve.frequencies, curve.modulation
    below = np.flatnonzero(m <= 0.5)
    if below.size == 0:
        return float(max(NYQUIST, f[-1]))
    i = below[0]
    if i == 0:
        return float(f[0])
    t = (m[i - 1] - 0.5) / (m[i - 1] - m[i])
    return float(f[i - 1] + t * (f[i] - f[i - 1]))


# ------------------------------------------------------------ slanted edge

def _luminance(data):
    if data.ndim == 3:
        if data.shape[2] == 3:
            return data @ np.array([0.2126, 0.7152, 0.0722])
        return data[:, :, 0]
    return data


def _row_centroids(block):
    h, w = block.shape
    d = np.zeros_like(block)
    d[:, 1:-1] = 0.5 * (block[:, 2:] - block[:, :-2])
    win = np.hamming(w)
    dw = d * win
    s = dw.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = (dw * np.arange(w)).sum(axis=1) / s
    return c, s


def mtf_slanted_edge(image, roi=None, edge_angle_hint=None, oversample=4,
                     max_frequency=NYQUIST) -> MtfCurve:
    """Slanted-edge MTF of a near-vertical edge.

    Args:
        image: ImagePlane or array; color data is reduced to luminance.
        roi: ``(row0, row1, col0, col1)``; the whole image when ``None``.
        edge_angle_hint: expected angle from vertical in degrees; when
            given, a fitted angle more than 5 deg away is rejected.
        oversample: ESF bins per pixel.
        max_frequency: highest reported frequency in cycles/pixel.

    Raises:
        EdgeNotFound: the ROI has no usable edge.
    """
    data = _luminance(as_array(image))
    if roi is not None:
        r0, r1, c0, c1 = roi
        data = data[r0:r1, c0:c1]
    h, w = data.shape
    if h < 8 or w < 8:
        raise EdgeNotFound("ROI too small for an edge fit")
    q = max(2, w // 5)
    left, right = data[:, :q].mean(), data[:, -q:].mean()
    contrast = abs(right - left)
    noise = 1.4826 * np.median(np.abs(np.diff(data, axis=1) - np.median(np.diff(data, axis=1))))
    if contrast < max(1e-3, 8.0 * noise / math.sqrt(q)):
        raise EdgeNotFound(f"no edge: contrast {contrast:.3g} against noise {noise:.3g}")

    rows = np.arange(h)
    cen, mass = _row_centroids(data)
    ok = np.isfinite(cen) & (np.abs(mass) > 0.25 * contrast)
    if ok.sum() < h // 2:
        raise EdgeNotFound("edge not traceable across the ROI rows")
    slope, icpt = np.polyfit(rows[ok], cen[ok], 1)
    resid = cen[ok] - (slope * rows[ok] + icpt)
    if np.sqrt(np.mean(resid ** 2)) > 2.0:
        raise EdgeNotFound("row centroids do not follow a straight edge")
    angle = math.degrees(math.atan(slope))
    if edge_angle_hint is not None and abs(abs(angle) - abs(edge_angle_hint)) > 5.0:
        raise EdgeNotFound(f"fitted edge angle {angle:.2f} deg far from hint {edge_angle_hint}")
    if abs(angle) < 0.5:
        raise EdgeNotFound("edge too close to vertical for oversampling")

    # project onto the edge normal (horizontal distance), bin, average
    yy, xx = np.mgrid[0:h, 0:w]
    dist = xx - (slope * yy + icpt)
    half = min(w // 2, 32)
    nb = 2 * half * oversample
    idx = np.floor((dist + half) * oversample).astype(int)
    keep = (idx >= 0) & (idx < nb)
    cnt = np.bincount(idx[keep], minlength=nb)
    tot = np.bincount(idx[keep], weights=data[keep], minlength=nb)
    filled = cnt > 0
    if filled.sum() < nb * 0.8:
        raise EdgeNotFound("edge angle too small to fill the oversampled ESF")
    centers = np.arange(nb)
    esf = np.interp(centers, centers[filled], tot[filled] / cnt[filled])
    if right < left:
        esf = esf[::-1]

    lsf = np.zeros(nb)
    lsf[1:-1] = 0.5 * (esf[2:] - esf[:-2])
    peak = np.sum(lsf * centers) / lsf.sum()
    win = 0.54 + 0.46 * np.cos(np.pi * (centers - peak) / half / oversample)
    win[np.abs(centers - peak) > half * oversample] = 0.08
    lsf *= win
    spec = np.abs(np.fft.rfft(lsf))
    spec /= spec[0]
    freq = np.fft.rfftfreq(nb, d=1.0 / oversample)
    # central-difference derivative response
    x = np.pi * freq / oversample * 2.0
    corr = np.ones_like(freq)
    nz = x > 0
    corr[nz] = np.sin(x[nz]) / x[nz]
    use = (freq <= max_frequency + 1e-12) & (corr > 0.1)
    return MtfCurve(freq[use], spec[use] / corr[use], {"edge_angle_deg": angle, "oversample": oversample})


# ------------------------------------------------------------ reports

def report_pairs(pairs_dir, out_csv, curves_dir=None, roi=None):
    """Score every ``{pair}/gt.png`` / ``{pair}/degraded.png`` under ``pairs_dir``.

    Writes a CSV with one row per pair; MTF50 is the slanted-edge value of
    the degraded image when an edge is found, else empty.
    """
    from .image import read_png

    root = Path(pairs_dir)
    rows = []
    for gt_path in sorted(root.rglob("gt.png")):
        pair = gt_path.parent
        deg_path = pair / "degraded.png"
        if not deg_path.is_file():
            continue
        gt, deg = read_png(gt_path), read_png(deg_path)
        mtf_val = ""
        try:
            curve = mtf_slanted_edge(deg, roi)
            mtf_val = f"{mtf50(curve):.6f}"
            if curves_dir:
                Path(curves_dir).mkdir(parents=True, exist_ok=True)
                name = str(pair.relative_to(root)).replace("/", "_") or pair.name
                curve.write_csv(Path(curves_dir) / f"{name}.csv")
        except EdgeNotFound:
            pass
        rows.append({"pair_id": str(pair.relative_to(root)), "psnr_db": psnr(gt, deg),
                     "ssim": ssim(gt, deg), "mtf50_cyc_per_px": mtf_val})
    with open(out_csv, "w", newline="") as fh:
        w = csv.DictWriter(fh, ["pair_id", "psnr_db", "ssim", "mtf50_cyc_per_px"])
        w.writeheader()
        w.writerows(rows)
    return rows
