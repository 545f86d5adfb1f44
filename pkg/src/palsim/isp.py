"""Camera ISP bracketing the optical convolution.

``invert_isp`` takes display sRGB back to linear raw (gamma decompression,
inverse CCM, inverse white balance); ``forward_isp`` goes the other way with
RGGB mosaicing, heteroscedastic sensor noise and bilinear demosaicing in
between. Inverse white balance preserves highlights the way unprocessing
pipelines do, so saturated whites stay saturated for any gains.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InvalidArgument, InvalidParams
from .image import ImagePlane

# Channel present at each (row % 2, col % 2) site of an RGGB mosaic.
_PATTERNS = {
    "RGGB": ((0, 1), (1, 2)),
    "BGGR": ((2, 1), (1, 0)),
    "GRBG": ((1, 0), (2, 1)),
    "GBRG": ((1, 2), (0, 1)),
}


@dataclass(frozen=True, eq=False)
class IspParams:
    wb_gains: tuple = (1.0, 1.0)
    ccm: np.ndarray = field(default_factory=lambda: np.eye(3))
    gamma: float = 2.2
    bayer_pattern: str | None = "RGGB"
    noise_shot: float = 0.0
    noise_read: float = 0.0

    def __post_init__(self):
        gains = tuple(float(g) for g in self.wb_gains)
        ccm = np.array(self.ccm, dtype=float)
        if len(gains) != 2 or min(gains) <= 0:
            raise InvalidParams("white-balance gains (red, blue) must be positive")
        if ccm.shape != (3, 3) or not np.allclose(ccm.sum(axis=1), 1.0, atol=1e-6):
            raise InvalidParams("CCM must be 3x3 with rows summing to 1")
        if not self.gamma > 0:
            raise InvalidParams("gamma must be positive")
        if self.noise_shot < 0 or self.noise_read < 0:
            raise InvalidParams("noise parameters must be non-negative")
        pat = self.bayer_pattern
        if pat is not None and str(pat).lower() == "none":
            pat = None
        if pat is not None and pat not in _PATTERNS:
            raise InvalidParams(f"unsupported Bayer pattern {pat!r}")
        ccm.setflags(write=False)
        object.__setattr__(self, "wb_gains", gains)
        object.__setattr__(self, "ccm", ccm)
        object.__setattr__(self, "bayer_pattern", pat)

    @classmethod
    def identity(cls, mosaic=False):
        """Every stage the identity; without ``mosaic`` the CFA stage is bypassed too."""
        return cls((1.0, 1.0), np.eye(3), 1.0, "RGGB" if mosaic else None, 0.0, 0.0)

    @property
    def gains3(self):
        r, b = self.wb_gains
        return np.array([r, 1.0, b])

    def to_dict(self):
        return {"wb_gains": list(self.wb_gains), "ccm": self.ccm.tolist(), "gamma": self.gamma,
                "bayer_pattern": self.bayer_pattern or "none",
                "noise": {"shot": self.noise_shot, "read": self.noise_read}}

    @classmethod
    def from_dict(cls, doc):
        noise = doc.get("noise", {})
        return cls(tuple(doc.get("wb_gains", (1.0, 1.0))), doc.get("ccm", np.eye(3)),
                   float(doc.get("gamma", 2.2)), doc.get("bayer_pattern", "RGGB"),
                   float(noise.get("shot", 0.0)), float(noise.get("read", 0.0)))

    def with_noise(self, shot, read):
        from dataclasses import replace

        return replace(self, noise_shot=float(shot), noise_read=float(read))


# ---------------------------------------------------------------- stages

def gamma_expand(x, gamma):
    return np.power(np.clip(x, 0.0, None), gamma)


def gamma_compress(x, gamma):
    return np.power(np.clip(x, 0.0, None), 1.0 / gamma)


def apply_ccm(x, ccm):
    return np.einsum("...j,ij->...i", x, ccm)


def invert_ccm(x, ccm):
    try:
        inv = np.linalg.inv(ccm)
    except np.linalg.LinAlgError as exc:
        raise InvalidParams("color correction matrix is singular") from exc
    if not np.all(np.isfinite(inv)) or np.linalg.cond(ccm) > 1e12:
        raise InvalidParams("color correction matrix is singular")
    return np.einsum("...j,ij->...i", x, inv)


def safe_invert_gains(x, gains3, inflection=0.9):
    """Divide by white-balance gains, blending toward unit gain near saturation."""
    gray = x.mean(axis=-1, keepdims=True)
    mask = (np.maximum(gray - inflection, 0.0) / (1.0 - inflection)) ** 2
    inv = 1.0 / gains3
    safe = np.maximum(mask + (1.0 - mask) * inv, inv)
    return x * safe


def mosaic(rgb, pattern="RGGB"):
    """Sample one channel per pixel; returns an (h, w) plane."""
    h, w, _ = rgb.shape
    chan = channel_map(h, w, pattern)
    return np.take_along_axis(rgb, chan[:, :, None], axis=2)[:, :, 0]


def channel_map(h, w, pattern="RGGB"):
    cfa = np.array(_PATTERNS[pattern])
    return np.tile(cfa, (h // 2 + 1, w // 2 + 1))[:h, :w]


_K_RB = np.array([[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]]) / 4.0
_K_G = np.array([[0.0, 1.0, 0.0], [1.0, 4.0, 1.0], [0.0, 1.0, 0.0]]) / 4.0


def demosaic(raw, pattern="RGGB"):
    """Bilinear demosaic by normalized convolution; exact on constant images."""
    h, w = raw.shape
    chan = channel_map(h, w, pattern)
    out = np.empty((h, w, 3))
    for c in range(3):
        m = (chan == c).astype(float)
        k = _K_G if c == 1 else _K_RB
        num = ndimage.convolve(raw * m, k, mode="constant")
        den = ndimage.convolve(m, k, mode="constant")
        out[:, :, c] = np.where(m > 0, raw, num / den)
    return out


def add_noise(image, shot, read, seed):
    """x + N(0, shot * x + read) per pixel, clamped to [0, 1].

    Accepts an ImagePlane (returned with the same tags) or a bare array.
    """
    if shot < 0 or read < 0:
        raise InvalidArgument("noise parameters must be non-negative")
    x = image.data if isinstance(image, ImagePlane) else np.asarray(image, dtype=float)
    if shot == 0 and read == 0:
        out = x.copy()
    else:
        rng = np.random.default_rng(seed)
        sd = np.sqrt(np.maximum(shot * x + read, 0.0))
        out = np.clip(x + sd * rng.standard_normal(x.shape), 0.0, 1.0)
    if isinstance(image, ImagePlane):
        return image.with_data(out)
    return out


# ---------------------------------------------------------------- chains

def invert_isp(image: ImagePlane, params: IspParams) -> ImagePlane:
    """sRGB -> linear raw: x**gamma, inverse CCM, highlight-safe inverse white balance."""
    image.require("srgb")
    x = gamma_expand(image.data, params.gamma)
    x = invert_ccm(x, params.ccm)
    x = safe_invert_gains(np.clip(x, 0.0, 1.0), params.gains3)
    return image.with_data(x, color_state="linear_rgb")


def forward_isp(image: ImagePlane, params: IspParams, seed=None) -> ImagePlane:
    """Linear raw -> sRGB: mosaic, noise, demosaic, white balance, CCM, gamma."""
    image.require("linear_rgb")
    x = np.clip(image.data, 0.0, 1.0)
    if params.bayer_pattern:
        raw = mosaic(x, params.bayer_pattern)
        raw = add_noise(raw, params.noise_shot, params.noise_read, seed)
        x = demosaic(raw, params.bayer_pattern)
    else:
        x = add_noise(x, params.noise_shot, params.noise_read, seed)
    x = np.clip(x * params.gains3, 0.0, 1.0)
    x = np.clip(apply_ccm(x, params.ccm), 0.0, 1.0)
    x = gamma_compress(x, params.gamma)
    return image.with_data(x, color_state="srgb", meta=dict(image.meta, noise_seed=seed))
