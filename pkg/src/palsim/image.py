"""Tagged float image buffers and PNG I/O."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidArgument

COLOR_STATES = ("srgb", "linear_rgb", "mosaiced_raw")
GEOMETRIES = ("perspective_unfolded", "annular")


@dataclass(frozen=True, eq=False)
class ImagePlane:
    """Float image in [0, 1] shaped (h, w, c) with color-state and geometry tags."""

    data: np.ndarray
    color_state: str = "srgb"
    geometry: str = "perspective_unfolded"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.color_state not in COLOR_STATES:
            raise InvalidArgument(f"unknown color state {self.color_state!r}")
        if self.geometry not in GEOMETRIES:
            raise InvalidArgument(f"unknown geometry {self.geometry!r}")
        d = np.asarray(self.data, dtype=float)
        if d.ndim == 2:
            d = d[:, :, None]
        if d.ndim != 3 or d.shape[2] not in (1, 3):
            raise InvalidArgument(f"image must be (h, w, 1|3), got {np.shape(self.data)}")
        object.__setattr__(self, "data", d)

    @property
    def shape(self):
        return self.data.shape

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    def with_data(self, data, **changes):
        return replace(self, data=np.clip(data, 0.0, 1.0), **changes)

    def require(self, color_state):
        if self.color_state != color_state:
            raise InvalidArgument(f"expected a {color_state} image, got {self.color_state}")


def as_array(img):
    return img.data if isinstance(img, ImagePlane) else np.asarray(img, dtype=float)


def to_uint8(data):
    return np.round(np.clip(data, 0.0, 1.0) * 255.0).astype(np.uint8)


def read_png(path, color_state="srgb", geometry="perspective_unfolded") -> ImagePlane:
    """Load an 8- or 16-bit image as a float ImagePlane; grayscale stays single-channel."""
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I"):
            arr = np.asarray(im, dtype=float) / 65535.0
        elif im.mode in ("L", "LA"):
            arr = np.asarray(im.convert("L"), dtype=float) / 255.0
        else:
            arr = np.asarray(im.convert("RGB"), dtype=float) / 255.0
    if arr.ndim == 3 and arr.shape[2] == 3 and _is_16bit_png(path):
        import cv2  # Pillow decodes 16-bit RGB PNGs to 8 bits

        raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
        arr = raw[:, :, ::-1].astype(float) / 65535.0
    return ImagePlane(arr, color_state, geometry, {"source": str(path)})


def _is_16bit_png(path):
    with open(path, "rb") as fh:
        head = fh.read(25)
    return head[:8] == b"\x89PNG\r\n\x1a\n" and head[24] == 16


def write_png(img, path, bits=8):
    """Write an ImagePlane or array; ``bits=16`` uses OpenCV for 3-channel output."""
    data = as_array(img)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[:, :, 0]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if bits == 8:
        Image.fromarray(to_uint8(data)).save(path, format="PNG", optimize=False)
    elif bits == 16:
        import cv2

        u16 = np.round(np.clip(data, 0.0, 1.0) * 65535.0).astype(np.uint16)
        if u16.ndim == 3:
            u16 = u16[:, :, ::-1]
        if not cv2.imwrite(str(path), u16):
            raise OSError(f"could not write {path}")
    else:
        raise InvalidArgument("bits must be 8 or 16")
