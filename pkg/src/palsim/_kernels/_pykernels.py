"""Pure NumPy implementations of the hot kernels.

Signatures and results match ``_ckernels`` to round-off; this module is used
when the compiled extension is unavailable or ``PALSIM_PURE_PYTHON`` is set.
"""

import numpy as np


def remap_bilinear(src, map_x, map_y, wrap_x=False):
    """Bilinear sampling of ``src`` (h, w, c) at pixel-center coordinates.

    Returns ``(out, valid)`` where ``out`` is shaped ``map_x.shape + (c,)``
    and ``valid`` is a uint8 mask; invalid samples are zero.
    """
    src = np.ascontiguousarray(src, dtype=np.float64)
    h, w, c = src.shape
    x = np.asarray(map_x, dtype=np.float64)
    y = np.asarray(map_y, dtype=np.float64)
    finite = np.isfinite(x) & np.isfinite(y)
    x = np.where(finite, x, -1.0)
    y = np.where(finite, y, -1.0)
    if wrap_x:
        x = np.mod(x, w)
        valid = finite & (y >= 0) & (y <= h - 1)
    else:
        valid = finite & (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)
    xs = np.where(valid, x, 0.0)
    ys = np.where(valid, y, 0.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]
    if wrap_x:
        x0 = x0 % w
        x1 = (x0 + 1) % w
    else:
        x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = src[y0, x0] * (1.0 - fx) + src[y0, x1] * fx
    bot = src[y1, x0] * (1.0 - fx) + src[y1, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    out[~valid] = 0.0
    return out, valid.astype(np.uint8)


def convolve_rows(src, kernel, row_start, row_stop):
    """Convolve a 2-D plane with ``kernel`` for output rows [row_start, row_stop).

    Rows beyond the image are replicated from the border; columns wrap.
    """
    src = np.ascontiguousarray(src, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    h, w = src.shape
    kh, kw = kernel.shape
    ch, cw = kh // 2, kw // 2
    n = row_stop - row_start
    rows = np.clip(np.arange(row_start + ch - (kh - 1), row_stop + ch), 0, h - 1)
    cols = np.arange(cw - (kw - 1), w + cw) % w
    block = src[rows][:, cols]
    out = np.zeros((n, w))
    for i in range(kh):
        for j in range(kw):
            k = kernel[i, j]
            if k != 0.0:
                out += k * block[kh - 1 - i: kh - 1 - i + n, kw - 1 - j: kw - 1 - j + w]
    return out
