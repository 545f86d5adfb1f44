"""Exact box-overlap and linear-interpolation resampling helpers."""

import numpy as np


def overlap_matrix(out_edges, in_edges):
    """Overlap length between every output cell and every input cell.

    Both arguments are monotone edge arrays (length cells + 1). Returns an
    array shaped ``(n_out, n_in)``.
    """
    out_edges = np.asarray(out_edges, dtype=float)
    in_edges = np.asarray(in_edges, dtype=float)
    lo = np.maximum(out_edges[:-1, None], in_edges[None, :-1])
    hi = np.minimum(out_edges[1:, None], in_edges[None, 1:])
    return np.clip(hi - lo, 0.0, None)


def area_weights(n_in, n_out):
    """Row-stochastic matrix averaging ``n_in`` unit cells onto ``n_out`` equal cells."""
    out_edges = np.linspace(0.0, n_in, n_out + 1)
    w = overlap_matrix(out_edges, np.arange(n_in + 1.0))
    return w / w.sum(axis=1, keepdims=True)


def area_resize(img, out_h, out_w):
    """Area-average resize of an (h, w[, c]) array."""
    h, w = img.shape[:2]
    wy = area_weights(h, out_h)
    wx = area_weights(w, out_w)
    out = np.tensordot(wy, img, axes=(1, 0))
    out = np.tensordot(wx, out, axes=(1, 1))
    return np.swapaxes(out, 0, 1)


def linear_cyclic_weights(n_in, n_out):
    """Half-pixel-aligned linear interpolation from ``n_in`` to ``n_out`` samples on a ring.

    Returns (index0, index1, frac) arrays of length ``n_out``.
    """
    x = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    x0 = np.floor(x)
    frac = x - x0
    i0 = x0.astype(np.int64) % n_in
    i1 = (i0 + 1) % n_in
    return i0, i1, frac


def linear_cyclic_resample(rows, n_out):
    """Linear interpolation along axis 1 with wrap-around, any trailing axes."""
    i0, i1, t = linear_cyclic_weights(rows.shape[1], n_out)
    t = t.reshape((1, -1) + (1,) * (rows.ndim - 2))
    return rows[:, i0] * (1.0 - t) + rows[:, i1] * t
