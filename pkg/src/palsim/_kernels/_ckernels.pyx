# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: bilinear remapping and stripe convolution."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, fmod, isfinite

cnp.import_array()


def remap_bilinear(src, map_x, map_y, bint wrap_x=False):
    cdef double[:, :, ::1] s = np.ascontiguousarray(src, dtype=np.float64)
    cdef double[:, ::1] mx = np.ascontiguousarray(map_x, dtype=np.float64)
    cdef double[:, ::1] my = np.ascontiguousarray(map_y, dtype=np.float64)
    cdef Py_ssize_t h = s.shape[0], w = s.shape[1], c = s.shape[2]
    cdef Py_ssize_t H = mx.shape[0], W = mx.shape[1]
    out_arr = np.zeros((H, W, c), dtype=np.float64)
    valid_arr = np.zeros((H, W), dtype=np.uint8)
    cdef double[:, :, ::1] out = out_arr
    cdef unsigned char[:, ::1] valid = valid_arr
    cdef Py_ssize_t i, j, k, x0, x1, y0, y1
    cdef double x, y, fx, fy, top, bot
    with nogil:
        for i in range(H):
            for j in range(W):
                x = mx[i, j]
                y = my[i, j]
                if not (isfinite(x) and isfinite(y)):
                    continue
                if y < 0 or y > h - 1:
                    continue
                if wrap_x:
                    x = fmod(x, <double>w)
                    if x < 0:
                        x = x + w
                    if x >= w:
                        x = x - w
                elif x < 0 or x > w - 1:
                    continue
                x0 = <Py_ssize_t>floor(x)
                y0 = <Py_ssize_t>floor(y)
                fx = x - x0
                fy = y - y0
                if wrap_x:
                    x0 = x0 % w
                    x1 = (x0 + 1) % w
                else:
                    x1 = x0 + 1 if x0 + 1 < w else w - 1
                y1 = y0 + 1 if y0 + 1 < h else h - 1
                valid[i, j] = 1
                for k in range(c):
                    top = s[y0, x0, k] * (1.0 - fx) + s[y0, x1, k] * fx
                    bot = s[y1, x0, k] * (1.0 - fx) + s[y1, x1, k] * fx
                    out[i, j, k] = top * (1.0 - fy) + bot * fy
    return out_arr, valid_arr


def convolve_rows(src, kernel, Py_ssize_t row_start, Py_ssize_t row_stop):
    cdef double[:, ::1] s = np.ascontiguousarray(src, dtype=np.float64)
    cdef double[:, ::1] k = np.ascontiguousarray(kernel, dtype=np.float64)
    cdef Py_ssize_t h = s.shape[0], w = s.shape[1]
    cdef Py_ssize_t kh = k.shape[0], kw = k.shape[1]
    cdef Py_ssize_t ch = kh // 2, cw = kw // 2
    cdef Py_ssize_t n = row_stop - row_start
    out_arr = np.zeros((n, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    rows_arr = np.clip(np.arange(row_start + ch - (kh - 1), row_stop + ch), 0, h - 1).astype(np.intp)
    cols_arr = (np.arange(cw - (kw - 1), w + cw) % w).astype(np.intp)
    cdef Py_ssize_t[::1] rows = rows_arr
    cdef Py_ssize_t[::1] cols = cols_arr
    cdef Py_ssize_t y, x, i, j, r
    cdef double acc, kv
    with nogil:
        for y in range(n):
            for i in range(kh):
                r = rows[y + kh - 1 - i]
                for j in range(kw):
                    kv = k[i, j]
                    if kv == 0.0:
                        continue
                    for x in range(w):
                        out[y, x] += kv * s[r, cols[x + kw - 1 - j]]
    return out_arr
