# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled per-pixel kernels.

Mirrors pure.py operation for operation; see that module for the
contracts. Floating point expressions keep the same term grouping so
both backends agree.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, log2

cnp.import_array()

cdef double TAN_PI_8 = 0.41421356237309503


def local_entropy(gray, int window):
    pad = window // 2
    padded_arr = np.ascontiguousarray(np.pad(gray, pad, mode="edge"), dtype=np.uint8)
    cdef const unsigned char[:, ::1] padded = padded_arr
    cdef Py_ssize_t h = gray.shape[0]
    cdef Py_ssize_t w = gray.shape[1]
    out_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    hist_arr = np.zeros(256, dtype=np.intc)
    cdef int[::1] hist = hist_arr
    cdef double n = <double> (window * window)
    cdef Py_ssize_t y, x, i
    cdef int b, c
    cdef double e, p

    for y in range(h):
        for b in range(256):
            hist[b] = 0
        for i in range(window):
            for x in range(window):
                hist[padded[y + i, x]] += 1
        e = 0.0
        for b in range(256):
            c = hist[b]
            if c > 0:
                p = c / n
                e -= p * log2(p)
        out[y, 0] = e
        for x in range(1, w):
            for i in range(window):
                hist[padded[y + i, x - 1]] -= 1
                hist[padded[y + i, x + window - 1]] += 1
            e = 0.0
            for b in range(256):
                c = hist[b]
                if c > 0:
                    p = c / n
                    e -= p * log2(p)
            out[y, x] = e
    return out_arr


def canny_nms(mag_in, gx_in, gy_in):
    mag_arr = np.ascontiguousarray(mag_in, dtype=np.float64)
    gx_arr = np.ascontiguousarray(gx_in, dtype=np.float64)
    gy_arr = np.ascontiguousarray(gy_in, dtype=np.float64)
    cdef const double[:, ::1] mag = mag_arr
    cdef const double[:, ::1] gx = gx_arr
    cdef const double[:, ::1] gy = gy_arr
    cdef Py_ssize_t h = mag.shape[0]
    cdef Py_ssize_t w = mag.shape[1]
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    cdef Py_ssize_t y, x
    cdef double c, cgx, cgy, ax, ay
    cdef bint keep

    if h < 3 or w < 3:
        return out_arr.view(np.bool_)
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            c = mag[y, x]
            if c <= 0.0:
                continue
            cgx = gx[y, x]
            cgy = gy[y, x]
            ax = fabs(cgx)
            ay = fabs(cgy)
            if ay <= TAN_PI_8 * ax:
                keep = c > mag[y, x - 1] and c >= mag[y, x + 1]
            elif ax <= TAN_PI_8 * ay:
                keep = c > mag[y - 1, x] and c >= mag[y + 1, x]
            elif cgx * cgy > 0.0:
                keep = c > mag[y - 1, x - 1] and c >= mag[y + 1, x + 1]
            else:
                keep = c > mag[y + 1, x - 1] and c >= mag[y - 1, x + 1]
            if keep:
                out[y, x] = 1
    return out_arr.view(np.bool_)


def hysteresis(nms, mag, double low, double high):
    weak_arr = np.logical_and(nms, mag >= low).astype(np.uint8)
    strong_arr = np.logical_and(nms, mag >= high).astype(np.uint8)
    cdef const unsigned char[:, ::1] weak = weak_arr
    cdef const unsigned char[:, ::1] strong = strong_arr
    cdef Py_ssize_t h = weak.shape[0]
    cdef Py_ssize_t w = weak.shape[1]
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    stack_arr = np.empty(h * w, dtype=np.int64)
    cdef cnp.int64_t[::1] stack = stack_arr
    cdef Py_ssize_t top, y, x, cy, cx, ny, nx
    cdef cnp.int64_t idx
    cdef int dy, dx

    for y in range(h):
        for x in range(w):
            if strong[y, x] and not out[y, x]:
                out[y, x] = 1
                top = 0
                stack[top] = y * w + x
                top += 1
                while top > 0:
                    top -= 1
                    idx = stack[top]
                    cy = idx // w
                    cx = idx % w
                    for dy in range(-1, 2):
                        for dx in range(-1, 2):
                            if dy == 0 and dx == 0:
                                continue
                            ny = cy + dy
                            nx = cx + dx
                            if 0 <= ny < h and 0 <= nx < w:
                                if weak[ny, nx] and not out[ny, nx]:
                                    out[ny, nx] = 1
                                    stack[top] = ny * w + nx
                                    top += 1
    return out_arr.view(np.bool_)


def largest_component_area(bits):
    arr = np.ascontiguousarray(bits, dtype=np.uint8)
    cdef const unsigned char[:, ::1] grid = arr
    cdef Py_ssize_t h = grid.shape[0]
    cdef Py_ssize_t w = grid.shape[1]
    seen_arr = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] seen = seen_arr
    stack_arr = np.empty(h * w, dtype=np.int64)
    cdef cnp.int64_t[::1] stack = stack_arr
    cdef Py_ssize_t top, y, x, cy, cx
    cdef cnp.int64_t idx, size, best = 0

    for y in range(h):
        for x in range(w):
            if grid[y, x] and not seen[y, x]:
                size = 0
                seen[y, x] = 1
                top = 0
                stack[top] = y * w + x
                top += 1
                while top > 0:
                    top -= 1
                    idx = stack[top]
                    cy = idx // w
                    cx = idx % w
                    size += 1
                    if cy > 0 and grid[cy - 1, cx] and not seen[cy - 1, cx]:
                        seen[cy - 1, cx] = 1
                        stack[top] = (cy - 1) * w + cx
                        top += 1
                    if cy + 1 < h and grid[cy + 1, cx] and not seen[cy + 1, cx]:
                        seen[cy + 1, cx] = 1
                        stack[top] = (cy + 1) * w + cx
                        top += 1
                    if cx > 0 and grid[cy, cx - 1] and not seen[cy, cx - 1]:
                        seen[cy, cx - 1] = 1
                        stack[top] = cy * w + cx - 1
                        top += 1
                    if cx + 1 < w and grid[cy, cx + 1] and not seen[cy, cx + 1]:
                        seen[cy, cx + 1] = 1
                        stack[top] = cy * w + cx + 1
                        top += 1
                if size > best:
                    best = size
    return int(best)
