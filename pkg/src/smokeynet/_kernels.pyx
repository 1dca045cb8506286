# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled raster kernels.

Pixel ``(r, c)`` is sampled at its center ``(c + 0.5, r + 0.5)``.  A pixel is
filled when its center lies in the even-odd interior of the polygon or on
one of its edges.  The numpy twins live in :mod:`smokeynet._fallback` and must
produce identical masks.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport ceil, fabsf, floor
from libc.stdlib cimport malloc, free, qsort

cnp.import_array()


cdef int _cmp_double(const void* a, const void* b) noexcept nogil:
    cdef double x = (<double*>a)[0]
    cdef double y = (<double*>b)[0]
    if x < y:
        return -1
    if x > y:
        return 1
    return 0


cdef inline void _fill_span(unsigned char[:, ::1] mask, Py_ssize_t r,
                            double a, double b, Py_ssize_t width) noexcept nogil:
    cdef Py_ssize_t c0 = <Py_ssize_t>ceil(a - 0.5)
    cdef Py_ssize_t c1 = <Py_ssize_t>floor(b - 0.5)
    cdef Py_ssize_t c
    if c0 < 0:
        c0 = 0
    if c1 > width - 1:
        c1 = width - 1
    for c in range(c0, c1 + 1):
        mask[r, c] = 1


def fill_polygon(unsigned char[:, ::1] mask, double[::1] xs, double[::1] ys):
    """Fill one closed polygon into ``mask`` in place (union with existing pixels)."""
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t height = mask.shape[0]
    cdef Py_ssize_t width = mask.shape[1]
    cdef Py_ssize_t i, j, r, r0, r1, k, cb
    cdef double x0, y0, x1, y1, y, x, lo, hi, miny, maxy
    cdef double* cross
    if n < 3 or xs.shape[0] != ys.shape[0]:
        return
    miny = ys[0]
    maxy = ys[0]
    for i in range(1, n):
        if ys[i] < miny:
            miny = ys[i]
        if ys[i] > maxy:
            maxy = ys[i]
    r0 = <Py_ssize_t>ceil(miny - 0.5)
    r1 = <Py_ssize_t>floor(maxy - 0.5)
    if r0 < 0:
        r0 = 0
    if r1 > height - 1:
        r1 = height - 1
    if r0 > r1:
        return
    cross = <double*>malloc(n * sizeof(double))
    if cross == NULL:
        raise MemoryError()
    try:
        with nogil:
            for r in range(r0, r1 + 1):
                y = r + 0.5
                k = 0
                for i in range(n):
                    j = i + 1 if i + 1 < n else 0
                    x0 = xs[i]
                    y0 = ys[i]
                    x1 = xs[j]
                    y1 = ys[j]
                    if (y0 <= y < y1) or (y1 <= y < y0):
                        cross[k] = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
                        k += 1
                    # boundary: centers lying exactly on the edge
                    if y0 == y1:
                        if y0 == y:
                            lo = x0 if x0 < x1 else x1
                            hi = x1 if x0 < x1 else x0
                            _fill_span(mask, r, lo, hi, width)
                    elif (y0 <= y <= y1) or (y1 <= y <= y0):
                        if y == y1:
                            x = x1
                        elif y == y0:
                            x = x0
                        else:
                            x = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
                        if x - 0.5 == floor(x - 0.5):
                            cb = <Py_ssize_t>(x - 0.5)
                            if 0 <= cb < width:
                                mask[r, cb] = 1
                if k > 1:
                    qsort(cross, k, sizeof(double), _cmp_double)
                    i = 0
                    while i + 1 < k:
                        _fill_span(mask, r, cross[i], cross[i + 1], width)
                        i += 2
    finally:
        free(cross)


def tile_counts(unsigned char[:, ::1] mask, Py_ssize_t tile, Py_ssize_t stride,
                Py_ssize_t rows, Py_ssize_t cols):
    """Nonzero pixel count inside every tile window, row-major."""
    cdef Py_ssize_t height = mask.shape[0]
    cdef Py_ssize_t width = mask.shape[1]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.zeros(rows * cols, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = out
    cdef Py_ssize_t tr, tc, y, x, y0, x0
    cdef cnp.int64_t total
    if (rows - 1) * stride + tile > height or (cols - 1) * stride + tile > width:
        raise ValueError("tile grid exceeds mask bounds")
    with nogil:
        for tr in range(rows):
            y0 = tr * stride
            for tc in range(cols):
                x0 = tc * stride
                total = 0
                for y in range(y0, y0 + tile):
                    for x in range(x0, x0 + tile):
                        if mask[y, x] != 0:
                            total += 1
                counts[tr * cols + tc] = total
    return out


def abs_diff_threshold(float[:, ::1] prev, float[:, ::1] cur, float threshold):
    """1.0 where ``|cur - prev| > threshold`` else 0.0."""
    cdef Py_ssize_t height = prev.shape[0]
    cdef Py_ssize_t width = prev.shape[1]
    if cur.shape[0] != height or cur.shape[1] != width:
        raise ValueError("frame shapes differ")
    cdef cnp.ndarray[cnp.float32_t, ndim=2] out = np.empty((height, width), dtype=np.float32)
    cdef float[:, ::1] res = out
    cdef Py_ssize_t i, n = height * width
    cdef const float* a
    cdef const float* b
    cdef float* r
    if n == 0:
        return out
    a = &prev[0, 0]
    b = &cur[0, 0]
    r = &res[0, 0]
    with nogil:
        # branch-free so the loop vectorizes
        for i in range(n):
            r[i] = <float>(fabsf(b[i] - a[i]) > threshold)
    return out
