# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled im2col / col2im and nearest-neighbour resampling kernels.

Inputs must be C-contiguous float32 or float64 arrays in NCHW layout.
"""

import numpy as np

ctypedef fused real:
    float
    double


cdef inline object _dtype(real dummy):
    if real is float:
        return np.float32
    return np.float64


def im2col(real[:, :, :, ::1] x, int kh, int kw, int stride):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Ho = (H - kh) // stride + 1
    cdef Py_ssize_t Wo = (W - kw) // stride + 1
    cdef real zero = 0
    out = np.empty((N, C * kh * kw, Ho * Wo), dtype=_dtype(zero))
    cdef real[:, :, ::1] o = out
    cdef Py_ssize_t n, c, i, j, oy, ox, row, iy, base
    with nogil:
        for n in range(N):
            for c in range(C):
                for i in range(kh):
                    for j in range(kw):
                        row = (c * kh + i) * kw + j
                        for oy in range(Ho):
                            iy = oy * stride + i
                            base = oy * Wo
                            if stride == 1:
                                for ox in range(Wo):
                                    o[n, row, base + ox] = x[n, c, iy, ox + j]
                            else:
                                for ox in range(Wo):
                                    o[n, row, base + ox] = x[n, c, iy, ox * stride + j]
    return out


def col2im(real[:, :, ::1] cols, int C, int H, int W, int kh, int kw, int stride):
    cdef Py_ssize_t N = cols.shape[0]
    cdef Py_ssize_t Ho = (H - kh) // stride + 1
    cdef Py_ssize_t Wo = (W - kw) // stride + 1
    cdef real zero = 0
    out = np.zeros((N, C, H, W), dtype=_dtype(zero))
    cdef real[:, :, :, ::1] o = out
    cdef Py_ssize_t n, c, i, j, oy, ox, row, iy, base
    with nogil:
        for n in range(N):
            for c in range(C):
                for i in range(kh):
                    for j in range(kw):
                        row = (c * kh + i) * kw + j
                        for oy in range(Ho):
                            iy = oy * stride + i
                            base = oy * Wo
                            for ox in range(Wo):
                                o[n, c, iy, ox * stride + j] += cols[n, row, base + ox]
    return out


def upsample_nearest(real[:, :, :, ::1] x, int factor):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef real zero = 0
    out = np.empty((N, C, H * factor, W * factor), dtype=_dtype(zero))
    cdef real[:, :, :, ::1] o = out
    cdef Py_ssize_t n, c, oy, iy, ix, dx, base
    cdef real v
    with nogil:
        for n in range(N):
            for c in range(C):
                for oy in range(H * factor):
                    iy = oy // factor
                    for ix in range(W):
                        v = x[n, c, iy, ix]
                        base = ix * factor
                        for dx in range(factor):
                            o[n, c, oy, base + dx] = v
    return out


def block_sum(real[:, :, :, ::1] g, int factor):
    cdef Py_ssize_t N = g.shape[0], C = g.shape[1]
    cdef Py_ssize_t H = g.shape[2] // factor, W = g.shape[3] // factor
    cdef real zero = 0
    out = np.zeros((N, C, H, W), dtype=_dtype(zero))
    cdef real[:, :, :, ::1] o = out
    cdef Py_ssize_t n, c, gy, iy, ix, dx, base
    cdef real acc
    with nogil:
        for n in range(N):
            for c in range(C):
                for gy in range(H * factor):
                    iy = gy // factor
                    for ix in range(W):
                        base = ix * factor
                        acc = 0
                        for dx in range(factor):
                            acc = acc + g[n, c, gy, base + dx]
                        o[n, c, iy, ix] += acc
    return out
