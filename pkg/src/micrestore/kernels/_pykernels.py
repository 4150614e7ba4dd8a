"""Pure-numpy versions of the compiled kernels, used when the extension is absent."""

import numpy as np


def im2col(x, kh, kw, stride):
    N, C, H, W = x.shape
    Ho = (H - kh) // stride + 1
    Wo = (W - kw) // stride + 1
    cols = np.empty((N, C, kh, kw, Ho, Wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i:i + stride * (Ho - 1) + 1:stride, j:j + stride * (Wo - 1) + 1:stride]
    return cols.reshape(N, C * kh * kw, Ho * Wo)


def col2im(cols, C, H, W, kh, kw, stride):
    N = cols.shape[0]
    Ho = (H - kh) // stride + 1
    Wo = (W - kw) // stride + 1
    cols = cols.reshape(N, C, kh, kw, Ho, Wo)
    out = np.zeros((N, C, H, W), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * (Ho - 1) + 1:stride, j:j + stride * (Wo - 1) + 1:stride] += cols[:, :, i, j]
    return out


def upsample_nearest(x, factor):
    return np.repeat(np.repeat(x, factor, axis=2), factor, axis=3)


def block_sum(g, factor):
    N, C, H, W = g.shape
    return g.reshape(N, C, H // factor, factor, W // factor, factor).sum(axis=(3, 5))
