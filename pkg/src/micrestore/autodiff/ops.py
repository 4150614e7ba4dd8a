"""Differentiable operations.

Every operation takes the tape as its first argument. Passing ``None`` runs
the forward computation only.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import ArgumentError, DimensionError, NonFiniteError
from .tensor import Tape, Tensor

IN_EPS = 1e-5


def _emit(tape: Tape | None, data, inputs, backward) -> Tensor:
    tracked = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor._result(data, tracked)
    if tracked:
        tape.record((out,), inputs, backward)
    return out


def _scalar(tape, value, inputs, backward, what):
    if not np.isfinite(value).all():
        raise NonFiniteError(f"{what} evaluated to a non-finite value")
    return _emit(tape, value, inputs, backward)


def _same_shape(a: Tensor, b: Tensor, what: str):
    if a.shape != b.shape:
        raise DimensionError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def _image(x: Tensor, what: str):
    if x.data.ndim != 4:
        raise DimensionError(f"{what}: expected an N,C,H,W tensor, got shape {x.shape}")


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(tape, a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _emit(tape, a.data + b.data, (a, b), lambda g: (g, g))


def sub(tape, a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _emit(tape, a.data - b.data, (a, b), lambda g: (g, -g))


def mul(tape, a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _emit(tape, ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(tape, a: Tensor, alpha: float) -> Tensor:
    alpha = float(alpha)
    return _emit(tape, a.data * a.data.dtype.type(alpha), (a,), lambda g: (g * alpha,))


def square(tape, a: Tensor) -> Tensor:
    ad = a.data
    return _emit(tape, ad * ad, (a,), lambda g: (2 * g * ad,))


def leaky_relu(tape, x: Tensor, slope: float = 0.2) -> Tensor:
    if not 0.0 <= slope < 1.0:
        raise ArgumentError(f"leaky_relu slope must lie in [0, 1), got {slope}")
    xd = x.data
    pos = xd > 0
    factor = np.where(pos, 1.0, slope).astype(xd.dtype)
    return _emit(tape, xd * factor, (x,), lambda g: (g * factor,))


def sigmoid(tape, x: Tensor) -> Tensor:
    xd = x.data
    y = np.empty_like(xd)
    pos = xd >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    e = np.exp(xd[~pos])
    y[~pos] = e / (1.0 + e)
    return _emit(tape, y, (x,), lambda g: (g * y * (1 - y),))


def tanh(tape, x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _emit(tape, y, (x,), lambda g: (g * (1 - y * y),))


# ---------------------------------------------------------------------------
# reductions and losses

def reduce_sum(tape, x: Tensor) -> Tensor:
    shape = x.shape
    out = np.asarray(x.data.sum(), dtype=x.dtype)
    return _scalar(tape, out, (x,), lambda g: (np.full(shape, g, dtype=x.dtype),), "sum")


def reduce_mean(tape, x: Tensor) -> Tensor:
    shape, n = x.shape, x.size
    out = np.asarray(x.data.mean(), dtype=x.dtype)
    return _scalar(tape, out, (x,), lambda g: (np.full(shape, g / n, dtype=x.dtype),), "mean")


def mse(tape, a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mse")
    d = a.data - b.data
    n = d.size
    out = np.asarray(np.mean(d * d), dtype=d.dtype)

    def bw(g):
        ga = (2.0 * g / n) * d
        return ga, -ga

    return _scalar(tape, out, (a, b), bw, "mse")


def l1(tape, a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "l1")
    d = a.data - b.data
    n = d.size
    out = np.asarray(np.mean(np.abs(d)), dtype=d.dtype)

    def bw(g):
        ga = (g / n) * np.sign(d)
        return ga, -ga

    return _scalar(tape, out, (a, b), bw, "l1")


def bce_with_logits(tape, logits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy, evaluated as max(x,0) - x*t + log1p(exp(-|x|))."""
    if not isinstance(targets, Tensor):
        targets = Tensor(np.broadcast_to(np.asarray(targets, dtype=logits.dtype), logits.shape))
    _same_shape(logits, targets, "bce_with_logits")
    t = targets.data
    if t.min() < 0 or t.max() > 1:
        raise ArgumentError("bce_with_logits targets must lie in [0, 1]")
    x = logits.data
    n = x.size
    out = np.asarray(np.mean(np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))), dtype=x.dtype)

    def bw(g):
        s = np.empty_like(x)
        pos = x >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        e = np.exp(x[~pos])
        s[~pos] = e / (1.0 + e)
        return (g / n) * (s - t), (g / n) * -x

    return _scalar(tape, out, (logits, targets), bw, "bce_with_logits")


# ---------------------------------------------------------------------------
# image operations

def conv2d(tape, x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation of an N,C,H,W batch with a Cout,Cin,kH,kW kernel."""
    _image(x, "conv2d")
    if kernel.data.ndim != 4:
        raise DimensionError(f"conv2d: kernel must be Cout,Cin,kH,kW, got {kernel.shape}")
    if stride < 1:
        raise ArgumentError(f"conv2d: stride must be positive, got {stride}")
    if padding < 0:
        raise ArgumentError(f"conv2d: padding must be non-negative, got {padding}")
    N, C, H, W = x.shape
    Cout, Cin, kh, kw = kernel.shape
    if Cin != C:
        raise DimensionError(f"conv2d: input has {C} channels, kernel expects {Cin}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError(f"conv2d: kernel extents must be odd, got {kh}x{kw}")
    Hp, Wp = H + 2 * padding, W + 2 * padding
    if Hp < kh or Wp < kw:
        raise DimensionError(f"conv2d: padded input {Hp}x{Wp} smaller than kernel {kh}x{kw}")
    if bias is not None and bias.shape != (Cout,):
        raise DimensionError(f"conv2d: bias shape {bias.shape} does not match {Cout} output channels")
    Ho = (Hp - kh) // stride + 1
    Wo = (Wp - kw) // stride + 1
    xp = x.data
    if padding:
        xp = np.pad(xp, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = kernels.im2col(xp, kh, kw, stride)  # N, K, P
    wmat = kernel.data.reshape(Cout, -1)
    out = np.matmul(wmat, cols)
    if bias is not None:
        out += bias.data[None, :, None]
    out = out.reshape(N, Cout, Ho, Wo)
    inputs = (x, kernel) if bias is None else (x, kernel, bias)

    def bw(g):
        g2 = g.reshape(N, Cout, Ho * Wo)
        gx = gw = gb = None
        if kernel.requires_grad:
            gw = np.einsum("nop,nkp->ok", g2, cols, optimize=True).reshape(kernel.shape)
        if x.requires_grad:
            gcols = np.matmul(wmat.T, g2)
            gxp = kernels.col2im(gcols, C, Hp, Wp, kh, kw, stride)
            gx = gxp[:, :, padding:padding + H, padding:padding + W] if padding else gxp
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=(0, 2))
        return (gx, gw) if bias is None else (gx, gw, gb)

    return _emit(tape, out, inputs, bw)


def upsample_nearest(tape, x: Tensor, factor: int) -> Tensor:
    _image(x, "upsample_nearest")
    if factor < 1:
        raise ArgumentError(f"upsample factor must be >= 1, got {factor}")
    if factor == 1:
        return _emit(tape, x.data.copy(), (x,), lambda g: (g,))
    out = kernels.upsample_nearest(x.data, factor)
    return _emit(tape, out, (x,), lambda g: (kernels.block_sum(g, factor),))


def concat_channels(tape, tensors) -> Tensor:
    tensors = tuple(tensors)
    for t in tensors:
        _image(t, "concat_channels")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.shape[0] != ref[0] or t.shape[2:] != ref[2:]:
            raise DimensionError(f"concat_channels: cannot join {ref} with {t.shape}")
    sizes = [t.shape[1] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=1)
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=1))

    return _emit(tape, out, tensors, bw)


def instance_stats(tape, x: Tensor, eps: float = IN_EPS):
    """Per-(sample, channel) population mean and sqrt(var + eps) over H*W."""
    _image(x, "instance_stats")
    N, C, H, W = x.shape
    if H * W < 1:
        raise DimensionError("instance_stats needs at least one spatial position")
    xd = x.data
    m = xd.mean(axis=(2, 3))
    centred = xd - m[:, :, None, None]
    var = np.mean(centred * centred, axis=(2, 3))
    s = np.sqrt(var + xd.dtype.type(eps))
    mean_t = Tensor._result(m, False)
    std_t = Tensor._result(s, False)
    tracked = tape is not None and x.requires_grad
    if tracked:
        mean_t.requires_grad = std_t.requires_grad = True
        n = H * W

        def bw(gm, gs):
            gx = gm[:, :, None, None] / n + centred * (gs / (n * s))[:, :, None, None]
            return (gx,)

        tape.record((mean_t, std_t), (x,), bw)
    return mean_t, std_t


def instance_normalize(tape, x: Tensor, mean: Tensor, std: Tensor) -> Tensor:
    """(x - mean) / std with N,C statistics broadcast over H,W."""
    _image(x, "instance_normalize")
    if mean.shape != x.shape[:2] or std.shape != x.shape[:2]:
        raise DimensionError("instance_normalize: statistics must have shape N,C")
    inv = 1.0 / std.data
    xhat = (x.data - mean.data[:, :, None, None]) * inv[:, :, None, None]

    def bw(g):
        gx = g * inv[:, :, None, None]
        gm = -gx.sum(axis=(2, 3))
        gs = -(g * xhat).sum(axis=(2, 3)) * inv
        return gx, gm, gs

    return _emit(tape, xhat, (x, mean, std), bw)


def channel_affine(tape, x: Tensor, gamma_bank: Tensor, beta_bank: Tensor, row: int) -> Tensor:
    """gamma_bank[row] * x + beta_bank[row], per channel.

    Only ``row`` of each bank is read; the gradient is zero on every other row.
    """
    _image(x, "channel_affine")
    T, C = gamma_bank.shape
    if beta_bank.shape != (T, C):
        raise DimensionError("channel_affine: gamma and beta banks differ in shape")
    if C != x.shape[1]:
        raise DimensionError(f"channel_affine: bank has {C} channels, input has {x.shape[1]}")
    if not 0 <= row < T:
        raise ArgumentError(f"task row {row} outside bank of {T} rows")
    xd = x.data
    gam = gamma_bank.data[row]
    out = xd * gam[None, :, None, None] + beta_bank.data[row][None, :, None, None]

    def bw(g):
        gx = g * gam[None, :, None, None]
        ggam = np.zeros_like(gamma_bank.data)
        gbet = np.zeros_like(beta_bank.data)
        ggam[row] = (g * xd).sum(axis=(0, 2, 3))
        gbet[row] = g.sum(axis=(0, 2, 3))
        return gx, ggam, gbet

    return _emit(tape, out, (x, gamma_bank, beta_bank), bw)


def instance_norm(tape, x: Tensor, eps: float = IN_EPS) -> Tensor:
    """Plain (non-affine) instance normalization."""
    mean, std = instance_stats(tape, x, eps)
    return instance_normalize(tape, x, mean, std)
