"""Finite-difference gradient suite over every differentiable op and a deep composite graph."""

from __future__ import annotations

import numpy as np

from .autodiff import GradCheckReport, RngStream, Tensor, grad_check, ops
from .losses import FeatureNet, adv_loss_g, content_loss, total_loss, LossConfig
from .nn import CinLayer, NetConfig, cin_forward, defect_generator_forward, discriminator_forward, init_discriminator, init_generator

TOL = 1e-4
H = 1e-6


def _away(rng: RngStream, shape, margin=0.05):
    """Values bounded away from zero, so kinks at 0 stay outside the FD stencil."""
    u = rng.normal(shape)
    return np.sign(u) * (margin + np.abs(u))


def _weighted(tape, t: Tensor, w: np.ndarray) -> Tensor:
    """sum(w * t): a generic scalar head that exercises every output coordinate."""
    return ops.reduce_sum(tape, ops.mul(tape, t, Tensor(w, dtype=t.dtype)))


def _img_shape(rng: RngStream, max_c=3, max_hw=6, min_hw=3):
    n = int(rng.integers(1, 3))
    c = int(rng.integers(1, max_c + 1))
    h = int(rng.integers(min_hw, max_hw + 1))
    w = int(rng.integers(min_hw, max_hw + 1))
    return n, c, h, w


def _case_elementwise(rng, kind):
    shape = _img_shape(rng)
    a, b = _away(rng.child("a"), shape), _away(rng.child("b"), shape)
    w = rng.child("w").normal(shape)
    unary = {
        "square": lambda t, x: ops.square(t, x),
        "leaky_relu": lambda t, x: ops.leaky_relu(t, x, 0.2),
        "sigmoid": lambda t, x: ops.sigmoid(t, x),
        "tanh": lambda t, x: ops.tanh(t, x),
        "scale": lambda t, x: ops.scale(t, x, -1.7),
    }
    binary = {"add": ops.add, "sub": ops.sub, "mul": ops.mul}
    if kind in unary:
        return lambda t, x: _weighted(t, unary[kind](t, x), w), [a]
    return lambda t, x, y: _weighted(t, binary[kind](t, x, y), w), [a, b]


def _case_reduction(rng, kind):
    shape = _img_shape(rng)
    a = _away(rng.child("a"), shape)
    b = a + _away(rng.child("b"), shape)
    if kind == "reduce_sum":
        return lambda t, x: ops.reduce_sum(t, ops.square(t, x)), [a]
    if kind == "reduce_mean":
        return lambda t, x: ops.reduce_mean(t, ops.square(t, x)), [a]
    if kind == "mse":
        return lambda t, x, y: ops.mse(t, x, y), [a, b]
    if kind == "l1":
        return lambda t, x, y: ops.l1(t, x, y), [a, b]
    targets = rng.child("t").uniform(0.0, 1.0, shape)
    return lambda t, x, y: ops.bce_with_logits(t, x, y), [a, targets]


def _case_conv(rng):
    n, c, h, w = _img_shape(rng, max_hw=7, min_hw=3)
    cout = int(rng.integers(1, 4))
    k = (1, 3)[int(rng.integers(0, 2))]
    stride = int(rng.integers(1, 3))
    padding = int(rng.integers(0, 2)) if k == 3 else 0
    x = rng.child("x").normal((n, c, h, w))
    kern = rng.child("k").normal((cout, c, k, k))
    bias = rng.child("b").normal((cout,))
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    wts = rng.child("w").normal((n, cout, ho, wo))

    def f(t, xx, kk, bb):
        return _weighted(t, ops.conv2d(t, xx, kk, bb, stride=stride, padding=padding), wts)

    return f, [x, kern, bias]


def _case_upsample(rng):
    shape = _img_shape(rng, max_hw=4, min_hw=1)
    factor = int(rng.integers(1, 4))
    x = rng.child("x").normal(shape)
    wts = rng.child("w").normal(shape[:2] + (shape[2] * factor, shape[3] * factor))
    return lambda t, xx: _weighted(t, ops.upsample_nearest(t, xx, factor), wts), [x]


def _case_concat(rng):
    n, _, h, w = _img_shape(rng)
    c1, c2 = int(rng.integers(1, 3)), int(rng.integers(1, 3))
    a = rng.child("a").normal((n, c1, h, w))
    b = rng.child("b").normal((n, c2, h, w))
    wts = rng.child("w").normal((n, c1 + c2, h, w))
    return lambda t, x, y: _weighted(t, ops.concat_channels(t, (x, y)), wts), [a, b]


def _case_instance_stats(rng):
    shape = _img_shape(rng, min_hw=2)
    x = rng.child("x").normal(shape)
    wm = rng.child("wm").normal(shape[:2])
    ws = rng.child("ws").normal(shape[:2])

    def f(t, xx):
        m, s = ops.instance_stats(t, xx)
        return ops.add(t, _weighted(t, m, wm), _weighted(t, s, ws))

    return f, [x]


def _case_instance_normalize(rng):
    shape = _img_shape(rng, min_hw=2)
    x = rng.child("x").normal(shape)
    m = rng.child("m").normal(shape[:2])
    s = 0.5 + rng.child("s").uniform(0.0, 1.0, shape[:2])
    wts = rng.child("w").normal(shape)
    return lambda t, xx, mm, ss: _weighted(t, ops.instance_normalize(t, xx, mm, ss), wts), [x, m, s]


def _case_cin(rng):
    n, c, h, w = _img_shape(rng, min_hw=2)
    rows = int(rng.integers(1, 4))
    row = int(rng.integers(0, rows))
    x = rng.child("x").normal((n, c, h, w))
    gam = rng.child("g").normal((rows, c))
    bet = rng.child("b").normal((rows, c))
    wts = rng.child("w").normal((n, c, h, w))

    def f(t, xx, gg, bb):
        return _weighted(t, cin_forward(xx, CinLayer(gg, bb), row, t), wts)

    return f, [x, gam, bet]


FAMILIES = (
    ("add", lambda r: _case_elementwise(r, "add")),
    ("sub", lambda r: _case_elementwise(r, "sub")),
    ("mul", lambda r: _case_elementwise(r, "mul")),
    ("scale", lambda r: _case_elementwise(r, "scale")),
    ("square", lambda r: _case_elementwise(r, "square")),
    ("leaky_relu", lambda r: _case_elementwise(r, "leaky_relu")),
    ("sigmoid", lambda r: _case_elementwise(r, "sigmoid")),
    ("tanh", lambda r: _case_elementwise(r, "tanh")),
    ("reduce_sum", lambda r: _case_reduction(r, "reduce_sum")),
    ("reduce_mean", lambda r: _case_reduction(r, "reduce_mean")),
    ("mse", lambda r: _case_reduction(r, "mse")),
    ("l1", lambda r: _case_reduction(r, "l1")),
    ("bce_with_logits", lambda r: _case_reduction(r, "bce")),
    ("conv2d", _case_conv),
    ("upsample_nearest", _case_upsample),
    ("concat_channels", _case_concat),
    ("instance_stats", _case_instance_stats),
    ("instance_normalize", _case_instance_normalize),
    ("cin_forward", _case_cin),
)


def composite_case(seed: int = 0):
    """Defect generator -> patch discriminator -> adversarial + feature content loss.

    Inputs checked: the ground-truth image, the first encoder kernel and the
    CIN gamma bank of the bottleneck layer.
    """
    rng = RngStream(seed, ("gradsuite", "composite"))
    net = NetConfig(base_channels=2, depth=2, num_tasks=2, patch_disc_depth=3)
    G = init_generator(net, rng.child("G"), "defect_generator").astype(np.float64)
    D = init_discriminator(net, rng.child("D"), conditioned=False).astype(np.float64)
    featnet = FeatureNet(seed)
    cfg = LossConfig(lam=3.0, content_space="feature_l1")
    gt = rng.child("gt").uniform(-1.0, 1.0, (1, 1, 8, 8))
    noise = Tensor(rng.child("noise").normal((1, 1, 8, 8)))
    checked = ("enc0.conv.weight", "enc2.norm.gamma")
    gamma = G["enc2.norm.gamma"].data + rng.child("gamma").normal(G["enc2.norm.gamma"].shape, 0.3)

    def f(tape, x, w0, g2):
        store = G.astype(np.float64)
        store._params[checked[0]] = w0
        store._params[checked[1]] = g2
        with D.frozen():
            fake = defect_generator_forward(x, store, 1, noise, tape)
            adv = adv_loss_g(discriminator_forward(fake, None, D, tape), "least_squares", tape)
            content = content_loss(fake, Tensor(gt), "feature_l1", featnet, tape)
            return total_loss(adv, content, cfg, tape)

    return f, [gt, G[checked[0]].data.copy(), gamma]


def run_suite(n_random: int = 114, seed: int = 0, tol: float = TOL, h: float = H, progress=None) -> list[GradCheckReport]:
    """Random instances cycled over every op family, plus the composite graph."""
    rng = RngStream(seed, ("gradsuite",))
    reports = []
    for i in range(n_random):
        name, build = FAMILIES[i % len(FAMILIES)]
        f, inputs = build(rng.child(name, i))
        report = grad_check(f, inputs, h=h, tol=tol, name=f"{name}#{i // len(FAMILIES)}")
        reports.append(report)
        if progress:
            progress(report)
    f, inputs = composite_case(seed)
    report = grad_check(f, inputs, h=h, tol=tol, name="composite:defect_G+D+loss")
    reports.append(report)
    if progress:
        progress(report)
    return reports
