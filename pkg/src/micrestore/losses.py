"""Adversarial and content losses and their weighted sum."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import RngStream, Tape, Tensor, ops
from .errors import ArgumentError, ValidationError

ADV_KINDS = ("nonsaturating_bce", "least_squares")
CONTENT_SPACES = ("pixel_l1", "feature_l1")


@dataclass(frozen=True)
class LossConfig:
    lam: float = 10.0
    adv_kind: str = "least_squares"
    content_space: str = "feature_l1"
    feature_seed: int = 0

    def __post_init__(self):
        problems = []
        if not (self.lam >= 0 and np.isfinite(self.lam)):
            problems.append(f"lambda must be a finite non-negative number, got {self.lam}")
        if self.adv_kind not in ADV_KINDS:
            problems.append(f"adv_kind must be one of {ADV_KINDS}, got {self.adv_kind!r}")
        if self.content_space not in CONTENT_SPACES:
            problems.append(f"content_space must be one of {CONTENT_SPACES}, got {self.content_space!r}")
        if problems:
            raise ValidationError("; ".join(problems))

    def to_dict(self):
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d


class FeatureNet:
    """Fixed random conv stack used as the feature space of the content loss.

    Three 3x3 stride-2 convs with leaky ReLU; features are tapped after each
    layer. Weights are drawn once from ``seed`` and never change.
    """

    widths = (8, 16, 32)

    def __init__(self, seed: int = 0, in_channels: int = 1):
        rng = RngStream(seed, ("feature_net",))
        self.seed = seed
        self._weights = []
        cin = in_channels
        for i, cout in enumerate(self.widths):
            w = rng.child(i).normal((cout, cin, 3, 3), scale=np.sqrt(2.0 / (cin * 9)))
            w.setflags(write=False)
            self._weights.append(w)
            cin = cout
        self._cache = {}

    def _params(self, dtype):
        key = np.dtype(dtype)
        if key not in self._cache:
            self._cache[key] = [Tensor(w, dtype=key) for w in self._weights]
        return self._cache[key]

    def features(self, x: Tensor, tape: Tape | None = None) -> list[Tensor]:
        taps = []
        h = x
        for w in self._params(x.dtype):
            h = ops.leaky_relu(tape, ops.conv2d(tape, h, w, None, stride=2, padding=1), 0.2)
            taps.append(h)
        return taps


def _const(like: Tensor, value: float) -> Tensor:
    return Tensor._result(np.full(like.shape, value, dtype=like.dtype), False)


def _check_kind(kind):
    if kind not in ADV_KINDS:
        raise ArgumentError(f"unknown adversarial loss kind {kind!r}")


def adv_loss_d(real_logits: Tensor, fake_logits: Tensor, kind: str = "least_squares",
               tape: Tape | None = None) -> Tensor:
    _check_kind(kind)
    if kind == "least_squares":
        return ops.add(tape, ops.mse(tape, real_logits, _const(real_logits, 1.0)),
                       ops.mse(tape, fake_logits, _const(fake_logits, 0.0)))
    return ops.add(tape, ops.bce_with_logits(tape, real_logits, _const(real_logits, 1.0)),
                   ops.bce_with_logits(tape, fake_logits, _const(fake_logits, 0.0)))


def adv_loss_g(fake_logits: Tensor, kind: str = "least_squares", tape: Tape | None = None) -> Tensor:
    _check_kind(kind)
    if kind == "least_squares":
        return ops.mse(tape, fake_logits, _const(fake_logits, 1.0))
    return ops.bce_with_logits(tape, fake_logits, _const(fake_logits, 1.0))


def content_loss(output: Tensor, target: Tensor, space: str = "pixel_l1", featnet: FeatureNet | None = None,
                 tape: Tape | None = None) -> Tensor:
    """Mean absolute difference in pixel space or averaged over FeatureNet taps."""
    if space == "pixel_l1":
        return ops.l1(tape, output, target)
    if space != "feature_l1":
        raise ArgumentError(f"unknown content space {space!r}")
    if featnet is None:
        raise ArgumentError("feature_l1 content loss needs a FeatureNet")
    fo = featnet.features(output, tape)
    ft = featnet.features(target, tape)
    total = ops.l1(tape, fo[0], ft[0])
    for a, b in zip(fo[1:], ft[1:]):
        total = ops.add(tape, total, ops.l1(tape, a, b))
    return ops.scale(tape, total, 1.0 / len(fo))


def total_loss(l_adv: Tensor, l_content: Tensor, config: LossConfig, tape: Tape | None = None) -> Tensor:
    """l_adv + lambda * l_content."""
    if not (np.isfinite(l_adv.data).all() and np.isfinite(l_content.data).all()):
        raise ArgumentError("total_loss inputs must be finite")
    return ops.add(tape, l_adv, ops.scale(tape, l_content, config.lam))
