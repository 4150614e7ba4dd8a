import math

import numpy as np
import pytest

from micrestore.autodiff import RngStream, Tape, Tensor
from micrestore.errors import ArgumentError, ValidationError
from micrestore.losses import FeatureNet, LossConfig, adv_loss_d, adv_loss_g, content_loss, total_loss


def full(v, shape=(2, 1, 4, 4)):
    return Tensor(np.full(shape, v, dtype=np.float64))


def scalar(v, grad=False):
    return Tensor(np.asarray(v, dtype=np.float64), requires_grad=grad)


class TestAdversarial:
    def test_least_squares_perfect_discriminator(self):
        assert adv_loss_d(full(1.0), full(0.0)).item() == 0.0

    def test_least_squares_worst_case(self):
        assert adv_loss_d(full(0.0), full(1.0)).item() == 2.0

    def test_bce_zero_logits(self):
        v = adv_loss_d(full(0.0), full(0.0), "nonsaturating_bce").item()
        assert v == pytest.approx(2 * math.log(2), abs=1e-12)
        assert round(v, 6) == 1.386294

    def test_generator_least_squares(self):
        assert adv_loss_g(full(1.0)).item() == 0.0
        assert adv_loss_g(full(0.0)).item() == 1.0

    def test_generator_bce_monotone_in_logit(self):
        vals = [adv_loss_g(full(m), "nonsaturating_bce").item() for m in np.linspace(-4, 4, 9)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_non_negative(self):
        rng = RngStream(0)
        for kind in ("least_squares", "nonsaturating_bce"):
            r, f = Tensor(rng.child(kind, "r").normal((2, 1, 4, 4))), Tensor(rng.child(kind, "f").normal((2, 1, 4, 4)))
            assert adv_loss_d(r, f, kind).item() >= 0 and adv_loss_g(f, kind).item() >= 0

    def test_unknown_kind(self):
        with pytest.raises(ArgumentError):
            adv_loss_g(full(0.0), "wasserstein")


class TestContent:
    def test_pixel_l1_hand_example(self):
        a = Tensor(np.zeros((1, 1, 1, 2)))
        b = Tensor(np.array([1.0, 3.0]).reshape(1, 1, 1, 2))
        assert content_loss(a, b, "pixel_l1").item() == 2.0

    def test_zero_on_identical(self):
        x = Tensor(RngStream(1).uniform(-1, 1, (1, 1, 16, 16)))
        assert content_loss(x, x, "pixel_l1").item() == 0.0
        assert content_loss(x, x, "feature_l1", FeatureNet(0)).item() == 0.0

    def test_feature_pseudometric_symmetric(self):
        rng = RngStream(2)
        a = Tensor(rng.child("a").uniform(-1, 1, (1, 1, 16, 16)))
        b = Tensor(rng.child("b").uniform(-1, 1, (1, 1, 16, 16)))
        net = FeatureNet(3)
        assert content_loss(a, b, "feature_l1", net).item() == content_loss(b, a, "feature_l1", net).item() > 0

    def test_feature_net_deterministic(self):
        x = Tensor(RngStream(4).uniform(-1, 1, (1, 1, 16, 16)))
        y = Tensor(np.zeros((1, 1, 16, 16)))
        assert content_loss(x, y, "feature_l1", FeatureNet(9)).item() == content_loss(x, y, "feature_l1", FeatureNet(9)).item()

    def test_feature_net_weights_immutable(self):
        net = FeatureNet(0)
        with pytest.raises(ValueError):
            net._weights[0][0, 0, 0, 0] = 1.0

    def test_missing_featnet(self):
        with pytest.raises(ArgumentError):
            content_loss(full(0.0), full(0.0), "feature_l1", None)


class TestTotal:
    def test_forced_arithmetic(self):
        assert total_loss(scalar(0.5), scalar(2.0), LossConfig(lam=10.0)).item() == 20.5

    def test_lambda_zero_collapses(self):
        assert total_loss(scalar(0.123), scalar(99.0), LossConfig(lam=0.0)).item() == 0.123

    def test_gradient_split(self):
        adv, content = scalar(0.3, True), scalar(1.7, True)
        tape = Tape()
        tape.backward(total_loss(adv, content, LossConfig(lam=7.5), tape))
        assert adv.grad == 1.0 and content.grad == 7.5

    def test_linear_in_content_and_lambda(self):
        rng = RngStream(5)
        for i in range(20):
            a, c1, c2, lam = (float(v) for v in rng.child(i).uniform(0, 5, 4))
            f = lambda c, l: total_loss(scalar(a), scalar(c), LossConfig(lam=l)).item()  # noqa: E731
            assert f(c1 + c2, lam) - a == pytest.approx((f(c1, lam) - a) + (f(c2, lam) - a), rel=1e-14, abs=1e-14)
            assert f(c1, 2 * lam) - a == pytest.approx(2 * (f(c1, lam) - a), rel=1e-15, abs=1e-15)

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValidationError, match="lambda"):
            LossConfig(lam=-1.0)
