import numpy as np
import pytest

from micrestore.autodiff import RngStream, Tape, ops
from micrestore.errors import ValidationError
from micrestore.nn import BANK, NetConfig, ParamStore
from micrestore.optim import Adam, AdamConfig


def store_with(data, label="shared"):
    s = ParamStore("test", NetConfig())
    s.add("p", np.asarray(data, dtype=np.float64), label)
    return s


@pytest.mark.parametrize("grad_scale", [1e-6, 1.0, 1e4])
def test_first_step_is_lr_regardless_of_scale(grad_scale):
    s = store_with([1.0, -2.0, 3.0])
    s["p"].grad[...] = grad_scale * np.array([1.0, -1.0, 2.0])
    before = s["p"].data.copy()
    cfg = AdamConfig(lr=1e-3)
    Adam(s, cfg).step()
    # closed form: m_hat = g, v_hat = g^2  ->  delta = lr * g / (|g| + eps)
    g = s["p"].grad
    np.testing.assert_allclose(before - s["p"].data, cfg.lr * g / (np.abs(g) + cfg.eps), rtol=1e-12)


def test_moves_towards_quadratic_minimum():
    s = store_with(RngStream(0).normal(5))
    opt = Adam(s, AdamConfig(lr=0.05))
    losses = []
    for _ in range(200):
        tape = Tape()
        loss = ops.reduce_sum(tape, ops.square(tape, s["p"]))
        losses.append(loss.item())
        tape.backward(loss)
        opt.step()
        s.zero_grad()
    assert losses[-1] < 1e-2 * losses[0]


def test_bank_rows_lazy():
    s = store_with(np.ones((3, 2)), BANK)
    opt = Adam(s)
    s["p"].grad[...] = 1.0
    opt.step(row=1)
    np.testing.assert_array_equal(s["p"].data[[0, 2]], 1.0)
    assert (s["p"].data[1] < 1).all()
    m, v, t = opt.state_arrays()
    assert list(t["p"]) == [0, 1, 0]


def test_config_validation():
    with pytest.raises(ValidationError):
        AdamConfig(lr=0)
    with pytest.raises(ValidationError):
        AdamConfig(beta1=1.0)
