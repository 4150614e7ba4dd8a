import numpy as np
import pytest

from micrestore import kernels
from micrestore.autodiff import RngStream

BACKENDS = kernels.backends()


def test_python_fallback_always_available():
    assert "python" in BACKENDS
    assert kernels.BACKEND in BACKENDS


@pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("k,stride", [(1, 1), (3, 1), (3, 2), (5, 3)])
def test_backends_bitwise_equal(dtype, k, stride):
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    rng = RngStream(0, (k, stride))
    x = rng.child("x").normal((2, 3, 9, 8)).astype(dtype)
    cols = py.im2col(x, k, k, stride)
    np.testing.assert_array_equal(cols, cy.im2col(x, k, k, stride))
    g = rng.child("g").normal(cols.shape).astype(dtype)
    np.testing.assert_array_equal(py.col2im(g, 3, 9, 8, k, k, stride), cy.col2im(g, 3, 9, 8, k, k, stride))
    for f in (1, 2, 3):
        up_py = py.upsample_nearest(x, f)
        np.testing.assert_array_equal(up_py, cy.upsample_nearest(x, f))
        np.testing.assert_array_equal(py.block_sum(up_py, f), cy.block_sum(up_py, f))


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_col2im_is_adjoint_of_im2col(name):
    impl = BACKENDS[name]
    rng = RngStream(1)
    x = rng.child("x").normal((1, 2, 7, 7))
    cols = impl.im2col(x, 3, 3, 2)
    y = rng.child("y").normal(cols.shape)
    lhs = np.sum(cols * y)
    rhs = np.sum(x * impl.col2im(y, 2, 7, 7, 3, 3, 2))
    assert lhs == pytest.approx(rhs, rel=1e-12)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_block_sum_is_adjoint_of_upsample(name):
    impl = BACKENDS[name]
    rng = RngStream(2)
    x = rng.child("x").normal((2, 1, 3, 4))
    y = rng.child("y").normal((2, 1, 6, 8))
    assert np.sum(impl.upsample_nearest(x, 2) * y) == pytest.approx(np.sum(x * impl.block_sum(y, 2)), rel=1e-12)
