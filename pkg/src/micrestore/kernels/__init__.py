"""Hot loops of the conv engine.

The compiled extension ``_ckernels`` is used when it imports; otherwise the
numpy fallback in ``_pykernels`` is used. Set ``MICRESTORE_KERNELS`` to
``python`` to force the fallback or ``cython`` to make a missing extension an
error.
"""

import os

import numpy as np

from . import _pykernels

_choice = os.environ.get("MICRESTORE_KERNELS", "auto").lower()
if _choice not in ("auto", "cython", "python"):
    raise ImportError(f"MICRESTORE_KERNELS must be auto, cython or python, not {_choice!r}")

_impl = _pykernels
BACKEND = "python"
if _choice != "python":
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        if _choice == "cython":
            raise
        _impl = _pykernels


def _contig(a):
    return np.ascontiguousarray(a)


def im2col(x, kh, kw, stride):
    """(N, C, H, W) -> (N, C*kh*kw, Ho*Wo) patch matrix, rows ordered (c, i, j)."""
    return _impl.im2col(_contig(x), kh, kw, stride)


def col2im(cols, C, H, W, kh, kw, stride):
    """Adjoint of :func:`im2col`: scatter-add patch columns back into an image."""
    return _impl.col2im(_contig(cols), C, H, W, kh, kw, stride)


def upsample_nearest(x, factor):
    return _impl.upsample_nearest(_contig(x), factor)


def block_sum(g, factor):
    """Adjoint of :func:`upsample_nearest`."""
    return _impl.block_sum(_contig(g), factor)


def backends():
    """Modules implementing the kernels, keyed by name (for tests and benchmarks)."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels
        found["cython"] = _ckernels
    except ImportError:
        pass
    return found
