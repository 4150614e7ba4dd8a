"""Minimal dense-tensor engine with tape-based reverse-mode differentiation."""

from . import ops
from .gradcheck import GradCheckReport, grad_check
from .rng import RngStream
from .tensor import Tape, Tensor, backward

__all__ = ["GradCheckReport", "RngStream", "Tape", "Tensor", "backward", "grad_check", "ops"]
