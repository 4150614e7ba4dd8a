"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import EvaluationError
from .tensor import Tape, Tensor


@dataclass
class GradCheckReport:
    name: str
    max_rel_error: float
    max_abs_error: float
    tol: float
    n_coords: int
    per_input: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: max rel err {self.max_rel_error:.3e} (tol {self.tol:.0e}, {self.n_coords} coords)"


def _evaluate(f, tensors) -> float:
    out = f(None, *tensors)
    value = float(np.asarray(out.data).reshape(-1)[0])
    if not np.isfinite(value):
        raise EvaluationError("function under check produced a non-finite value")
    return value


def grad_check(f, inputs, h: float = 1e-6, tol: float = 1e-6, name: str = "f") -> GradCheckReport:
    """Compare tape gradients of ``f`` with central differences.

    ``f(tape, *tensors)`` must return a scalar Tensor and accept ``tape=None``.
    ``inputs`` are arrays (or Tensors); each is checked as a float64 leaf.

    The error of one input is ``max|analytic - numeric| / max(|analytic|, |numeric|)``
    taken over all coordinates (infinity-norm relative error), so tiny gradient
    entries do not blow up the ratio. Two all-zero gradients count as exact.
    """
    arrays = [np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64) for x in inputs]
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    tape = Tape()
    out = f(tape, *leaves)
    if out.data.size != 1:
        raise EvaluationError("grad_check needs a scalar-valued function")
    if not np.isfinite(out.data).all():
        raise EvaluationError("function under check produced a non-finite value")
    tape.backward(out)
    analytic = [leaf.grad.copy() for leaf in leaves]

    worst_rel = worst_abs = 0.0
    per_input = []
    n_coords = 0
    for k, base in enumerate(arrays):
        numeric = np.zeros_like(base)
        flat = base.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            fp = _evaluate(f, [Tensor(a) for a in arrays])
            flat[idx] = orig - h
            fm = _evaluate(f, [Tensor(a) for a in arrays])
            flat[idx] = orig
            numeric.reshape(-1)[idx] = (fp - fm) / (2 * h)
        n_coords += flat.size
        diff = np.abs(analytic[k] - numeric)
        denom = max(np.abs(analytic[k]).max(initial=0.0), np.abs(numeric).max(initial=0.0))
        abs_err = float(diff.max(initial=0.0))
        rel = 0.0 if abs_err == 0.0 else abs_err / denom if denom > 0 else np.inf
        per_input.append(rel)
        worst_rel = max(worst_rel, rel)
        worst_abs = max(worst_abs, abs_err)
    return GradCheckReport(name, float(worst_rel), float(worst_abs), tol, n_coords, per_input)
