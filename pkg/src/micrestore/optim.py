"""Adam with lazily-updated CIN bank rows."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ValidationError
from .nn import BANK, ParamStore


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0:
            raise ValidationError(f"lr must be positive, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValidationError("beta1 and beta2 must lie in [0, 1)")
        if not self.eps > 0:
            raise ValidationError("eps must be positive")

    def to_dict(self):
        return asdict(self)


class Adam:
    """Adam over one ParamStore.

    Bank parameters keep per-row moments and step counts, and a step only
    touches the row of the task being trained. Other rows stay bitwise
    unchanged, which plain Adam would violate through its momentum.
    """

    def __init__(self, store: ParamStore, config: AdamConfig = AdamConfig()):
        self.store = store
        self.config = config
        self.m = {n: np.zeros_like(t.data) for n, t in store.items()}
        self.v = {n: np.zeros_like(t.data) for n, t in store.items()}
        self.t = {n: np.zeros(t.shape[0] if store.label(n) == BANK else 1, dtype=np.int64)
                  for n, t in store.items()}

    def _update(self, param, grad, m, v, t):
        c = self.config
        m *= c.beta1
        m += (1 - c.beta1) * grad
        v *= c.beta2
        v += (1 - c.beta2) * grad * grad
        mhat = m / (1 - c.beta1**t)
        vhat = v / (1 - c.beta2**t)
        param -= (c.lr * mhat / (np.sqrt(vhat) + c.eps)).astype(param.dtype, copy=False)

    def step(self, row: int | None = None) -> None:
        """Apply one update from the accumulated grads.

        ``row`` selects the bank row to update; with ``None`` every bank row is
        updated (single-task stores).
        """
        for name, tensor in self.store.items():
            grad = tensor.grad
            if grad is None:
                continue
            if self.store.label(name) == BANK:
                rows = range(tensor.shape[0]) if row is None else (row,)
                for r in rows:
                    self.t[name][r] += 1
                    self._update(tensor.data[r], grad[r], self.m[name][r], self.v[name][r], self.t[name][r])
            else:
                self.t[name][0] += 1
                self._update(tensor.data, grad, self.m[name], self.v[name], self.t[name][0])

    def state_arrays(self):
        return self.m, self.v, self.t
