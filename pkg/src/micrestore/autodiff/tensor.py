"""Dense tensors and the explicit operation tape used for reverse-mode AD."""

from __future__ import annotations

import numpy as np

from ..errors import ArgumentError, NonFiniteError, StateError

_FLOATS = (np.float32, np.float64)


class Tensor:
    """A dense float array that may take part in gradient computation.

    Leaf tensors created with ``requires_grad=True`` own a ``grad`` buffer of
    the same shape. Tensors produced by recorded operations carry
    ``requires_grad`` as a tracking flag but hold no buffer; their gradients
    exist only transiently during :meth:`Tape.backward`.
    """

    __slots__ = ("data", "requires_grad", "grad", "is_leaf", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        arr = np.asarray(data)
        if dtype is None:
            dtype = arr.dtype if arr.dtype in _FLOATS else np.float64
        arr = np.array(arr, dtype=dtype, copy=True, order="C")
        if not np.isfinite(arr).all():
            raise NonFiniteError("tensor data must be finite")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if requires_grad else None
        self.is_leaf = True
        self.name = name

    @classmethod
    def _result(cls, data: np.ndarray, tracked: bool) -> "Tensor":
        t = cls.__new__(cls)
        t.data = data
        t.requires_grad = tracked
        t.grad = None
        t.is_leaf = False
        t.name = None
        return t

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0)

    def set_requires_grad(self, flag: bool) -> None:
        """Toggle tracking on a leaf, allocating its buffer on first enable."""
        if not self.is_leaf:
            raise StateError("only leaf tensors can change requires_grad")
        self.requires_grad = bool(flag)
        if flag and self.grad is None:
            self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor._result(self.data, False)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"


class _Node:
    __slots__ = ("outputs", "inputs", "backward")

    def __init__(self, outputs, inputs, backward):
        self.outputs = outputs
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered record of differentiable operations for one forward pass.

    A tape is single-use: :meth:`backward` consumes it.
    """

    def __init__(self):
        self._nodes: list[_Node] = []
        self._consumed = False

    def __len__(self):
        return len(self._nodes)

    @property
    def consumed(self) -> bool:
        return self._consumed

    def record(self, outputs, inputs, backward) -> None:
        if self._consumed:
            raise StateError("tape has already been consumed by backward()")
        self._nodes.append(_Node(tuple(outputs), tuple(inputs), backward))

    def backward(self, loss: Tensor, scale: float = 1.0) -> None:
        """Accumulate d(scale*loss)/d(leaf) into every tracked leaf's ``grad``."""
        if self._consumed:
            raise StateError("backward() called twice on the same tape")
        if loss.data.size != 1:
            raise ArgumentError(f"backward() needs a scalar loss, got shape {loss.shape}")
        if not np.isfinite(loss.data).all():
            raise NonFiniteError("loss is not finite")
        self._consumed = True
        grads: dict[int, np.ndarray] = {id(loss): np.full(loss.shape, scale, dtype=loss.dtype)}
        leaves: dict[int, Tensor] = {}
        if loss.is_leaf and loss.requires_grad:
            leaves[id(loss)] = loss
        nodes, self._nodes = self._nodes, []
        for node in reversed(nodes):
            gouts = [grads.pop(id(o), None) for o in node.outputs]
            if all(g is None for g in gouts):
                continue
            gouts = [np.zeros_like(o.data) if g is None else g for o, g in zip(node.outputs, gouts)]
            gins = node.backward(*gouts)
            for inp, g in zip(node.inputs, gins):
                if g is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
                if inp.is_leaf:
                    leaves[key] = inp
        for key, leaf in leaves.items():
            g = grads.get(key)
            if g is None:
                continue
            if not np.isfinite(g).all():
                raise NonFiniteError(f"non-finite gradient for {leaf.name or 'tensor'}")
            leaf.grad += g.astype(leaf.grad.dtype, copy=False)


def backward(loss: Tensor, tape: Tape, scale: float = 1.0) -> None:
    """Functional spelling of :meth:`Tape.backward`."""
    tape.backward(loss, scale)
