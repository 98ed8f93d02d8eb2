"""Tensor values, trainable parameters and the operation tape.

Operations are recorded only while a :class:`Tape` is active and at least one
input requires a gradient.  Outside a tape every op is a plain numpy call, so
inference never pays for bookkeeping.
"""

from __future__ import annotations

import itertools
import threading
from typing import Callable, Sequence

import numpy as np

from ..exceptions import ShapeError, UsageError

DEFAULT_DTYPE = np.float32

_ids = itertools.count()
_local = threading.local()


class Tensor:
    """Dense real array with an optional gradient slot.

    Layer values are laid out ``(batch, frequency, time, channels)``; the
    batch axis may be omitted for single examples.
    """

    __slots__ = ("data", "requires_grad", "grad", "_node", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(DEFAULT_DTYPE)
        if any(d < 1 for d in arr.shape):
            raise ShapeError(f"all dimensions must be >= 1, got {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._node: _Node | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

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

    def __repr__(self) -> str:
        return f"{type(self).__name__}(shape={self.shape}, dtype={self.dtype})"

    def __len__(self) -> int:
        return self.data.shape[0]

    # arithmetic sugar; implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


class Parameter(Tensor):
    """Trainable tensor; gradients accumulate into ``grad`` during backward."""

    __slots__ = ("name", "uid")

    def __init__(self, data, name: str = "", dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name
        self.uid = next(_ids)
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def assign(self, value: np.ndarray) -> None:
        value = np.asarray(value, dtype=self.data.dtype)
        if value.shape != self.data.shape:
            raise ShapeError(f"{self.name}: expected {self.data.shape}, got {value.shape}")
        self.data = value
        if self.grad is None or self.grad.shape != value.shape:
            self.grad = np.zeros_like(value)


class _Node:
    __slots__ = ("inputs", "output", "backward", "index")

    def __init__(self, inputs, output, backward, index):
        self.inputs = inputs
        self.output = output
        self.backward = backward
        self.index = index


class Tape:
    """Ordered record of differentiable operations for one step.

    Use as a context manager; the tape is discarded after :meth:`backward`.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._done = False

    def __enter__(self) -> "Tape":
        stack = _tape_stack()
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def _record(self, inputs, output, backward) -> None:
        node = _Node(inputs, output, backward, len(self.nodes))
        output._node = node
        self.nodes.append(node)

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` on every leaf reachable from ``loss``."""
        if self._done:
            raise UsageError("tape already consumed; record a new step")
        if loss.size != 1:
            raise UsageError(f"loss must be scalar, got shape {loss.shape}")
        if not loss.requires_grad:
            raise UsageError("loss does not depend on any tensor requiring grad")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            in_grads = node.backward(g)
            for t, gi in zip(node.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                if t._node is None:
                    t.grad = gi.astype(t.data.dtype, copy=False) if t.grad is None else t.grad + gi
                else:
                    key = id(t)
                    prev = grads.get(key)
                    grads[key] = gi if prev is None else prev + gi
        if id(loss) in grads and loss._node is None:
            loss.grad = grads.pop(id(loss))
        self._done = True
        for node in self.nodes:
            node.output._node = None
        self.nodes.clear()


def _tape_stack() -> list[Tape]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def record(
    out: np.ndarray,
    inputs: Sequence[Tensor],
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]],
) -> Tensor:
    """Wrap ``out`` as a Tensor and, if needed, put it on the active tape.

    ``backward`` maps the output gradient to one gradient per input (``None``
    for inputs that need none).
    """
    result = Tensor.__new__(Tensor)
    result.data = out
    result.grad = None
    result._node = None
    tape = active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    result.requires_grad = needs
    if needs:
        tape._record(tuple(inputs), result, backward)
    return result


def no_grad_value(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)
