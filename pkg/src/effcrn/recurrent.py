"""Convolutional LSTM and GRU cells with explicit, externally held state.

Both cells split their weights into an input part and a recurrent part.  For a
whole sequence the input part is one batched convolution / matmul over all
frames, and only the recurrent part runs inside the per-frame loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ops
from .autodiff.tensor import DEFAULT_DTYPE, Parameter, Tensor, as_tensor
from .exceptions import ShapeError, UsageError


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class ConvLSTMCell:
    """Convolutional LSTM over the frequency axis (no peepholes).

    Gates are stacked ``(input, forget, cell, output)`` along the last kernel
    axis, so each gate kernel is the slice ``[..., k*H:(k+1)*H]`` of the
    combined ``(N, 1, C_in + H, 4H)`` kernel formed by the input and recurrent
    parts.
    """

    GATES = ("input", "forget", "cell", "output")

    def __init__(self, c_in: int, hidden: int, kernel_size: int, name: str = "clstm",
                 rng: np.random.Generator | None = None, dtype=DEFAULT_DTYPE,
                 forget_bias: float = 1.0):
        rng = np.random.default_rng(rng)
        self.c_in, self.hidden, self.kernel_size, self.name = c_in, hidden, kernel_size, name
        fan_in = kernel_size * (c_in + hidden)
        self.input_kernel = Parameter(
            glorot_uniform(rng, (kernel_size, 1, c_in, 4 * hidden), fan_in, 4 * hidden, dtype),
            f"{name}.input_kernel")
        self.recurrent_kernel = Parameter(
            glorot_uniform(rng, (kernel_size, 1, hidden, 4 * hidden), fan_in, 4 * hidden, dtype),
            f"{name}.recurrent_kernel")
        bias = np.zeros(4 * hidden, dtype=dtype)
        bias[hidden : 2 * hidden] = forget_bias
        self.bias = Parameter(bias, f"{name}.bias")

    def parameters(self) -> list[Parameter]:
        return [self.input_kernel, self.recurrent_kernel, self.bias]

    def gate_kernels(self) -> dict[str, np.ndarray]:
        full = np.concatenate([self.input_kernel.data, self.recurrent_kernel.data], axis=2)
        h = self.hidden
        return {g: full[..., k * h : (k + 1) * h] for k, g in enumerate(self.GATES)}

    def zero_state(self, batch: int, freq: int, dtype=None) -> tuple[np.ndarray, np.ndarray]:
        dtype = dtype or self.bias.dtype
        z = np.zeros((batch, freq, 1, self.hidden), dtype=dtype)
        return z, z.copy()

    def _check(self, x: Tensor, h) -> None:
        if x.shape[-1] != self.c_in:
            raise ShapeError(f"{self.name}: expected {self.c_in} input channels, got {x.shape[-1]}")
        if h.shape[1] != x.shape[1] or h.shape[-1] != self.hidden:
            raise ShapeError(f"{self.name}: state {h.shape} does not match input {x.shape}")

    def _recur(self, zx_t: Tensor, h, c):
        z = ops.add(zx_t, ops.conv2d(h, self.recurrent_kernel, None, 1, "same"))
        n = self.hidden
        i = ops.sigmoid(ops.take(z, -1, 0, n))
        f = ops.sigmoid(ops.take(z, -1, n, 2 * n))
        g = ops.tanh(ops.take(z, -1, 2 * n, 3 * n))
        o = ops.sigmoid(ops.take(z, -1, 3 * n, 4 * n))
        c_new = ops.add(ops.mul(f, c), ops.mul(i, g))
        h_new = ops.mul(o, ops.tanh(c_new))
        return h_new, c_new

    def step(self, x: Tensor, state) -> tuple[Tensor, tuple[Tensor, Tensor]]:
        """One frame: ``x`` is ``(B, F', 1, C_in)``; returns ``h'`` and ``(h', c')``."""
        x = as_tensor(x)
        h, c = (as_tensor(s) for s in state)
        self._check(x, h)
        zx = ops.conv2d(x, self.input_kernel, self.bias, 1, "same")
        h, c = self._recur(zx, h, c)
        return h, (h, c)

    def sequence(self, x: Tensor, state) -> tuple[Tensor, tuple[Tensor, Tensor]]:
        """Run over all frames of ``x`` shaped ``(B, F', T, C_in)``."""
        x = as_tensor(x)
        h, c = (as_tensor(s) for s in state)
        self._check(x, h)
        zx = ops.conv2d(x, self.input_kernel, self.bias, 1, "same")
        outs = []
        for t in range(x.shape[2]):
            h, c = self._recur(ops.take(zx, 2, t, t + 1), h, c)
            outs.append(h)
        y = outs[0] if len(outs) == 1 else ops.concat(outs, axis=2)
        return y, (h, c)

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())


class GRUCell:
    """Dense GRU with one bias per gate.

    ``z = sigmoid(x W_z + h U_z + b_z)``, ``r = sigmoid(x W_r + h U_r + b_r)``,
    ``n = tanh(x W_n + (r * h) U_n + b_n)``, ``h' = z * h + (1 - z) * n``.
    """

    def __init__(self, input_size: int, hidden: int, name: str = "gru",
                 rng: np.random.Generator | None = None, dtype=DEFAULT_DTYPE):
        rng = np.random.default_rng(rng)
        self.input_size, self.hidden, self.name = input_size, hidden, name
        self.input_weights = Parameter(
            glorot_uniform(rng, (input_size, 3 * hidden), input_size, 3 * hidden, dtype),
            f"{name}.input_weights")
        self.recurrent_weights = Parameter(
            glorot_uniform(rng, (hidden, 3 * hidden), hidden, 3 * hidden, dtype),
            f"{name}.recurrent_weights")
        self.bias = Parameter(np.zeros(3 * hidden, dtype=dtype), f"{name}.bias")

    def parameters(self) -> list[Parameter]:
        return [self.input_weights, self.recurrent_weights, self.bias]

    def zero_state(self, batch: int, dtype=None) -> np.ndarray:
        return np.zeros((batch, self.hidden), dtype=dtype or self.bias.dtype)

    def _check(self, x: Tensor, h) -> None:
        if x.shape[-1] != self.input_size:
            raise ShapeError(f"{self.name}: expected input size {self.input_size}, got {x.shape[-1]}")
        if h.shape[-1] != self.hidden:
            raise ShapeError(f"{self.name}: state size {h.shape[-1]} != {self.hidden}")

    def _split_recurrent(self):
        n, u = self.hidden, self.recurrent_weights
        return ops.take(u, 1, 0, 2 * n), ops.take(u, 1, 2 * n, 3 * n)

    def _recur(self, zx_t: Tensor, h, u_zr, u_n):
        n = self.hidden
        hu = ops.matmul(h, u_zr)
        z = ops.sigmoid(ops.add(ops.take(zx_t, -1, 0, n), ops.take(hu, -1, 0, n)))
        r = ops.sigmoid(ops.add(ops.take(zx_t, -1, n, 2 * n), ops.take(hu, -1, n, 2 * n)))
        cand = ops.tanh(ops.add(ops.take(zx_t, -1, 2 * n, 3 * n),
                                ops.matmul(ops.mul(r, h), u_n)))
        # h' = z*h + (1-z)*cand = cand + z*(h - cand)
        return ops.add(cand, ops.mul(z, ops.sub(h, cand)))

    def step(self, x: Tensor, state) -> tuple[Tensor, Tensor]:
        """One frame: ``x`` is ``(B, input_size)``; output equals the new hidden."""
        x = as_tensor(x)
        h = as_tensor(state)
        self._check(x, h)
        zx = ops.add(ops.matmul(x, self.input_weights), self.bias)
        h = self._recur(zx, h, *self._split_recurrent())
        return h, h

    def sequence(self, x: Tensor, state) -> tuple[Tensor, Tensor]:
        """Run over ``x`` shaped ``(B, T, input_size)``; returns ``(B, T, hidden)``."""
        x = as_tensor(x)
        h = as_tensor(state)
        self._check(x, h)
        zx = ops.add(ops.matmul(x, self.input_weights), self.bias)
        u_zr, u_n = self._split_recurrent()
        outs = []
        for t in range(x.shape[1]):
            h = self._recur(ops.reshape(ops.take(zx, 1, t, t + 1), (x.shape[0], -1)), h, u_zr, u_n)
            outs.append(h)
        y = ops.stack(outs, axis=1)
        return y, h

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())


@dataclass
class RecurrentState:
    """Per-cell states of one model, in bottleneck order.

    CLSTM entries are ``(h, c)`` pairs shaped ``(B, F', 1, H)``; GRU entries
    are ``(B, H)`` hidden vectors.  ``owner`` ties the state to the model
    that created it.
    """

    owner: str
    cells: list = field(default_factory=list)
    batch: int = 1

    def detach(self) -> "RecurrentState":
        def plain(v):
            if isinstance(v, tuple):
                return tuple(plain(x) for x in v)
            return v.data if isinstance(v, Tensor) else v
        return RecurrentState(self.owner, [plain(c) for c in self.cells], self.batch)

    def reset(self) -> None:
        def zero(v):
            if isinstance(v, tuple):
                return tuple(zero(x) for x in v)
            arr = v.data if isinstance(v, Tensor) else v
            return np.zeros_like(arr)
        self.cells = [zero(c) for c in self.cells]

    def check_owner(self, owner: str) -> None:
        if self.owner != owner:
            raise UsageError("recurrent state belongs to a different model")

    def shapes(self) -> list:
        def shp(v):
            if isinstance(v, tuple):
                return tuple(shp(x) for x in v)
            return tuple(np.shape(v.data if isinstance(v, Tensor) else v))
        return [shp(c) for c in self.cells]


def clstm_step(x, state, cell: ConvLSTMCell):
    return cell.step(x, state)


def gru_step(x, state, cell: GRUCell):
    return cell.step(x, state)
