"""Differentiable primitives.

Convolutions act on the frequency axis (axis 1 of ``(B, F, T, C)``) with
kernels of time extent 1, so every time frame is processed independently and
a whole sequence can go through a convolution in one call.
"""

from __future__ import annotations

import numbers
from typing import Sequence

import numpy as np

from ..exceptions import ConfigError, ShapeError
from .tensor import Tensor, as_tensor, record

ACTIVATIONS = ("leaky_relu", "tanh", "sigmoid", "linear")
DEFAULT_LEAKY_SLOPE = 0.2


def _val(x):
    if isinstance(x, Tensor):
        return x.data
    if isinstance(x, numbers.Number):
        return x
    return np.asarray(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _operands(a, b):
    ta = a if isinstance(a, Tensor) else None
    tb = b if isinstance(b, Tensor) else None
    inputs = [t for t in (ta, tb) if t is not None]
    return ta, tb, inputs


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    ta, tb, inputs = _operands(a, b)
    av, bv = _val(a), _val(b)
    out = av + bv
    sa, sb = np.shape(av), np.shape(bv)

    def backward(g):
        grads = []
        if ta is not None:
            grads.append(_unbroadcast(g, sa))
        if tb is not None:
            grads.append(_unbroadcast(g, sb))
        return grads

    return record(np.asarray(out), inputs, backward)


def sub(a, b) -> Tensor:
    ta, tb, inputs = _operands(a, b)
    av, bv = _val(a), _val(b)
    out = av - bv
    sa, sb = np.shape(av), np.shape(bv)

    def backward(g):
        grads = []
        if ta is not None:
            grads.append(_unbroadcast(g, sa))
        if tb is not None:
            grads.append(_unbroadcast(-g, sb))
        return grads

    return record(np.asarray(out), inputs, backward)


def mul(a, b) -> Tensor:
    ta, tb, inputs = _operands(a, b)
    av, bv = _val(a), _val(b)
    out = av * bv
    sa, sb = np.shape(av), np.shape(bv)

    def backward(g):
        grads = []
        if ta is not None:
            grads.append(_unbroadcast(g * bv, sa))
        if tb is not None:
            grads.append(_unbroadcast(g * av, sb))
        return grads

    return record(np.asarray(out), inputs, backward)


def matmul(a, b) -> Tensor:
    """``a @ b`` with ``b`` two-dimensional; ``a`` may carry leading axes."""
    ta, tb, inputs = _operands(a, b)
    av, bv = _val(a), _val(b)
    if bv.ndim != 2 or av.shape[-1] != bv.shape[0]:
        raise ShapeError(f"matmul shapes {av.shape} @ {bv.shape}")
    out = av @ bv

    def backward(g):
        grads = []
        if ta is not None:
            grads.append(g @ bv.T)
        if tb is not None:
            grads.append(av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1]))
        return grads

    return record(out, inputs, backward)


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    shape = x.shape
    return record(np.asarray(x.data.sum()), [x], lambda g: [np.broadcast_to(g, shape).copy()])


def mean(x: Tensor) -> Tensor:
    x = as_tensor(x)
    shape, n = x.shape, x.size
    return record(
        np.asarray(x.data.mean()), [x], lambda g: [np.full(shape, g / n, dtype=x.dtype)]
    )


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    return record(x.data.reshape(shape), [x], lambda g: [g.reshape(old)])


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    inv = np.argsort(axes)
    return record(np.transpose(x.data, axes), [x], lambda g: [np.transpose(g, inv)])


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([x.data for x in xs], axis=axis)
    return record(out, xs, lambda g: np.split(g, splits, axis=axis))


def stack(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    out = np.stack([x.data for x in xs], axis=axis)

    def backward(g):
        return [np.take(g, i, axis=axis) for i in range(len(xs))]

    return record(out, xs, backward)


def take(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Slice ``x[start:stop]`` along ``axis`` (a view, no copy)."""
    x = as_tensor(x)
    axis = axis % x.ndim
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    shape, dtype = x.shape, x.dtype

    def backward(g):
        full = np.zeros(shape, dtype=dtype)
        full[index] = g
        return [full]

    return record(x.data[index], [x], backward)


def pad(x: Tensor, axis: int, before: int, after: int) -> Tensor:
    x = as_tensor(x)
    if before == 0 and after == 0:
        return x
    axis = axis % x.ndim
    widths = [(0, 0)] * x.ndim
    widths[axis] = (before, after)
    n = x.shape[axis]
    index = [slice(None)] * x.ndim
    index[axis] = slice(before, before + n)
    index = tuple(index)
    return record(np.pad(x.data, widths), [x], lambda g: [g[index]])


# ---------------------------------------------------------------------------
# activations


def leaky_relu(x: Tensor, slope: float = DEFAULT_LEAKY_SLOPE) -> Tensor:
    x = as_tensor(x)
    xv = x.data
    if 0.0 <= slope <= 1.0:
        y = np.maximum(xv, slope * xv)
    else:
        y = np.where(xv > 0, xv, slope * xv)

    def backward(g):
        # float mask arithmetic; np.where on a random bool mask is ~5x slower
        k = (xv > 0).astype(g.dtype)
        k *= 1.0 - slope
        k += slope
        k *= g
        return [k]

    return record(y, [x], backward)


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return record(y, [x], lambda g: [g * (1.0 - y * y)])


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return record(y, [x], lambda g: [g * y * (1.0 - y)])


def linear(x: Tensor) -> Tensor:
    return as_tensor(x)


def activation(x: Tensor, kind: str, slope: float = DEFAULT_LEAKY_SLOPE) -> Tensor:
    if kind == "leaky_relu":
        return leaky_relu(x, slope)
    if kind == "tanh":
        return tanh(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "linear":
        return linear(x)
    raise ConfigError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


# ---------------------------------------------------------------------------
# convolutions along frequency


def same_padding(n_in: int, kernel: int, stride: int) -> tuple[int, int]:
    """Zero padding ``(low, high)`` giving ``ceil(n_in / stride)`` outputs.

    Odd totals put the extra element on the high-frequency side.
    """
    n_out = -(-n_in // stride)
    total = max((n_out - 1) * stride + kernel - n_in, 0)
    return total // 2, total - total // 2


def conv_output_size(n_in: int, kernel: int, stride: int, pad: tuple[int, int]) -> int:
    return (n_in + pad[0] + pad[1] - kernel) // stride + 1


def _resolve_pad(pad, n_in: int, kernel: int, stride: int) -> tuple[int, int]:
    if pad in ("same", "symmetric-same"):
        return same_padding(n_in, kernel, stride)
    if pad in ("none", "valid", None):
        return 0, 0
    lo, hi = pad
    return int(lo), int(hi)


def _as4d(arr: np.ndarray) -> tuple[np.ndarray, bool]:
    if arr.ndim == 4:
        return arr, False
    if arr.ndim == 3:
        return arr[None], True
    raise ShapeError(f"expected (F, T, C) or (B, F, T, C), got shape {arr.shape}")


def _gather(xp: np.ndarray, n_taps: int, stride: int, n_out: int) -> np.ndarray:
    # (B, Fp, T, C) -> (B, n_out, T, n_taps, C)
    span = stride * (n_out - 1) + 1
    return np.stack([xp[:, n : n + span : stride] for n in range(n_taps)], axis=3)


def _scatter(cols: np.ndarray, stride: int, size: int) -> np.ndarray:
    # adjoint of _gather: (B, n_out, T, n_taps, C) -> (B, size, T, C)
    b, n_out, t, n_taps, c = cols.shape
    out = np.zeros((b, size, t, c), dtype=cols.dtype)
    span = stride * (n_out - 1) + 1
    for n in range(n_taps):
        out[:, n : n + span : stride] += cols[:, :, :, n, :]
    return out


def _check_stride(stride: int) -> None:
    if not isinstance(stride, numbers.Integral) or stride < 1:
        raise ConfigError(f"stride must be a positive integer, got {stride!r}")


_IM2COL_MAX_CHANNELS = 8


def _taps(xp: np.ndarray, n: int, stride: int, n_out: int) -> np.ndarray:
    # (B, n_out * T, C) rows for kernel tap n; a view when stride is 1
    v = xp[:, n : n + stride * (n_out - 1) + 1 : stride]
    if stride != 1:
        v = np.ascontiguousarray(v)
    return v.reshape(xp.shape[0], -1, xp.shape[-1])


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1,
           pad="same") -> Tensor:
    """Convolution over frequency with an ``(N, 1, C_in, C_out)`` kernel."""
    _check_stride(stride)
    x, kernel = as_tensor(x), as_tensor(kernel)
    n_taps, v, c_in, c_out = kernel.shape
    if v != 1:
        raise ConfigError(f"only single-frame kernels (V=1) are supported, got V={v}")
    x4, squeeze = _as4d(x.data)
    if x4.shape[-1] != c_in:
        raise ShapeError(f"conv2d: input has {x4.shape[-1]} channels, kernel expects {c_in}")
    b, f_in, t, _ = x4.shape
    lo, hi = _resolve_pad(pad, f_in, n_taps, stride)
    f_out = conv_output_size(f_in, n_taps, stride, (lo, hi))
    if f_out < 1:
        raise ShapeError(f"conv2d: frequency size {f_in} too small for kernel {n_taps}")
    xp = np.pad(x4, ((0, 0), (lo, hi), (0, 0), (0, 0))) if lo or hi else x4
    w = kernel.data
    # few input channels: one wide matmul; otherwise accumulate per tap (no im2col copy)
    im2col = c_in < _IM2COL_MAX_CHANNELS
    if im2col:
        cols = _gather(xp, n_taps, stride, f_out).reshape(-1, n_taps * c_in)
        y = (cols @ w.reshape(n_taps * c_in, c_out)).reshape(b, f_out, t, c_out)
        del cols
    else:
        y = _taps(xp, 0, stride, f_out) @ w[0, 0]
        for n in range(1, n_taps):
            y += _taps(xp, n, stride, f_out) @ w[n, 0]
        y = y.reshape(b, f_out, t, c_out)
    if bias is not None:
        bias = as_tensor(bias)
        y += bias.data
    if squeeze:
        y = y[0]
    inputs = [x, kernel] + ([bias] if bias is not None else [])
    f_pad = xp.shape[1]

    def backward(g):
        g4 = g[None] if squeeze else g
        g3 = np.ascontiguousarray(g4).reshape(b, -1, c_out)
        grads = []
        if x.requires_grad:
            if im2col:
                dcols = (g3.reshape(-1, c_out) @ w.reshape(n_taps * c_in, c_out).T)
                dxp = _scatter(dcols.reshape(b, f_out, t, n_taps, c_in), stride, f_pad)
            else:
                dxp = np.zeros((b, f_pad, t, c_in), dtype=g4.dtype)
                span = stride * (f_out - 1) + 1
                for n in range(n_taps):
                    dxp[:, n : n + span : stride] += (g3 @ w[n, 0].T).reshape(b, f_out, t, c_in)
            dx = dxp[:, lo : lo + f_in]
            grads.append(dx[0] if squeeze else dx)
        else:
            grads.append(None)
        if kernel.requires_grad:
            if im2col:
                cols = _gather(xp, n_taps, stride, f_out).reshape(-1, n_taps * c_in)
                dk = (cols.T @ g3.reshape(-1, c_out)).reshape(kernel.shape)
            else:
                dk = np.empty_like(w)
                for n in range(n_taps):
                    xt = _taps(xp, n, stride, f_out)
                    acc = xt[0].T @ g3[0]
                    for i in range(1, b):
                        acc += xt[i].T @ g3[i]
                    dk[n, 0] = acc
            grads.append(dk)
        else:
            grads.append(None)
        if bias is not None:
            grads.append(g3.reshape(-1, c_out).sum(axis=0))
        return grads

    return record(y, inputs, backward)


def transpose_crop(n_in: int, kernel: int, stride: int) -> tuple[int, int]:
    """Crop ``(low, high)`` turning the full transposed output into ``n_in * stride``."""
    total = (n_in - 1) * stride + kernel - n_in * stride
    if total < 0:
        # kernel shorter than stride: zero-extend the high side instead
        return 0, total
    return total // 2, total - total // 2


def conv2d_transpose(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1,
                     crop="same") -> Tensor:
    """Transposed convolution over frequency with an ``(N, 1, C_out, C_in)`` kernel.

    The full output has ``(F_in - 1) * stride + N`` bins.  ``crop="same"``
    trims it to ``F_in * stride``, which makes this the exact adjoint of
    :func:`conv2d` with ``pad="same"`` on that size and the same kernel.
    """
    _check_stride(stride)
    x, kernel = as_tensor(x), as_tensor(kernel)
    n_taps, v, c_out, c_in = kernel.shape
    if v != 1:
        raise ConfigError(f"only single-frame kernels (V=1) are supported, got V={v}")
    x4, squeeze = _as4d(x.data)
    if x4.shape[-1] != c_in:
        raise ShapeError(
            f"conv2d_transpose: input has {x4.shape[-1]} channels, kernel expects {c_in}"
        )
    b, f_in, t, _ = x4.shape
    full = (f_in - 1) * stride + n_taps
    if crop == "same":
        lo, hi = transpose_crop(f_in, n_taps, stride)
    elif crop in ("none", None):
        lo, hi = 0, 0
    else:
        lo, hi = (int(c) for c in crop)
    f_out = full - lo - hi
    # (C_in, N * C_out) so one matmul yields every tap's contribution
    kmat = np.transpose(kernel.data[:, 0], (2, 0, 1)).reshape(c_in, n_taps * c_out)
    z = (x4.reshape(-1, c_in) @ kmat).reshape(b, f_in, t, n_taps, c_out)
    keep = min(f_out, full - lo)
    y = _scatter(z, stride, full)[:, lo : lo + keep]
    del z
    if keep < f_out:
        y = np.pad(y, ((0, 0), (0, f_out - keep), (0, 0), (0, 0)))
    if bias is not None:
        bias = as_tensor(bias)
        y += bias.data
    if squeeze:
        y = y[0]
    inputs = [x, kernel] + ([bias] if bias is not None else [])

    def backward(g):
        g4 = g[None] if squeeze else g
        gf = np.zeros((b, full, t, c_out), dtype=g4.dtype)
        gf[:, lo : lo + keep] = g4[:, :keep]
        dz = _gather(gf, n_taps, stride, f_in).reshape(-1, n_taps * c_out)
        grads = []
        if x.requires_grad:
            dx = (dz @ kmat.T).reshape(b, f_in, t, c_in)
            grads.append(dx[0] if squeeze else dx)
        else:
            grads.append(None)
        if kernel.requires_grad:
            dk = (x4.reshape(-1, c_in).T @ dz).reshape(c_in, n_taps, c_out)
            grads.append(np.transpose(dk, (1, 2, 0))[:, None])
        else:
            grads.append(None)
        if bias is not None:
            grads.append(g4.reshape(-1, c_out).sum(axis=0))
        return grads

    return record(y, inputs, backward)


def depthwise_1x1(x: Tensor, weights: Tensor, bias: Tensor | None = None) -> Tensor:
    """Scale every channel by its own weight (plus optional per-channel bias)."""
    x, weights = as_tensor(x), as_tensor(weights)
    c = x.shape[-1]
    if weights.shape != (c,) or (bias is not None and as_tensor(bias).shape != (c,)):
        raise ShapeError(f"depthwise_1x1: need {c} weights, got {weights.shape}")
    y = x.data * weights.data
    if bias is not None:
        bias = as_tensor(bias)
        y = y + bias.data
    inputs = [x, weights] + ([bias] if bias is not None else [])
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        grads = [g * weights.data if x.requires_grad else None,
                 (g * x.data).sum(axis=lead)]
        if bias is not None:
            grads.append(g.sum(axis=lead))
        return grads

    return record(y, inputs, backward)
