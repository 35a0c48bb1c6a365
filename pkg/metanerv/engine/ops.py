"""Forward operations and their reverse-mode rules.

Every function takes and returns :class:`Tensor`. When no input carries a
gradient the result is computed eagerly and nothing is recorded.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from metanerv.engine.tensor import BackwardRule, Tensor, active_tape
from metanerv.types.errors import (
    InvalidKernelError,
    InvalidShapeError,
    NonFiniteError,
    ShapeMismatchError,
)

GELU_C = 0.7978845608
GELU_A = 0.044715


def _emit(
    data: np.ndarray,
    inputs: Sequence[Tensor],
    backward: BackwardRule,
    operation: str,
) -> Tensor:
    data = np.asarray(data, dtype=np.float64)
    tape = active_tape(*inputs)
    if tape is None:
        if not np.all(np.isfinite(data)):
            raise NonFiniteError(f"{operation} produced non-finite values")
        return Tensor(data)
    return tape.record(data, inputs, backward, operation)


def _same_shape(a: Tensor, b: Tensor, operation: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{operation}: shapes {a.shape} and {b.shape} differ")


# Elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _emit(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _emit(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    x, y = a.data, b.data
    return _emit(x * y, (a, b), lambda g: (g * y, g * x), "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "div")
    x, y = a.data, b.data
    if np.any(y == 0):
        raise NonFiniteError("div: division by zero")
    return _emit(x / y, (a, b), lambda g: (g / y, -g * x / (y * y)), "div")


def scale(a: Tensor, factor: float) -> Tensor:
    return _emit(a.data * factor, (a,), lambda g: (g * factor,), "scale")


def shift(a: Tensor, offset: float) -> Tensor:
    return _emit(a.data + offset, (a,), lambda g: (g,), "shift")


def absolute(a: Tensor) -> Tensor:
    x = a.data
    return _emit(np.abs(x), (a,), lambda g: (g * np.sign(x),), "abs")


def square(a: Tensor) -> Tensor:
    x = a.data
    return _emit(x * x, (a,), lambda g: (2.0 * g * x,), "square")


def gelu(a: Tensor) -> Tensor:
    """Gaussian error linear unit, tanh approximation."""
    x = a.data
    u = GELU_C * (x + GELU_A * x**3)
    th = np.tanh(u)
    out = 0.5 * x * (1.0 + th)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        du = GELU_C * (1.0 + 3.0 * GELU_A * x * x)
        return (g * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du),)

    return _emit(out, (a,), _backward, "gelu")


def sigmoid(a: Tensor) -> Tensor:
    # tanh form stays finite for any input
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _emit(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


# Reductions and shape


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _emit(np.sum(a.data), (a,), lambda g: (np.broadcast_to(g, shape).copy(),), "sum")


def mean(a: Tensor) -> Tensor:
    shape, n = a.shape, a.size
    return _emit(
        np.mean(a.data), (a,), lambda g: (np.broadcast_to(g / n, shape).copy(),), "mean"
    )


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    if int(np.prod(shape)) != a.size:
        raise InvalidShapeError(f"reshape: cannot view {a.shape} as {shape}")
    original = a.shape
    return _emit(a.data.reshape(shape), (a,), lambda g: (g.reshape(original),), "reshape")


# Linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    x, y = a.data, b.data
    return _emit(x @ y, (a, b), lambda g: (g @ y.T, x.T @ g), "matmul")


def add_bias(a: Tensor, bias: Tensor) -> Tensor:
    """Add a row vector to every row of a matrix (the only broadcast the engine does)."""
    if a.ndim != 2 or bias.shape != (a.shape[1],):
        raise ShapeMismatchError(f"add_bias: bias {bias.shape} does not fit {a.shape}")
    return _emit(a.data + bias.data, (a, bias), lambda g: (g, g.sum(axis=0)), "add_bias")


def conv2d(x: Tensor, w: Tensor, b: Tensor, padding: int) -> Tensor:
    """Same-padded cross-correlation of a C_in x H x W map with C_out x C_in x k x k filters."""
    if w.ndim != 4 or w.shape[2] != w.shape[3]:
        raise InvalidKernelError(f"conv2d: weight shape {w.shape} is not C_out x C_in x k x k")
    c_out, c_in, k, _ = w.shape
    if k % 2 == 0:
        raise InvalidKernelError(f"conv2d: kernel size {k} must be odd")
    if padding != (k - 1) // 2:
        raise InvalidKernelError(f"conv2d: padding {padding} is not same-padding for k={k}")
    if x.ndim != 3 or x.shape[0] != c_in:
        raise ShapeMismatchError(f"conv2d: input {x.shape} does not have {c_in} channels")
    if b.shape != (c_out,):
        raise ShapeMismatchError(f"conv2d: bias {b.shape} does not match {c_out} channels")

    _, h, width = x.shape
    padded = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding)))
    # (C_in, H, W, k, k) -> (C_in*k*k, H*W)
    windows = sliding_window_view(padded, (k, k), axis=(1, 2))
    cols = windows.transpose(0, 3, 4, 1, 2).reshape(c_in * k * k, h * width)
    w_mat = w.data.reshape(c_out, c_in * k * k)
    out = (w_mat @ cols + b.data[:, None]).reshape(c_out, h, width)

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        g_mat = g.reshape(c_out, h * width)
        grad_w = (g_mat @ cols.T).reshape(w.shape)
        grad_b = g_mat.sum(axis=1)
        grad_cols = (w_mat.T @ g_mat).reshape(c_in, k, k, h, width)
        grad_padded = np.zeros_like(padded)
        for i in range(k):
            for j in range(k):
                grad_padded[:, i : i + h, j : j + width] += grad_cols[:, i, j]
        grad_x = grad_padded[:, padding : padding + h, padding : padding + width]
        return grad_x, grad_w, grad_b

    return _emit(out, (x, w, b), _backward, "conv2d")


# Rearrangement and pooling


def pixel_shuffle(x: Tensor, s: int) -> Tensor:
    """(C*s^2) x h x w -> C x (s*h) x (s*w) with out[c, s*i+p, s*j+q] = in[c*s^2+p*s+q, i, j]."""
    if x.ndim != 3 or s < 1 or x.shape[0] % (s * s) != 0:
        raise InvalidShapeError(f"pixel_shuffle: {x.shape} channels not divisible by {s * s}")
    cs, h, w = x.shape
    c = cs // (s * s)
    out = x.data.reshape(c, s, s, h, w).transpose(0, 3, 1, 4, 2).reshape(c, h * s, w * s)
    return _emit(out, (x,), lambda g: (pixel_unshuffle_array(g, s),), "pixel_shuffle")


def pixel_unshuffle_array(y: np.ndarray, s: int) -> np.ndarray:
    """Inverse rearrangement of pixel_shuffle on a raw array."""
    c, hs, ws = y.shape
    h, w = hs // s, ws // s
    return y.reshape(c, h, s, w, s).transpose(0, 2, 4, 1, 3).reshape(c * s * s, h, w)


def avg_pool2d(x: Tensor, f: int) -> Tensor:
    if x.ndim != 3 or f < 1 or x.shape[1] % f or x.shape[2] % f:
        raise InvalidShapeError(f"avg_pool2d: factor {f} does not divide {x.shape[1:]}")
    c, h, w = x.shape
    out = x.data.reshape(c, h // f, f, w // f, f).mean(axis=(2, 4))

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (np.repeat(np.repeat(g, f, axis=1), f, axis=2) / (f * f),)

    return _emit(out, (x,), _backward, "avg_pool2d")


def gaussian_filter(x: Tensor, kernel: np.ndarray) -> Tensor:
    """Per-channel separable 'valid' filtering with a fixed 1-D kernel."""
    n = len(kernel)
    if x.ndim != 3 or x.shape[1] < n or x.shape[2] < n:
        raise InvalidShapeError(f"gaussian_filter: window {n} does not fit {x.shape}")
    _, h, w = x.shape
    ho, wo = h - n + 1, w - n + 1
    rows = sum(kernel[a] * x.data[:, a : a + ho, :] for a in range(n))
    out = sum(kernel[b] * rows[:, :, b : b + wo] for b in range(n))

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad_rows = np.zeros((x.shape[0], ho, w))
        for b in range(n):
            grad_rows[:, :, b : b + wo] += kernel[b] * g
        grad_x = np.zeros(x.shape)
        for a in range(n):
            grad_x[:, a : a + ho, :] += kernel[a] * grad_rows
        return (grad_x,)

    return _emit(out, (x,), _backward, "gaussian_filter")


def channel_affine(x: Tensor, params: Tensor) -> Tensor:
    """x[c] * (1 + params[c]) + params[C + c] for a C x H x W map and a 1 x 2C row."""
    c = x.shape[0]
    if x.ndim != 3 or params.shape != (1, 2 * c):
        raise ShapeMismatchError(f"channel_affine: {params.shape} does not fit {x.shape}")
    gain = 1.0 + params.data[0, :c]
    offset = params.data[0, c:]
    out = x.data * gain[:, None, None] + offset[:, None, None]

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad_gain = np.sum(g * x.data, axis=(1, 2))
        grad_offset = np.sum(g, axis=(1, 2))
        return g * gain[:, None, None], np.concatenate([grad_gain, grad_offset])[None, :]

    return _emit(out, (x, params), _backward, "channel_affine")
