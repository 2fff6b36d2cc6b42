"""Differentiable operations over ``Tensor``.

Each op computes its forward value with numpy and records a backward rule via
``record``. Binary elementwise ops broadcast like numpy; their backward rules
sum gradients back onto the operand shapes.

Conventions:
- Convolutions are cross-correlations with zero padding
- Image-like tensors are (C, H, W); token tensors are (N, d)
- ``instance_norm`` uses population variance with an epsilon guard
"""

from __future__ import annotations

import builtins
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ConfigurationError, DimensionError
from .tensor import Tensor, as_tensor, record

Operand = Union[Tensor, float, int, np.ndarray]

DEFAULT_NORM_EPS = 1e-5
LEAKY_SLOPE = 0.2

# =============================================================================
# Helpers
# =============================================================================


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _norm_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


# =============================================================================
# Elementwise arithmetic
# =============================================================================


def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def _backward(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return record("add", a.data + b.data, (a, b), _backward)


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def _backward(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return record("sub", a.data - b.data, (a, b), _backward)


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def _backward(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return record("mul", ad * bd, (a, b), _backward)


def div(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    out = ad / bd

    def _backward(g):
        return (
            _unbroadcast(g / bd, ad.shape),
            _unbroadcast(-g * out / bd, bd.shape),
        )

    return record("div", out, (a, b), _backward)


def neg(a: Tensor) -> Tensor:
    return record("neg", -a.data, (a,), lambda g: (-g,))


def power(a: Tensor, exponent: float) -> Tensor:
    """Elementwise ``a ** exponent`` for a constant real exponent."""
    a = as_tensor(a)
    ad = a.data
    p = float(exponent)

    def _backward(g):
        return (g * p * ad ** (p - 1.0),)

    return record("power", ad**p, (a,), _backward)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return record("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return record("log", np.log(ad), (a,), lambda g: (g / ad,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return record("sqrt", out, (a,), lambda g: (g * 0.5 / out,))


def abs(a: Tensor) -> Tensor:
    ad = a.data
    return record("abs", np.abs(ad), (a,), lambda g: (g * np.sign(ad),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return record("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return record("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return record("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def leaky_relu(a: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    mask = a.data > 0
    scale = np.where(mask, 1.0, slope)
    return record("leaky_relu", a.data * scale, (a,), lambda g: (g * scale,))


def clip(a: Tensor, low: float, high: float) -> Tensor:
    """Clamp values; the gradient is zero where the clamp is active."""
    ad = a.data
    inside = (ad >= low) & (ad <= high)
    return record(
        "clip", np.clip(ad, low, high), (a,), lambda g: (g * inside,)
    )


# =============================================================================
# Reductions and movement
# =============================================================================


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = a.shape
    axes = _norm_axes(axis, a.ndim)

    def _backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes) if axes else g
        return (np.broadcast_to(g, shape).copy(),)

    return record("sum", a.data.sum(axis=axes, keepdims=keepdims), (a,), _backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    count = 1
    for ax in axes:
        count *= a.shape[ax]
    return sum(a, axis=axes, keepdims=keepdims) * (1.0 / count)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    original = a.shape
    return record(
        "reshape",
        a.data.reshape(tuple(shape)),
        (a,),
        lambda g: (g.reshape(original),),
    )


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return record(
        "transpose",
        np.transpose(a.data, axes),
        (a,),
        lambda g: (np.transpose(g, inverse),),
    )


def getitem(a: Tensor, index) -> Tensor:
    """Basic or advanced indexing; gradients scatter-add back."""
    shape = a.shape
    parts = index if isinstance(index, tuple) else (index,)
    advanced = any(isinstance(p, (list, np.ndarray)) for p in parts)

    def _backward(g):
        out = np.zeros(shape)
        if advanced:
            np.add.at(out, index, g)
        else:
            out[index] += g
        return (out,)

    return record("getitem", np.array(a.data[index]), (a,), _backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    axis = axis % tensors[0].ndim
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError("concat", [t.shape for t in tensors], str(exc))

    def _backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
            for i in range(len(tensors))
        )

    return record("concat", data, tensors, _backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError("stack", [t.shape for t in tensors], str(exc))

    def _backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return record("stack", data, tensors, _backward)


# =============================================================================
# Linear algebra
# =============================================================================


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a (m,k) or (k,) operand with a (k,n) operand.

    Backward rules: dA = dC·Bᵀ, dB = Aᵀ·dC.

    Raises:
        DimensionError: If inner dimensions disagree (names both shapes)
    """
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise DimensionError("matmul", [a.shape, b.shape], "inner dimensions disagree")
    ad, bd = a.data, b.data

    def _backward(g):
        if ad.ndim == 1:
            return g @ bd.T, np.outer(ad, g)
        return g @ bd.T, ad.T @ g

    return record("matmul", ad @ bd, (a, b), _backward)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight + bias`` for (in,) or (N, in) inputs and (in, out) weights."""
    out = matmul(x, weight)
    if bias is not None:
        out = add(out, bias)
    return out


# =============================================================================
# Normalisation and attention primitives
# =============================================================================


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax (max-subtracted) along ``axis``."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def _backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return record("softmax", out, (x,), _backward)


def instance_norm(
    x: Tensor,
    eps: float = DEFAULT_NORM_EPS,
    axes: Optional[Sequence[int]] = None,
) -> Tensor:
    """Normalise each channel to zero mean and unit variance.

    For (C, H, W) inputs the statistics run over H and W (the default). Token
    tensors (N, d) pass ``axes=(0,)`` to normalise every channel over tokens.
    """
    if axes is None:
        axes = tuple(range(1, x.ndim))
    axes = _norm_axes(axes, x.ndim)
    xd = x.data
    mu = xd.mean(axis=axes, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv

    def _backward(g):
        gm = g.mean(axis=axes, keepdims=True)
        gym = (g * y).mean(axis=axes, keepdims=True)
        return (inv * (g - gm - y * gym),)

    return record("instance_norm", y, (x,), _backward)


# =============================================================================
# Convolutions
# =============================================================================


def _out_size(size: int, kernel: int, stride: int, pad: int, op: str) -> int:
    span = size + 2 * pad - kernel
    if span < 0 or span % stride != 0:
        raise ConfigurationError(
            f"{op}: non-integral output size for input {size}, kernel {kernel}, "
            f"stride {stride}, pad {pad}",
            key="stride",
        )
    return span // stride + 1


def _conv(
    x: Tensor,
    k: Tensor,
    bias: Optional[Tensor],
    stride: int,
    pad_h: int,
    pad_w: int,
    op: str,
) -> Tensor:
    if x.ndim != 3 or k.ndim != 4 or k.shape[1] != x.shape[0]:
        raise DimensionError(op, [x.shape, k.shape], "expected x (C,H,W), k (O,C,s,s)")
    c_out, _, kh, kw = k.shape
    _, h, w = x.shape
    out_h = _out_size(h, kh, stride, pad_h, op)
    out_w = _out_size(w, kw, stride, pad_w, op)
    xp = np.pad(x.data, ((0, 0), (pad_h, pad_h), (pad_w, pad_w)))
    kd = k.data
    span_h = stride * (out_h - 1) + 1
    span_w = stride * (out_w - 1) + 1

    out = np.zeros((c_out, out_h, out_w))
    for u in range(kh):
        for v in range(kw):
            patch = xp[:, u : u + span_h : stride, v : v + span_w : stride]
            out += np.tensordot(kd[:, :, u, v], patch, axes=([1], [0]))
    inputs: Tuple[Tensor, ...] = (x, k)
    if bias is not None:
        out += bias.data[:, None, None]
        inputs = (x, k, bias)

    def _backward(g):
        gxp = np.zeros_like(xp)
        gk = np.zeros_like(kd)
        for u in range(kh):
            for v in range(kw):
                sl = (
                    slice(None),
                    slice(u, u + span_h, stride),
                    slice(v, v + span_w, stride),
                )
                gk[:, :, u, v] = np.tensordot(g, xp[sl], axes=([1, 2], [1, 2]))
                gxp[sl] += np.tensordot(kd[:, :, u, v], g, axes=([0], [0]))
        gx = gxp[:, pad_h : pad_h + h, pad_w : pad_w + w]
        grads = [gx, gk]
        if bias is not None:
            grads.append(g.sum(axis=(1, 2)))
        return grads

    return record(op, out, inputs, _backward)


def conv2d(
    x: Tensor,
    k: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    pad: int = 0,
) -> Tensor:
    """2-D cross-correlation of x (C_in,H,W) with square kernels (C_out,C_in,s,s).

    Output spatial size is (H + 2·pad − s)/stride + 1.

    Raises:
        DimensionError: On channel or rank mismatch
        ConfigurationError: If the output size is not integral
    """
    if k.ndim == 4 and k.shape[2] != k.shape[3]:
        raise DimensionError("conv2d", [x.shape, k.shape], "kernel must be square")
    if stride < 1 or pad < 0:
        raise ConfigurationError(
            f"conv2d: invalid stride {stride} / pad {pad}", key="stride"
        )
    return _conv(x, k, bias, stride, pad, pad, "conv2d")


def conv1d(
    x: Tensor,
    k: Tensor,
    bias: Optional[Tensor] = None,
    pad: int = 0,
) -> Tensor:
    """Temporal cross-correlation of x (C_in, T) with kernels (C_out, C_in, s)."""
    if x.ndim != 2 or k.ndim != 3:
        raise DimensionError(
            "conv1d", [x.shape, k.shape], "expected x (C,T), k (O,C,s)"
        )
    c, t = x.shape
    o, ci, s = k.shape
    x4 = reshape(x, (c, 1, t))
    k4 = reshape(k, (o, ci, 1, s))
    out = _conv(x4, k4, bias, 1, 0, pad, "conv1d")
    return reshape(out, (o, out.shape[2]))


def conv_transpose2d(
    x: Tensor,
    w: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 2,
    pad: int = 1,
) -> Tensor:
    """Transposed convolution, the adjoint of ``conv2d`` in its input.

    x is (C_in, H, W), w is (C_in, C_out, s, s); the output spatial size is
    (H − 1)·stride + s − 2·pad.
    """
    square = w.ndim == 4 and w.shape[2] == w.shape[3]
    if x.ndim != 3 or not square or w.shape[0] != x.shape[0]:
        raise DimensionError(
            "conv_transpose2d", [x.shape, w.shape], "expected x (C,H,W), w (C,O,s,s)"
        )
    c_in, h, wd = x.shape
    _, c_out, s, _ = w.shape
    full_h = (h - 1) * stride + s
    full_w = (wd - 1) * stride + s
    out_h = full_h - 2 * pad
    out_w = full_w - 2 * pad
    if out_h < 1 or out_w < 1:
        raise ConfigurationError(
            f"conv_transpose2d: empty output for input {x.shape}", key="pad"
        )
    xd, wdat = x.data, w.data
    span_h = stride * (h - 1) + 1
    span_w = stride * (wd - 1) + 1

    full = np.zeros((c_out, full_h, full_w))
    for u in range(s):
        for v in range(s):
            full[:, u : u + span_h : stride, v : v + span_w : stride] += np.tensordot(
                wdat[:, :, u, v], xd, axes=([0], [0])
            )
    out = full[:, pad : pad + out_h, pad : pad + out_w].copy()
    inputs: Tuple[Tensor, ...] = (x, w)
    if bias is not None:
        out += bias.data[:, None, None]
        inputs = (x, w, bias)

    def _backward(g):
        gfull = np.zeros((c_out, full_h, full_w))
        gfull[:, pad : pad + out_h, pad : pad + out_w] = g
        gx = np.zeros_like(xd)
        gw = np.zeros_like(wdat)
        for u in range(s):
            for v in range(s):
                gs = gfull[:, u : u + span_h : stride, v : v + span_w : stride]
                gx += np.tensordot(wdat[:, :, u, v], gs, axes=([1], [0]))
                gw[:, :, u, v] = np.tensordot(xd, gs, axes=([1, 2], [1, 2]))
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(1, 2)))
        return grads

    return record("conv_transpose2d", out, inputs, _backward)


# =============================================================================
# Convenience composites
# =============================================================================


def zeros(shape: Sequence[int]) -> Tensor:
    return Tensor(np.zeros(tuple(shape)))


def split_columns(x: Tensor, parts: int) -> List[Tensor]:
    """Split the last axis of a token tensor into ``parts`` equal slices."""
    width = x.shape[-1]
    if width % parts != 0:
        raise ConfigurationError(
            f"width {width} is not divisible by {parts}", key="heads"
        )
    step = width // parts
    return [
        getitem(x, (Ellipsis, builtins.slice(i * step, (i + 1) * step)))
        for i in range(parts)
    ]
