"""Differentiable ops on NHWC tensors.

Every op returns a new :class:`Tensor` and, when a tape is active and an
input requires grad, records a closure mapping the output gradient to input
gradients.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, active_tape, as_tensor

log = logging.getLogger(__name__)


def _make(data, inputs, backward):
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(out, inputs, backward)
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def matmul(a, b):
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not align")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data @ b.data, (a, b), backward)


def transpose(x, axes):
    inv = np.argsort(axes)
    return _make(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def reshape(x, shape):
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def take(x, indices, axis):
    """Select ``indices`` along ``axis`` (repeated indices accumulate in backward)."""
    indices = np.asarray(indices, dtype=np.intp)

    def backward(g):
        gx = np.zeros_like(x.data)
        moved = np.moveaxis(gx, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        return (gx,)

    return _make(np.take(x.data, indices, axis=axis), (x,), backward)


def relu(x):
    x = as_tensor(x)
    on = x.data > 0
    # np.maximum propagates NaN, so corrupt inputs still reach the loss check
    return _make(np.maximum(x.data, 0).astype(x.dtype), (x,), lambda g: (g * on,))


def sum(x):
    return _make(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape),))


def mean(x):
    n = x.data.size
    return _make(np.asarray(x.data.mean()), (x,),
                 lambda g: (np.broadcast_to(g / n, x.shape).astype(x.dtype),))


def conv2d_valid(x, k, bias=None):
    """Stride-1 convolution without padding (cross-correlation).

    ``x`` is ``(N, H, W, Cin)``, ``k`` is ``(KH, KW, Cin, Cout)`` and
    ``bias`` is ``(Cout,)`` or None. Output is ``(N, H-KH+1, W-KW+1, Cout)``.
    """
    if x.ndim != 4 or k.ndim != 4:
        raise ShapeError(f"conv2d_valid expects 4-D input and kernel, got {x.shape}, {k.shape}")
    N, H, W, C = x.shape
    KH, KW, Cin, Cout = k.shape
    if Cin != C:
        raise ShapeError(f"kernel expects {Cin} input channels, input has {C}")
    if KH > H or KW > W:
        raise ShapeError(f"kernel {KH}x{KW} larger than input {H}x{W}")
    Ho, Wo = H - KH + 1, W - KW + 1
    if KH == 1 and KW == 1:
        cols = x.data
    else:
        cols = np.concatenate(
            [x.data[:, i:i + Ho, j:j + Wo, :] for i in range(KH) for j in range(KW)], axis=-1)
    kmat = k.data.reshape(KH * KW * C, Cout)
    out = cols.reshape(-1, KH * KW * C) @ kmat
    if bias is not None:
        out += bias.data
    out = out.reshape(N, Ho, Wo, Cout)
    inputs = (x, k) if bias is None else (x, k, bias)

    def backward(g):
        g2 = g.reshape(-1, Cout)
        gk = (cols.reshape(-1, KH * KW * C).T @ g2).reshape(k.shape) if k.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (g2 @ kmat.T).reshape(N, Ho, Wo, KH * KW, C)
            if KH == 1 and KW == 1:
                gx = gcols.reshape(x.shape)
            else:
                gx = np.zeros_like(x.data)
                for t, (i, j) in enumerate((i, j) for i in range(KH) for j in range(KW)):
                    gx[:, i:i + Ho, j:j + Wo, :] += gcols[:, :, :, t, :]
        if bias is None:
            return gx, gk
        return gx, gk, g2.sum(axis=0)

    return _make(out, inputs, backward)


@dataclass
class BatchNormState:
    """Running statistics for one batch-norm layer."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-5
    steps: int = 0

    @classmethod
    def create(cls, channels, dtype=np.float32, momentum=0.9, eps=1e-5):
        return cls(np.zeros(channels, dtype), np.ones(channels, dtype), momentum, eps)


def batchnorm(x, gamma, beta, state, training=True):
    """Per-channel normalization over the batch and spatial axes.

    In training mode batch statistics are used and folded into ``state``
    (``running = momentum * running + (1 - momentum) * batch``); in eval mode
    the running statistics are used.
    """
    C = x.shape[-1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ShapeError("gamma/beta must have one entry per channel")
    axes = tuple(range(x.ndim - 1))
    if training:
        if x.shape[0] < 2:
            raise ShapeError("batch norm in training mode needs a batch of at least 2")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        m = state.momentum
        state.running_mean = (m * state.running_mean + (1 - m) * mu).astype(state.running_mean.dtype)
        state.running_var = (m * state.running_var + (1 - m) * var).astype(state.running_var.dtype)
        state.steps += 1
    else:
        if state.steps == 0:
            log.warning("batch norm evaluated before any training step; using initial running stats")
        mu = state.running_mean.astype(x.dtype)
        var = state.running_var.astype(x.dtype)
    inv_std = (1.0 / np.sqrt(var + state.eps)).astype(x.dtype)
    xhat = (x.data - mu) * inv_std
    out = xhat * gamma.data + beta.data
    n = x.data.size // C

    def backward(g):
        ggamma = (g * xhat).sum(axis=axes)
        gbeta = g.sum(axis=axes)
        dxhat = g * gamma.data
        if training:
            gx = (inv_std / n) * (n * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
        else:
            gx = dxhat * inv_std
        return gx, ggamma, gbeta

    return _make(out, (x, gamma, beta), backward)


def concat_channels(a, b):
    if a.shape[:-1] != b.shape[:-1]:
        raise ShapeError(f"cannot concatenate {a.shape} and {b.shape} along channels")
    ca = a.shape[-1]
    return _make(np.concatenate([a.data, b.data], axis=-1), (a, b),
                 lambda g: (g[..., :ca], g[..., ca:]))


def center_slice(x, out_h, out_w):
    """Centered ``out_h x out_w`` spatial window of an NHWC tensor."""
    N, H, W, C = x.shape
    dh, dw = H - out_h, W - out_w
    if dh < 0 or dw < 0 or dh % 2 or dw % 2:
        raise ShapeError(f"cannot center-slice {H}x{W} to {out_h}x{out_w}")
    top, left = dh // 2, dw // 2
    window = (slice(None), slice(top, top + out_h), slice(left, left + out_w), slice(None))

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[window] = g
        return (gx,)

    return _make(x.data[window], (x,), backward)


def mae_loss(pred, target):
    """Mean absolute error; the subgradient at exact ties is 0."""
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    diff = pred.data - target.data
    n = diff.size

    def backward(g):
        s = np.sign(diff) * (g / n)
        return s.astype(pred.dtype), (-s).astype(target.dtype)

    return _make(np.asarray(np.abs(diff).mean()), (pred, target), backward)
