"""Differentiable primitives.

Elementwise ops broadcast like numpy; their backward passes sum the upstream
gradient back down to each operand's shape.
"""

from __future__ import annotations

import numpy as np

from ..errors import NonFiniteError, ShapeError
from .tensor import Tensor, as_tensor, make


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    lead = grad.ndim - len(shape)
    if lead > 0:
        grad = grad.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _pair(a, b):
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = as_tensor(b, a.dtype)
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = as_tensor(a, b.dtype)
    return as_tensor(a), as_tensor(b)


def add(a, b):
    a, b = _pair(a, b)
    out = a.data + b.data

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make(out, (a, b), back, "add")


def sub(a, b):
    a, b = _pair(a, b)
    out = a.data - b.data

    def back(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return make(out, (a, b), back, "sub")


def mul(a, b):
    a, b = _pair(a, b)
    out = a.data * b.data

    def back(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make(out, (a, b), back, "mul")


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def back(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return make(out, (a, b), back, "matmul")


def reshape(x, shape):
    x = as_tensor(x)
    out = x.data.reshape(shape)

    def back(g):
        return (g.reshape(x.shape),)

    return make(out, (x,), back, "reshape")


def transpose(x, axes):
    x = as_tensor(x)
    inv = np.argsort(axes)
    out = np.transpose(x.data, axes)

    def back(g):
        return (np.transpose(g, inv),)

    return make(out, (x,), back, "transpose")


def getitem(x, idx):
    x = as_tensor(x)
    out = x.data[idx]

    basic = all(isinstance(i, (slice, int, type(Ellipsis)))
                for i in (idx if isinstance(idx, tuple) else (idx,)))

    def back(g):
        full = np.zeros_like(x.data)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return make(np.array(out), (x,), back, "getitem")


def concat(xs, axis=-1):
    xs = [as_tensor(x) for x in xs]
    out = np.concatenate([x.data for x in xs], axis=axis)
    cuts = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))

    return make(out, xs, back, "concat")


def sum(x, axis=None, keepdims=False):  # noqa: A001
    x = as_tensor(x)
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make(np.asarray(out), (x,), back, "sum")


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    out = np.mean(x.data, axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, x.shape).astype(x.dtype),)

    return make(np.asarray(out, dtype=x.dtype), (x,), back, "mean")


def stop_gradient(x):
    """Same values, no path back to the inputs."""
    x = as_tensor(x)
    return Tensor(x.data)


# ---------------------------------------------------------------- activations


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    out = np.where(mask, x.data, 0).astype(x.dtype)

    def back(g):
        return (g * mask,)

    return make(out, (x,), back, "relu")


def elu(x, alpha=1.0):
    x = as_tensor(x)
    neg = np.expm1(np.minimum(x.data, 0))
    out = np.where(x.data > 0, x.data, alpha * neg).astype(x.dtype)

    def back(g):
        return (g * np.where(x.data > 0, 1, alpha * (neg + 1)).astype(x.dtype),)

    return make(out, (x,), back, "elu")


def _sigmoid(z):
    # two-branch form so exp never overflows
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1 / (1 + e), e / (1 + e)).astype(z.dtype)


def sigmoid(x):
    x = as_tensor(x)
    s = _sigmoid(x.data)

    def back(g):
        return (g * s * (1 - s),)

    return make(s, (x,), back, "sigmoid")


def _softmax(z, axis):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x, axis=-1):
    x = as_tensor(x)
    s = _softmax(x.data, axis)

    def back(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return make(s, (x,), back, "softmax")


# --------------------------------------------------------------------- layers


def dense(x, W, b=None):
    """``x @ W + b`` over the last axis."""
    x, W = as_tensor(x), as_tensor(W)
    if x.shape[-1] != W.shape[0]:
        raise ShapeError(f"dense: input width {x.shape[-1]} vs weight {W.shape}")
    if b is not None and b.shape != (W.shape[1],):
        raise ShapeError(f"dense: bias {b.shape} vs weight {W.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, W.shape[0])
    out = x2 @ W.data
    if b is not None:
        out = out + b.data
    out = out.reshape(*lead, W.shape[1])

    def back(g):
        g2 = g.reshape(-1, W.shape[1])
        gx = (g2 @ W.data.T).reshape(x.shape)
        gW = x2.T @ g2
        if b is None:
            return gx, gW
        return gx, gW, g2.sum(axis=0)

    parents = (x, W) if b is None else (x, W, b)
    return make(out, parents, back, "dense")


def conv1d(x, kernels, bias=None):
    """Stride-1 cross-correlation along time with zero "same" padding.

    ``x`` is B×L×D and ``kernels`` C×width×D; the result is B×L×C.
    """
    x, kernels = as_tensor(x), as_tensor(kernels)
    if x.ndim != 3 or kernels.ndim != 3:
        raise ShapeError("conv1d expects B×L×D input and C×width×D kernels")
    C, width, D = kernels.shape
    if width % 2 == 0:
        raise ShapeError(f"conv1d kernel width must be odd, got {width}")
    if x.shape[2] != D:
        raise ShapeError(f"conv1d channel mismatch: input {x.shape[2]} vs kernel {D}")
    B, L, _ = x.shape
    pad = width // 2
    xp = np.pad(x.data, ((0, 0), (pad, pad), (0, 0)))
    # cols[b, t, j, d] = xp[b, t + j, d]
    cols = np.lib.stride_tricks.sliding_window_view(xp, width, axis=1)  # B×L×D×width
    cols = np.ascontiguousarray(np.swapaxes(cols, 2, 3)).reshape(B * L, width * D)
    kmat = kernels.data.reshape(C, width * D)
    out = cols @ kmat.T
    if bias is not None:
        out = out + bias.data
    out = out.reshape(B, L, C)

    def back(g):
        g2 = g.reshape(B * L, C)
        gk = (g2.T @ cols).reshape(C, width, D)
        gcols = (g2 @ kmat).reshape(B, L, width, D)
        gxp = np.zeros_like(xp)
        for j in range(width):
            gxp[:, j:j + L, :] += gcols[:, :, j, :]
        gx = gxp[:, pad:pad + L, :]
        if bias is None:
            return gx, gk
        return gx, gk, g2.sum(axis=0)

    parents = (x, kernels) if bias is None else (x, kernels, bias)
    return make(out, parents, back, "conv1d")


def layer_norm(x, gain, shift, eps=1e-5):
    x, gain, shift = as_tensor(x), as_tensor(gain), as_tensor(shift)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + shift.data
    n = x.shape[-1]

    def back(g):
        gxhat = g * gain.data
        gx = inv / n * (n * gxhat - gxhat.sum(-1, keepdims=True)
                        - xhat * (gxhat * xhat).sum(-1, keepdims=True))
        ggain = _unbroadcast(g * xhat, gain.shape)
        gshift = _unbroadcast(g, shift.shape)
        return gx, ggain, gshift

    return make(out.astype(x.dtype), (x, gain, shift), back, "layer_norm")


# --------------------------------------------------------------------- losses


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteError("non-finite input to loss")


def softmax_cross_entropy(logits, target):
    """Mean negative log-likelihood of integer ``target`` under softmax(logits).

    ``logits`` is N×K, ``target`` holds N zero-based class indices.
    """
    logits = as_tensor(logits)
    target = np.asarray(target, dtype=np.int64)
    _check_finite(logits.data)
    if logits.ndim != 2 or target.shape != (logits.shape[0],):
        raise ShapeError(f"cross entropy shapes {logits.shape} vs {target.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(len(target))
    n = len(target)
    loss = np.mean(lse - z[rows, target])

    def back(g):
        p = np.exp(z - lse[:, None])
        p[rows, target] -= 1
        return (p * (g / n),)

    return make(np.asarray(loss, dtype=logits.dtype), (logits,), back, "cross_entropy")


def cross_entropy(probs, target):
    """Mean of -log P[true class] for probability rows ``probs`` (N×K)."""
    probs = as_tensor(probs)
    target = np.asarray(target, dtype=np.int64)
    _check_finite(probs.data)
    if probs.ndim != 2 or target.shape != (probs.shape[0],):
        raise ShapeError(f"cross entropy shapes {probs.shape} vs {target.shape}")
    rows = np.arange(len(target))
    tiny = np.finfo(probs.dtype).tiny
    picked = np.maximum(probs.data[rows, target], tiny)
    n = len(target)
    loss = np.mean(-np.log(picked))

    def back(g):
        gp = np.zeros_like(probs.data)
        gp[rows, target] = -g / (n * picked)
        return (gp,)

    return make(np.asarray(loss, dtype=probs.dtype), (probs,), back, "cross_entropy")


def mse(a, b):
    a, b = _pair(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"mse shapes {a.shape} vs {b.shape}")
    _check_finite(a.data, b.data)
    diff = a.data - b.data
    n = diff.size
    loss = np.mean(diff * diff)

    def back(g):
        ga = (2.0 / n) * g * diff
        return ga, -ga

    return make(np.asarray(loss, dtype=a.dtype), (a, b), back, "mse")
