"""Composite layers built from the primitives in :mod:`ppgf.nnet.ops`.

Parameters are passed as plain mappings from short keys to Parameters, so a
model can register them under whatever dotted prefix it likes.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from . import ops
from .tensor import Parameter


def glorot(rng, fan_in, fan_out, shape, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class ParamBuilder:
    """Creates named, seeded Parameters and records them in a registry."""

    def __init__(self, registry, rng, dtype):
        self.registry = registry
        self.rng = rng
        self.dtype = dtype

    def _add(self, name, value):
        if name in self.registry:
            raise ValueError(f"duplicate parameter name {name!r}")
        p = Parameter(name, value)
        self.registry[name] = p
        return p

    def dense(self, prefix, n_in, n_out, bias=True):
        W = self._add(f"{prefix}.W", glorot(self.rng, n_in, n_out, (n_in, n_out), self.dtype))
        b = self._add(f"{prefix}.b", np.zeros(n_out, self.dtype)) if bias else None
        return {"W": W, "b": b}

    def conv(self, prefix, n_in, n_out, width):
        shape = (n_out, width, n_in)
        return {
            "W": self._add(f"{prefix}.W", glorot(self.rng, width * n_in, width * n_out, shape, self.dtype)),
            "b": self._add(f"{prefix}.b", np.zeros(n_out, self.dtype)),
        }

    def norm(self, prefix, d):
        return {
            "gain": self._add(f"{prefix}.gain", np.ones(d, self.dtype)),
            "shift": self._add(f"{prefix}.shift", np.zeros(d, self.dtype)),
        }

    def encoder(self, prefix, d, ffn_dim):
        p = {"ln1": self.norm(f"{prefix}.ln1", d)}
        # no key bias: it shifts every score of a query equally, the softmax
        # cancels it, and it would be a parameter with identically zero gradient
        for name in ("q", "k", "v", "o"):
            p[name] = self.dense(f"{prefix}.attn.{name}", d, d, bias=name != "k")
        p["ln2"] = self.norm(f"{prefix}.ln2", d)
        p["ff1"] = self.dense(f"{prefix}.ffn.1", d, ffn_dim)
        p["ff2"] = self.dense(f"{prefix}.ffn.2", ffn_dim, d)
        return p

    def grn(self, prefix, d, hidden):
        return {
            "fc1": self.dense(f"{prefix}.fc1", d, hidden),
            "fc2": self.dense(f"{prefix}.fc2", hidden, 2 * d),
            "ln": self.norm(f"{prefix}.ln", d),
        }


def positional_encoding(length, d, dtype=np.float64):
    """Fixed sinusoidal table (length×d): sin on even columns, cos on odd."""
    pos = np.arange(length)[:, None]
    i = np.arange(0, d, 2)
    angle = pos / np.power(10000.0, i / d)
    pe = np.zeros((length, d))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d // 2])
    return pe.astype(dtype)


def multi_head_attention(x, p, heads, return_weights=False):
    B, L, d = x.shape
    if d % heads:
        raise ShapeError(f"model dim {d} not divisible by {heads} heads")
    dh = d // heads

    def split(t):
        return ops.transpose(ops.reshape(t, (B, L, heads, dh)), (0, 2, 1, 3))

    q = split(ops.dense(x, p["q"]["W"], p["q"]["b"]))
    k = split(ops.dense(x, p["k"]["W"], p["k"]["b"]))
    v = split(ops.dense(x, p["v"]["W"], p["v"]["b"]))
    scores = ops.mul(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
    weights = ops.softmax(scores, axis=-1)
    ctx = ops.matmul(weights, v)
    ctx = ops.reshape(ops.transpose(ctx, (0, 2, 1, 3)), (B, L, d))
    out = ops.dense(ctx, p["o"]["W"], p["o"]["b"])
    if return_weights:
        return out, weights.data
    return out


def attention_encoder(x, p, heads, return_weights=False):
    """One pre-norm encoder block: x + MHSA(LN(x)), then + FFN(LN(.)).

    No positional information is added here; callers that want it add
    :func:`positional_encoding` to ``x`` first.
    """
    attn = multi_head_attention(
        ops.layer_norm(x, p["ln1"]["gain"], p["ln1"]["shift"]), p, heads, return_weights
    )
    if return_weights:
        attn, weights = attn
    x = ops.add(x, attn)
    hidden = ops.relu(ops.dense(ops.layer_norm(x, p["ln2"]["gain"], p["ln2"]["shift"]),
                                p["ff1"]["W"], p["ff1"]["b"]))
    x = ops.add(x, ops.dense(hidden, p["ff2"]["W"], p["ff2"]["b"]))
    if return_weights:
        return x, weights
    return x


def glu(a):
    half = a.shape[-1] // 2
    return ops.mul(a[..., :half], ops.sigmoid(a[..., half:]))


def grn(x, p):
    """Gated residual network: LayerNorm(x + GLU(W2 ELU(W1 x + b1) + b2))."""
    if x.shape[-1] != p["ln"]["gain"].shape[0]:
        raise ShapeError(f"grn: input width {x.shape[-1]} vs {p['ln']['gain'].shape[0]}")
    hidden = ops.elu(ops.dense(x, p["fc1"]["W"], p["fc1"]["b"]))
    gated = glu(ops.dense(hidden, p["fc2"]["W"], p["fc2"]["b"]))
    return ops.layer_norm(ops.add(x, gated), p["ln"]["gain"], p["ln"]["shift"])
