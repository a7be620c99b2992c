"""Tape-based reverse-mode automatic differentiation over numpy arrays.

Each operation returns a new :class:`Tensor` that remembers its parents and
a closure mapping the upstream gradient to one gradient per parent.
:func:`backward` walks the recorded graph in reverse topological order and
accumulates into the ``grad`` buffers of :class:`Parameter` leaves.
"""

from __future__ import annotations

import numpy as np

from ..errors import BackwardError, NonFiniteError, ShapeError


class Tensor:
    __slots__ = ("data", "parents", "backward_fn", "requires_grad", "op")

    def __init__(self, data, parents=(), backward_fn=None, op="leaf"):
        self.data = np.asarray(data)
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = any(p.requires_grad for p in parents)
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape}, dtype={self.dtype})"

    # operator sugar; definitions live in ops.py
    def __add__(self, other):
        from .ops import add
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from .ops import sub
        return sub(self, other)

    def __rsub__(self, other):
        from .ops import sub
        return sub(other, self)

    def __mul__(self, other):
        from .ops import mul
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from .ops import mul
        return mul(self, -1.0)

    def __matmul__(self, other):
        from .ops import matmul
        return matmul(self, other)

    def __getitem__(self, idx):
        from .ops import getitem
        return getitem(self, idx)


class Parameter(Tensor):
    """A trainable leaf with a persistent gradient buffer."""

    __slots__ = ("name", "grad")

    def __init__(self, name, value):
        super().__init__(np.array(value, copy=True))
        self.name = name
        self.requires_grad = True
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad[...] = 0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self.dtype})"


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    return Tensor(arr)


def make(data, parents, backward_fn, op):
    """Build an op output, enforcing the finite-values contract."""
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values produced by {op}")
    out = Tensor(data, tuple(parents), backward_fn, op)
    if not out.requires_grad:
        out.parents = ()
        out.backward_fn = None
    return out


def _toposort(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Accumulate d(loss)/d(p) into ``p.grad`` for every reachable Parameter.

    The tape is consumed: calling backward twice on the same graph raises.
    """
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise ShapeError("backward expects a scalar Tensor")
    if isinstance(loss, Parameter):
        loss.grad += 1
        return
    if loss.backward_fn is None:
        raise BackwardError("no recorded forward computation to differentiate")
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_toposort(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if isinstance(node, Parameter):
            node.grad += g
            continue
        if node.backward_fn is None:
            continue
        parent_grads = node.backward_fn(g)
        for p, pg in zip(node.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
        node.parents = ()
        node.backward_fn = None
