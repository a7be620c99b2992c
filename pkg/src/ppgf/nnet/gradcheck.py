"""Central finite-difference check of analytic gradients."""

from __future__ import annotations

import numpy as np

from ..errors import NonFiniteError
from .tensor import backward


def grad_check(model_fn, params, eps=1e-5, exclude=None, return_details=False):
    """Worst relative error between backprop and central differences.

    ``model_fn()`` must rebuild the forward pass and return a scalar loss
    Tensor. ``params`` is an iterable of Parameters (64-bit recommended).
    ``exclude(param, index)`` can veto coordinates, e.g. those sitting on a
    ReLU kink. The relative error of one coordinate is
    ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    loss = model_fn()
    backward(loss)
    analytic = {p.name: p.grad.copy() for p in params}

    worst = 0.0
    details = {}
    for p in params:
        flat = p.data.reshape(-1)
        g_flat = analytic[p.name].reshape(-1)
        p_worst = 0.0
        for i in range(flat.size):
            idx = np.unravel_index(i, p.shape)
            if exclude is not None and exclude(p, idx):
                continue
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(model_fn().data)
            flat[i] = orig - eps
            f_minus = float(model_fn().data)
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NonFiniteError(f"non-finite loss while perturbing {p.name}{idx}")
            numeric = (f_plus - f_minus) / (2 * eps)
            a = float(g_flat[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            p_worst = max(p_worst, err)
        details[p.name] = p_worst
        worst = max(worst, p_worst)
    if return_details:
        return worst, details
    return worst
