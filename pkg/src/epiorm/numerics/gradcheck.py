"""Central finite-difference verification of tape gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Tape, Tensor, no_grad


def _project(out, weights):
    return float(np.sum(out.data * weights))


def finite_diff_check(op, inputs, h=1e-5, n_coords=64, rng=None, floor=1e-2):
    """Compare tape gradients of ``op(*inputs)`` with central differences.

    The scalar checked is ``sum(w * op(*inputs))`` for a fixed random ``w``,
    so ops with tensor outputs are covered. Every input (float64 arrays or
    tensors) is differentiated; up to ``n_coords`` coordinates per input are
    probed, all of them if the input is smaller.

    The error per coordinate is ``|a - n| / max(|a|, |n|, floor * gmax)``
    where ``gmax`` is the largest finite-difference magnitude seen, which
    keeps near-zero gradients from inflating the ratio. Returns the maximum.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    tensors = [Tensor(np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64),
                      requires_grad=True) for x in inputs]
    with Tape() as tape:
        out = op(*tensors)
    weights = rng.standard_normal(out.shape)
    tape.backward(out, grad=weights)
    pairs = []
    for t in tensors:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        flat = t.data.reshape(-1)
        k = min(n_coords, flat.size)
        for idx in rng.choice(flat.size, size=k, replace=False):
            orig = flat[idx]
            with no_grad():
                flat[idx] = orig + h
                fp = _project(op(*tensors), weights)
                flat[idx] = orig - h
                fm = _project(op(*tensors), weights)
            flat[idx] = orig
            pairs.append((analytic.reshape(-1)[idx], (fp - fm) / (2 * h)))
    if not pairs:
        return 0.0
    a, n = np.array(pairs).T
    gmax = max(np.abs(n).max(), np.abs(a).max(), 1e-12)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor * gmax)
    return float((np.abs(a - n) / denom).max())
