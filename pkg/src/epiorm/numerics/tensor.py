"""Dense tensors with reverse-mode differentiation recorded on an explicit tape."""

from __future__ import annotations

import contextlib

import numpy as np

PRECISIONS = {"single": np.float32, "double": np.float64}

_TAPES = []


class Tensor:
    """A numpy array plus an optional gradient accumulator.

    Tensors with ``requires_grad`` set are leaves the tape differentiates
    with respect to; op outputs inherit the flag from their inputs.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "produced")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype)
        if not np.issubdtype(self.data.dtype, np.floating):
            self.data = self.data.astype(np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self.produced = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # operator sugar; implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


def as_tensor(x, dtype=None):
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


class Tape:
    """Records ops in execution order; :meth:`backward` replays them in reverse.

    Execution order is a topological order of the graph, so the reverse
    visits every node once after all of its consumers.

    Example::

        with Tape() as tape:
            loss = ops.mae_loss(model(x), y)
        tape.backward(loss)
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.remove(self)
        return False

    def record(self, out, inputs, backward):
        out.produced = True
        self.nodes.append((out, inputs, backward))

    def backward(self, loss, grad=None):
        if grad is None:
            if loss.data.size != 1:
                raise ValueError("backward from a non-scalar needs an explicit seed gradient")
            grad = np.ones_like(loss.data)
        # intermediate gradients live here; only leaves keep .grad afterwards
        grads = {id(loss): np.asarray(grad, dtype=loss.dtype)}
        for out, inputs, fn in reversed(self.nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for t, gi in zip(inputs, fn(g)):
                if gi is None or not t.requires_grad:
                    continue
                if not t.produced:
                    t.grad = gi.copy() if t.grad is None else t.grad + gi
                else:
                    key = id(t)
                    grads[key] = gi if key not in grads else grads[key] + gi
        self.nodes.clear()


def active_tape():
    return _TAPES[-1] if _TAPES else None


@contextlib.contextmanager
def no_grad():
    """Suspend recording (ops run on plain arrays)."""
    saved = list(_TAPES)
    _TAPES.clear()
    try:
        yield
    finally:
        _TAPES.extend(saved)
