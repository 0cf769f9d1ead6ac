"""Tensor, Parameter and the reverse-mode Tape.

Operations record themselves on the innermost active :class:`Tape`.
Outside any tape nothing is recorded, which is how inference runs:
read-only and safe to share between threads.
"""

from __future__ import annotations

import threading

import numpy as np

_local = threading.local()


def _tape_stack():
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "__weakref__")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; the implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, key):
        from . import ops
        return ops.getitem(self, key)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def sum(self, axis=None):
        from . import ops
        return ops.sum(self, axis)


class Parameter(Tensor):
    """A named trainable tensor carrying optimizer slots in ``state``."""

    __slots__ = ("name", "state")

    def __init__(self, name, data):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.state = {}

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"

    def zero_grad(self):
        self.grad = None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("out", "parents", "backward")

    def __init__(self, out, parents, backward):
        self.out = out
        self.parents = parents
        self.backward = backward


class Tape:
    """Ordered record of executed operations.

    Used as a context manager around a forward pass; :meth:`backward`
    then replays the record in exact reverse order, accumulating
    gradients additively into every tensor that requires them.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise RuntimeError("tape stack corrupted")
        stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, out: Tensor, parents, backward) -> None:
        self.nodes.append(_Node(out, tuple(parents), backward))

    def backward(self, loss: Tensor, grad=None) -> None:
        if grad is None:
            if loss.data.size != 1:
                raise ValueError("backward needs an explicit gradient for non-scalar outputs")
            grad = np.ones_like(loss.data)
        _accumulate(loss, np.asarray(grad, dtype=np.float64))
        for node in reversed(self.nodes):
            g = node.out.grad
            if g is None:
                continue
            grads = node.backward(g)
            for p, pg in zip(node.parents, grads):
                if pg is not None and p.requires_grad:
                    _accumulate(p, pg)


def _accumulate(t: Tensor, g) -> None:
    if g.shape != t.data.shape:
        raise ValueError(f"gradient shape {g.shape} does not match tensor {t.data.shape}")
    t.grad = g if t.grad is None else t.grad + g


def make_result(data, parents, backward) -> Tensor:
    """Wrap an op's output and record it if any parent needs a gradient."""
    tape = active_tape()
    needs = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs)
    if needs:
        tape.record(out, parents, backward)
    return out
