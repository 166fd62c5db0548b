"""Reverse-mode differentiation over numpy arrays.

Every :class:`Var` produced by an op while recording is enabled remembers its
parents and a closure mapping its output gradient to parent gradients.
Nodes carry a monotonically increasing id, so sorting a graph by id in
descending order is exactly reverse execution order; :func:`backward` visits
each reachable node once in that order.
"""

from __future__ import annotations

import contextlib
import itertools

import numpy as np

_ids = itertools.count()
_recording = True


@contextlib.contextmanager
def no_grad():
    global _recording
    prev, _recording = _recording, False
    try:
        yield
    finally:
        _recording = prev


def is_recording() -> bool:
    return _recording


class Var:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "_id")
    __array_priority__ = 100

    def __init__(self, value, requires_grad=False, dtype=None):
        arr = np.asarray(value, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        self.value = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self._id = next(_ids)

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def dtype(self):
        return self.value.dtype

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        return float(self.value.reshape(-1)[0]) if self.value.size == 1 else float("nan")

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = g
        else:
            self.grad = self.grad + g

    def __repr__(self):
        return f"Var(shape={self.shape}, dtype={self.dtype})"

    # operator sugar; implementations live in ops
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

    def __truediv__(self, other):
        from . import ops
        if isinstance(other, Var):
            raise TypeError("division by a Var is not supported")
        return ops.mul(self, 1.0 / other)

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


class Param(Var):
    """Trainable leaf with a name and a zero-initialised gradient."""

    __slots__ = ("name",)

    def __init__(self, name: str, value, dtype=np.float32):
        super().__init__(np.array(value, dtype=dtype), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.shape})"


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def make_node(value, parents, backward) -> Var:
    """Wrap an op result; records the edge only if some parent needs a gradient."""
    out = Var(value)
    if _recording and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def backward(root: Var, grad=None) -> None:
    if not root.requires_grad:
        return
    if grad is None:
        if root.value.size != 1:
            raise ValueError(f"backward from non-scalar output of shape {root.shape} needs a gradient")
        grad = np.ones_like(root.value)
    seen = {root._id: root}
    stack = [root]
    while stack:
        node = stack.pop()
        for p in node._parents:
            if p.requires_grad and p._id not in seen:
                seen[p._id] = p
                stack.append(p)
    order = sorted(seen.values(), key=lambda n: n._id, reverse=True)
    # intermediate grads are per-call; leaves (Params, user inputs) accumulate
    for n in order:
        if n._backward is not None:
            n.grad = None
    root._accumulate(np.asarray(grad, dtype=root.dtype))
    for n in order:
        if n._backward is None or n.grad is None:
            continue
        grads = n._backward(n.grad)
        for p, g in zip(n._parents, grads):
            if g is not None and p.requires_grad:
                p._accumulate(g)
