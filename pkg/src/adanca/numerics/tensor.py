"""Tensor with reverse-mode differentiation.

A :class:`Tensor` wraps a NumPy array. Differentiable operations (see
:mod:`adanca.numerics.functional`) attach a ``_ctx`` record holding the parent
tensors and a closure mapping the output gradient to one gradient per parent.
:func:`backward` walks that graph once in reverse topological order.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class _Context:
    __slots__ = ("parents", "backward_fn", "op")

    def __init__(self, parents, backward_fn, op):
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op


class Tensor:
    """Dense float array plus autograd bookkeeping.

    Storage defaults to float32. Float64 inputs are preserved so that
    finite-difference checks can run the exact same code path at higher
    precision.
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype != np.float64:
            arr = arr.astype(np.float32, copy=False)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._ctx: _Context | None = None
        self._consumed = False

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dims(self) -> list[int]:
        return list(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self):
        return self.shape[0]

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        from . import functional as F
        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from . import functional as F
        return F.sub(other, self)

    def __mul__(self, other):
        from . import functional as F
        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import functional as F
        return F.div(self, other)

    def __neg__(self):
        from . import functional as F
        return F.mul(self, -1.0)

    def __matmul__(self, other):
        from . import functional as F
        return F.matmul(self, other)

    def __pow__(self, exponent):
        from . import functional as F
        return F.power(self, exponent)

    def sum(self, axis=None, keepdims=False):
        from . import functional as F
        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import functional as F
        return F.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import functional as F
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes):
        from . import functional as F
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return F.transpose(self, axes)

    def backward(self, inputs=None):
        backward(self, inputs)


class Parameter(Tensor):
    """Leaf tensor that a :class:`~adanca.numerics.module.Module` owns and trains."""

    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(data: np.ndarray, parents: Sequence[Tensor],
                backward_fn: Callable[[np.ndarray], Sequence], op: str) -> Tensor:
    """Wrap ``data`` as an op output, recording the graph edge if needed."""
    out = Tensor(data, dtype=data.dtype)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._ctx = _Context(tuple(parents), backward_fn, op)
    return out


def _toposort(root: Tensor) -> list[Tensor]:
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
        if node._ctx is not None:
            for p in node._ctx.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
    return order


def backward(output: Tensor, inputs: Sequence[Tensor] | None = None) -> None:
    """Populate ``.grad`` of every leaf reachable from the scalar ``output``.

    Leaf gradients accumulate across calls until :meth:`Tensor.zero_grad`.
    With ``inputs`` only those leaves receive gradients and branches that do
    not lead to them are skipped. The recorded graph is released afterwards;
    calling this twice on the same output raises :class:`ContractError`.
    """
    if output.size != 1:
        raise ContractError(f"backward needs a scalar output, got shape {output.shape}")
    if output._consumed:
        raise ContractError("graph already consumed by a previous backward pass; rebuild it")
    if not output.requires_grad:
        raise ContractError("output does not depend on any tensor requiring grad")

    order = _toposort(output)
    wanted = None
    if inputs is not None:
        wanted = {id(t) for t in inputs}
        for node in order:  # inputs precede consumers in this order
            if node._ctx is not None and any(id(p) in wanted for p in node._ctx.parents):
                wanted.add(id(node))
    grads = {id(output): np.ones_like(output.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None or (wanted is not None and id(node) not in wanted):
            continue
        if node._ctx is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        parent_grads = node._ctx.backward_fn(g)
        for parent, pg in zip(node._ctx.parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if wanted is not None and id(parent) not in wanted:
                continue
            pg = np.asarray(pg, dtype=parent.data.dtype)
            if pg.shape != parent.shape:
                pg = pg.reshape(parent.shape)
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    for node in order:
        if node._ctx is not None:
            node._ctx = None
            node._consumed = True
