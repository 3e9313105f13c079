"""Reverse-mode automatic differentiation over numpy arrays.

A small tape: every operation returns a :class:`Tensor` that remembers its
parents and a closure mapping the output gradient to parent gradients.
``backward`` walks the tape once in reverse topological order, accumulating
parent gradients in a fixed traversal order, so gradients are deterministic
for a deterministically built graph.

Only the operations needed by the field network and its losses exist here.
All heavy lifting stays in BLAS-backed numpy calls; the tape itself adds a
handful of Python objects per op.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "constant",
    "backward",
    "matmul",
    "transpose",
    "sin",
    "cos",
    "exp",
    "log",
    "sqrt",
    "absolute",
    "square",
    "relu",
    "reduce_sum",
    "reduce_mean",
    "concat",
    "take_rows",
    "take_pairs",
]


class Tensor:
    """An ndarray plus the bookkeeping needed for reverse-mode differentiation.

    ``_vjp(grad_out)`` returns one gradient per entry of ``_parents`` (``None``
    for parents that need no gradient). Leaf tensors carry no closure.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False, _parents=(), _vjp=None):
        if isinstance(data, np.ndarray):
            self.data = data
        elif isinstance(data, np.generic):  # numpy scalar: keep its dtype
            self.data = np.asarray(data)
        else:
            self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._vjp = _vjp

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- operator sugar ------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, _neg_operand(other, self.dtype))

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return _getitem(self, key)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"


def constant(data, dtype=None) -> Tensor:
    """A leaf tensor that never receives a gradient."""
    return Tensor(np.asarray(data, dtype=dtype) if dtype is not None else np.asarray(data))


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _neg_operand(x, dtype):
    if isinstance(x, Tensor):
        return neg(x)
    return Tensor(-np.asarray(x, dtype=dtype))


def _node(data, parents, vjp) -> Tensor:
    """Build an op node; constant-only inputs yield a leaf (no graph retained).

    Inference-sized batches would otherwise pin every intermediate activation
    in memory through the parent links."""
    if any(p.requires_grad for p in parents):
        return Tensor(data, _parents=parents, _vjp=vjp)
    return Tensor(data)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- arithmetic --------------------------------------------------------


def add(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a.dtype)
    out_data = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _node(out_data, (a, b), vjp)


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), lambda g: (-g,))


def mul(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a.dtype)
    out_data = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return _node(out_data, (a, b), vjp)


def div(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a.dtype)
    out_data = a.data / b.data

    def vjp(g):
        ga = _unbroadcast(g / b.data, a.data.shape)
        gb = _unbroadcast(-g * out_data / b.data, b.data.shape)
        return ga, gb

    return _node(out_data, (a, b), vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _node(out_data, (a, b), vjp)


def transpose(a: Tensor) -> Tensor:
    return _node(a.data.T, (a,), lambda g: (g.T,))


# -- elementwise -------------------------------------------------------


def sin(a: Tensor) -> Tensor:
    return _node(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


def cos(a: Tensor) -> Tensor:
    return _node(np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),))


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)
    return _node(out_data, (a,), lambda g: (g * out_data,))


def log(a: Tensor) -> Tensor:
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    out_data = np.sqrt(a.data)
    return _node(out_data, (a,), lambda g: (g / (2.0 * out_data),))


def absolute(a: Tensor) -> Tensor:
    # Subgradient 0 at exactly 0 (np.sign convention).
    return _node(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def square(a: Tensor) -> Tensor:
    return _node(a.data * a.data, (a,), lambda g: (g * (2.0 * a.data),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _node(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


# -- reductions and reshaping -----------------------------------------


def reduce_sum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    # np.sum over all axes yields a numpy scalar; keep it an ndarray of the
    # same dtype so downstream ops don't silently promote to float64
    out_data = np.asarray(a.data.sum(axis=axis, keepdims=keepdims), dtype=a.dtype)

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape),)

    return _node(out_data, (a,), vjp)


def reduce_mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        count = a.data.size
    else:
        count = a.data.shape[axis]
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def concat(tensors, axis=0) -> Tensor:
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(
            np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(tensors))
        )

    return _node(out_data, tuple(tensors), vjp)


def _getitem(a: Tensor, key) -> Tensor:
    out_data = a.data[key]

    def vjp(g):
        ga = np.zeros_like(a.data)
        ga[key] = g
        return (ga,)

    return _node(out_data, (a,), vjp)


def take_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows by integer index; backward scatter-adds (handles repeats)."""
    idx = np.asarray(idx)
    out_data = a.data[idx]

    def vjp(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return _node(out_data, (a,), vjp)


def take_pairs(a: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Gather ``a[rows[i], cols[i]]`` as a vector; backward scatter-adds."""
    out_data = a.data[rows, cols]

    def vjp(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, (rows, cols), g)
        return (ga,)

    return _node(out_data, (a,), vjp)


# -- backward pass -----------------------------------------------------


def _topo_order(root: Tensor) -> list:
    order = []
    seen = set()
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
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(leaf) into ``.grad`` of every reachable leaf.

    ``root`` must be scalar-shaped. Existing ``.grad`` values on the reachable
    subgraph are overwritten, not accumulated across calls.
    """
    if root.data.size != 1:
        raise ValueError(f"backward root must be scalar, got shape {root.data.shape}")
    order = _topo_order(root)
    grads = {id(root): np.ones_like(root.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is None:
            node.grad = g
            continue
        parent_grads = node._vjp(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            acc = grads.get(id(parent))
            # not in-place: vjp outputs may alias each other or node data
            grads[id(parent)] = pg if acc is None else acc + pg
    # leaves that were never reached keep grad=None
