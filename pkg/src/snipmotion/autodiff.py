"""Small dense reverse-mode differentiation over numpy float64 arrays.

Each op returns a new :class:`Tensor` holding references to its inputs and a
closure mapping the output gradient to input gradients. :func:`backward`
walks that graph in reverse topological order.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

_DEBUG = False


class NonFiniteError(FloatingPointError):
    pass


def set_debug(flag: bool) -> None:
    """Raise :class:`NonFiniteError` as soon as any op produces NaN/Inf."""
    global _DEBUG
    _DEBUG = bool(flag)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_op")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, op={self._op})"

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    out = Tensor(data)
    if _DEBUG and not np.all(np.isfinite(out.data)):
        raise NonFiniteError(f"op {op!r} produced non-finite values")
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    out._op = op
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)), "mul")


def matmul(a, b) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs >= 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(a.data, -1, -2) @ g if b.requires_grad else None
        return (None if ga is None else _unbroadcast(ga, a.shape),
                None if gb is None else _unbroadcast(gb, b.shape))

    return _make(a.data @ b.data, (a, b), backward, "matmul")


def relu(x) -> Tensor:
    x = as_tensor(x)
    # subgradient at exactly 0 is 0
    on = x.data > 0
    return _make(np.where(on, x.data, 0.0), (x,), lambda g: (g * on,), "relu")


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def _is_basic(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (slice, int, type(Ellipsis))) or p is None for p in parts)


def getitem(x, index) -> Tensor:
    x = as_tensor(x)
    basic = _is_basic(index)

    def backward(g):
        out = np.zeros_like(x.data)
        if basic:
            out[index] = g
        else:
            np.add.at(out, index, g)
        return (out,)

    return _make(x.data[index], (x,), backward, "getitem")


def select_rows(x, rows) -> Tensor:
    """Gather rows (second-to-last axis).

    ``rows`` is either a 1-D index list shared by every leading slice, or a
    2-D ``(B, k)`` array choosing ``k`` rows per batch element; in the latter
    case a 2-D ``x`` is shared across the batch and a 3-D ``x`` is indexed
    per element. Gradients scatter-add back, so repeated rows accumulate.
    """
    x = as_tensor(x)
    rows = np.asarray(rows, dtype=np.int64)
    n = x.shape[-2] if x.ndim >= 2 else None
    if n is None:
        raise ValueError("select_rows needs a >= 2-D tensor")
    if rows.size and (rows.min() < 0 or rows.max() >= n):
        raise IndexError(f"row index out of range [0, {n})")
    if rows.ndim == 1:
        index = (Ellipsis, rows, slice(None))
    elif rows.ndim == 2 and x.ndim == 2:
        index = (rows,)
    elif rows.ndim == 2 and x.ndim == 3:
        if rows.shape[0] != x.shape[0]:
            raise ValueError(f"batch mismatch: rows {rows.shape} vs tensor {x.shape}")
        index = (np.arange(rows.shape[0])[:, None], rows)
    else:
        raise ValueError(f"unsupported rows {rows.shape} for tensor {x.shape}")

    def backward(g):
        out = np.zeros_like(x.data)
        np.add.at(out, index, g)
        return (out,)

    return _make(x.data[index], (x,), backward, "select_rows")


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _make(np.concatenate([t.data for t in ts], axis=axis), ts, backward, "concat")


def sum(x, axis=None) -> Tensor:  # noqa: A001
    x = as_tensor(x)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(np.sum(x.data, axis=axis), (x,), backward, "sum")


def mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis), 1.0 / count)


def norm(x, axis: int = -1) -> Tensor:
    """Euclidean norm along ``axis``; gradient at a zero vector is taken as 0."""
    x = as_tensor(x)
    n = np.sqrt(np.sum(x.data * x.data, axis=axis))

    def backward(g):
        nk = np.expand_dims(n, axis)
        safe = np.where(nk > 0, nk, 1.0)
        return (np.where(nk > 0, x.data / safe, 0.0) * np.expand_dims(g, axis),)

    return _make(n, (x,), backward, "norm")


def kron(a, b) -> Tensor:
    """Kronecker product of two matrices."""
    a, b = as_tensor(a), as_tensor(b)
    (p, q), (r, s) = a.shape, b.shape

    def backward(g):
        g4 = g.reshape(p, r, q, s)
        return (np.einsum("irjs,rs->ij", g4, b.data), np.einsum("irjs,ij->rs", g4, a.data))

    return _make(np.kron(a.data, b.data), (a, b), backward, "kron")


def _toposort(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
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


def backward(loss: Tensor, params: Iterable[Tensor] = ()) -> None:
    """Fill ``.grad`` of every leaf that requires grad with d loss / d leaf.

    Tensors in ``params`` that the loss does not reach get a zero gradient.
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
    for p in params:
        p.grad = np.zeros_like(p.data)
    if not loss.requires_grad:
        return
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_toposort(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


def first_nonfinite(root: Tensor) -> Tensor | None:
    """Earliest tensor (in evaluation order) feeding ``root`` with NaN/Inf values."""
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        stack.extend((p, False) for p in node._parents)
    for node in order:
        if not np.all(np.isfinite(node.data)):
            return node
    return None
