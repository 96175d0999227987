"""Small reverse-mode autodiff over numpy arrays.

Operations run eagerly. While a :class:`Tape` is active (``with Tape() as tape``)
every op whose inputs need gradients is appended to it, and
:func:`backward` walks the record in reverse. Outside a tape the same ops
are plain numpy computations with nothing recorded.

Broadcasting is deliberately narrow: identical shapes, a scalar against
anything, and a row vector ``(p,)``/``(1, p)`` against an ``(m, p)`` matrix
(needed for biases and centering).
"""
from __future__ import annotations

import contextvars
import weakref
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

DTYPE = np.float64

_active_tape: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar(
    "active_tape", default=None
)


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class Tensor:
    """A float64 array with an optional gradient slot."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._node: _Node | None = None
        self.is_leaf = True

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

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

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division is only supported by a constant")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def sum(self, axis: int | None = None) -> "Tensor":
        return reduce_sum(self, axis)

    def mean(self, axis: int | None = None) -> "Tensor":
        return reduce_mean(self, axis)

    def exp(self) -> "Tensor":
        return exp(self)

    def relu(self) -> "Tensor":
        return relu(self)

    def square(self) -> "Tensor":
        return square(self)

    def sigmoid(self) -> "Tensor":
        return sigmoid(self)


def _not_scalar(t: Tensor):
    raise ValueError(f"tensor of shape {t.shape} is not a scalar")


class _Node:
    __slots__ = ("out", "inputs", "vjp")

    def __init__(self, out: Tensor, inputs: Sequence[Tensor], vjp: Callable):
        # weak so that out -> node -> out is not a cycle; graphs then die with
        # their last reference instead of waiting for the cyclic collector
        self.out = weakref.ref(out)
        self.inputs = inputs
        self.vjp = vjp


class Tape:
    """Ordered record of executed ops; single owner, not thread-shared."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _active_tape.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.nodes)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, inputs: Sequence[Tensor], vjp: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._node = None
    out.is_leaf = False
    out.requires_grad = any(t.requires_grad for t in inputs)
    tape = _active_tape.get()
    if tape is not None and out.requires_grad:
        node = _Node(out, tuple(inputs), vjp)
        out._node = node
        tape.nodes.append(node)
    return out


# ---------------------------------------------------------------- broadcasting

def _broadcast_shape(a: np.ndarray, b: np.ndarray) -> tuple[int, ...]:
    if a.shape == b.shape:
        return a.shape
    if a.size == 1 and a.ndim <= b.ndim:
        return b.shape
    if b.size == 1 and b.ndim <= a.ndim:
        return a.shape
    for row, mat in ((a, b), (b, a)):
        if mat.ndim == 2 and row.ndim in (1, 2) and row.shape[-1] == mat.shape[1]:
            if row.ndim == 1 or row.shape[0] == 1:
                return mat.shape
    raise DimensionError(f"cannot broadcast shapes {a.shape} and {b.shape}")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if int(np.prod(shape)) == 1:
        return np.full(shape, grad.sum())
    # row vector against a matrix
    return grad.sum(axis=0).reshape(shape)


# ----------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.data, b.data)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.data, b.data)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.data, b.data)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def square(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return _make(ad * ad, (a,), lambda g: (2.0 * ad * g,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = expit(a.data)
    return _make(s, (a,), lambda g: (g * s * (1.0 - s),))


_ELEMENTWISE = {
    "add": add, "sub": sub, "mul": mul, "exp": exp, "neg": neg,
    "relu": relu, "square": square, "sigmoid": sigmoid,
}


def elementwise(op: str, *args) -> Tensor:
    """Dispatch an elementwise op by name."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


# -------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data

    def vjp(g):
        ga = g @ bd.T if a.requires_grad else None
        gb = ad.T @ g if b.requires_grad else None
        return ga, gb

    return _make(ad @ bd, (a, b), vjp)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose needs a matrix, got shape {a.shape}")
    return _make(a.data.T.copy(), (a,), lambda g: (g.T,))


def logdet(a) -> Tensor:
    """log|det A| for a square matrix with positive determinant."""
    a = as_tensor(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"logdet needs a square matrix, got shape {a.shape}")
    sign, val = np.linalg.slogdet(a.data)
    if sign <= 0:
        raise np.linalg.LinAlgError("logdet of a matrix with non-positive determinant")
    inv_t = np.linalg.inv(a.data).T
    return _make(np.array(val), (a,), lambda g: (g * inv_t,))


def trace(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"trace needs a square matrix, got shape {a.shape}")
    n = a.shape[0]
    return _make(np.array(np.trace(a.data)), (a,), lambda g: (g * np.eye(n),))


# ------------------------------------------------------------------ reductions

def _check_axis(t: Tensor, axis: int | None) -> None:
    if axis is not None and not (0 <= axis < t.ndim):
        raise ValueError(f"axis {axis} out of range for tensor of rank {t.ndim}")


def reduce_sum(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    _check_axis(a, axis)
    shape = a.shape

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _make(np.asarray(a.data.sum(axis=axis)), (a,), vjp)


def reduce_mean(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    _check_axis(a, axis)
    count = a.size if axis is None else a.shape[axis]
    return reduce_sum(a, axis) * (1.0 / count)


def reduce(op: str, t, axis: int | None = None) -> Tensor:
    if op == "sum":
        return reduce_sum(t, axis)
    if op == "mean":
        return reduce_mean(t, axis)
    raise ValueError(f"unknown reduction {op!r}")


# ------------------------------------------------------------------- distances

def pairwise_sq_dists(a, b) -> Tensor:
    """Squared Euclidean distances between rows of ``a`` (m×d) and ``b`` (n×d).

    Uses the norm expansion and clamps negatives to zero. When ``a is b`` the
    diagonal is set to exactly zero.
    """
    same = a is b
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionError(f"pairwise_sq_dists shape mismatch: {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data
    na = np.einsum("ij,ij->i", ad, ad)
    nb = na if same else np.einsum("ij,ij->i", bd, bd)
    raw = na[:, None] + nb[None, :] - 2.0 * (ad @ bd.T)
    live = raw > 0
    if same:
        np.fill_diagonal(live, False)
    out = np.where(live, raw, 0.0)

    def vjp(g):
        g = g * live
        ga = 2.0 * (g.sum(axis=1)[:, None] * ad - g @ bd)
        gb = 2.0 * (g.sum(axis=0)[:, None] * bd - g.T @ ad)
        return ga, gb

    return _make(out, (a, b), vjp)


# -------------------------------------------------------------------- backward

def backward(tape: Tape, loss: Tensor) -> None:
    """Populate ``.grad`` on every trainable leaf reached from ``loss``.

    Leaf gradients are overwritten, not accumulated across calls.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._node is None:
        if loss.is_leaf and loss.requires_grad:
            loss.grad = np.ones_like(loss.data)
            return
        raise ValueError("loss was not produced under this tape")
    if not tape.nodes or not any(n is loss._node for n in reversed(tape.nodes)):
        raise ValueError("loss was not produced under this tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    stop = next(i for i in range(len(tape.nodes) - 1, -1, -1) if tape.nodes[i] is loss._node)
    for node in reversed(tape.nodes[: stop + 1]):
        out = node.out()
        g = None if out is None else grads.pop(id(out), None)
        if g is None:
            continue
        for t, gi in zip(node.inputs, node.vjp(g)):
            if not t.requires_grad:
                continue
            if t._node is None:
                leaves[id(t)] = t
            if gi is None:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    for key, leaf in leaves.items():
        g = grads.get(key)
        leaf.grad = np.zeros_like(leaf.data) if g is None else np.asarray(g, dtype=DTYPE).reshape(leaf.shape)
