"""Tape-based reverse-mode automatic differentiation over float64 arrays.

A Tensor wraps a numpy array; operations record parents and a backward
closure, and Tensor.backward() runs the tape in reverse topological order.
Graph recording is skipped for tensors that do not require gradients and
inside no_grad() blocks, which keeps rollout collection cheap.
"""

from __future__ import annotations

import contextlib

import numpy as np

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


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self):
        """Accumulate gradients of this scalar into every reachable leaf."""
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, as_tensor(other))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, as_tensor(other))

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __pow__(self, exponent):
        return power(self, float(exponent))

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    def __getitem__(self, idx):
        return take(self, idx)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _accumulate(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g, dtype=np.float64)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original shape."""
    g = np.asarray(g, dtype=np.float64)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _node(data, parents, backward_fn) -> Tensor:
    requires = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires)
    if requires:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


# -- elementwise arithmetic ---------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g, b.data.shape))

    return _node(out_data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data - b.data

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _node(out_data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(out_data, (a, b), bwd)


def div(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data / b.data

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g * a.data / (b.data ** 2), b.data.shape))

    return _node(out_data, (a, b), bwd)


def power(a: Tensor, exponent: float) -> Tensor:
    out_data = a.data ** exponent

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, g * exponent * a.data ** (exponent - 1.0))

    return _node(out_data, (a,), bwd)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, g * out_data)

    return _node(out_data, (a,), bwd)


def log(a: Tensor) -> Tensor:
    out_data = np.log(a.data)

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, g / a.data)

    return _node(out_data, (a,), bwd)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, g * (1.0 - out_data ** 2))

    return _node(out_data, (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, g * out_data * (1.0 - out_data))

    return _node(out_data, (a,), bwd)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise minimum; the smaller branch receives the gradient."""
    out_data = np.minimum(a.data, b.data)
    a_wins = a.data <= b.data

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * a_wins, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * (~a_wins), b.data.shape))

    return _node(out_data, (a, b), bwd)


def clip(a: Tensor, low: float, high: float) -> Tensor:
    """Clamp to [low, high]; gradient flows only where unclamped."""
    out_data = np.clip(a.data, low, high)
    inside = (a.data >= low) & (a.data <= high)

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, g * inside)

    return _node(out_data, (a,), bwd)


# -- shape and reduction ------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data @ b.data

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape))

    return _node(out_data, (a, b), bwd)


def tensor_sum(a: Tensor, axis=None) -> Tensor:
    out_data = a.data.sum(axis=axis)

    def bwd(g):
        if a.requires_grad:
            if axis is None:
                _accumulate(a, np.broadcast_to(g, a.data.shape).astype(np.float64))
            else:
                _accumulate(a, np.broadcast_to(np.expand_dims(g, axis), a.data.shape).astype(np.float64))

    return _node(out_data, (a,), bwd)


def mean(a: Tensor, axis=None) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    return tensor_sum(a, axis=axis) * (1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    out_data = a.data.reshape(shape)

    def bwd(g):
        if a.requires_grad:
            _accumulate(a, g.reshape(a.data.shape))

    return _node(out_data, (a,), bwd)


def take(a: Tensor, idx) -> Tensor:
    out_data = a.data[idx]

    def bwd(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            _accumulate(a, full)

    return _node(out_data, (a,), bwd)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _accumulate(t, g[tuple(sl)])

    return _node(out_data, tuple(tensors), bwd)


# -- parameter registry --------------------------------------------------

class ParameterSet:
    """Named parameter tensors of one network.

    The name-to-shape registry is frozen after construction (freeze());
    values stay mutable for optimizer steps. A flat view packs every
    parameter into one vector, in registration order.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._frozen = False

    def register(self, name: str, data) -> Tensor:
        if self._frozen:
            raise RuntimeError("parameter registry is frozen")
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = parameter(np.asarray(data, dtype=np.float64))
        if not np.all(np.isfinite(t.data)):
            raise ValueError(f"non-finite initial values for {name!r}")
        self._params[name] = t
        return t

    def freeze(self):
        self._frozen = True

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self):
        return list(self._params.keys())

    def items(self):
        return self._params.items()

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def get_flat(self) -> np.ndarray:
        return np.concatenate([t.data.ravel() for t in self._params.values()])

    def set_flat(self, flat: np.ndarray):
        flat = np.asarray(flat, dtype=np.float64)
        offset = 0
        for t in self._params.values():
            size = t.data.size
            t.data = flat[offset:offset + size].reshape(t.data.shape).copy()
            offset += size
        if offset != flat.size:
            raise ValueError(f"flat vector has {flat.size} entries, expected {offset}")

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]):
        if set(arrays) != set(self._params):
            missing = set(self._params) - set(arrays)
            extra = set(arrays) - set(self._params)
            raise ValueError(f"parameter name mismatch: missing {missing}, unexpected {extra}")
        for name, t in self._params.items():
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != t.data.shape:
                raise ValueError(
                    f"shape mismatch for {name!r}: expected {t.data.shape}, found {value.shape}")
            t.data = value.copy()


def gradients(loss: Tensor, params: ParameterSet) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of a scalar loss for every named parameter."""
    params.zero_grad()
    loss.backward()
    return {name: (np.zeros_like(t.data) if t.grad is None else t.grad)
            for name, t in params.items()}
