"""Reverse-mode autodiff over float64 numpy arrays.

Every op records its parents and a closure that maps the output adjoint to
parent adjoint increments. Gradients are accumulated with ``+=`` in reverse
topological order, so summation order is fixed by the (deterministic) graph
construction order; repeated runs on identical inputs are bit-identical.

Subgradient conventions (chosen once, relied on by the models):
    relu'(0) = 0, leaky_relu at 0 uses the negative slope,
    sqrt'(0) = 0, and ``clamp_min`` passes gradient only where the input
    strictly exceeds the bound (ties follow the constant branch).
"""

from __future__ import annotations

import numpy as np


class NonFiniteError(FloatingPointError):
    """A forward computation produced NaN or infinity."""

    def __init__(self, stage: str):
        super().__init__(f"non-finite values produced at stage: {stage}")
        self.stage = stage


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum an adjoint over the axes numpy broadcasting introduced."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A float64 array plus the bookkeeping for reverse-mode gradients."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- graph construction -------------------------------------------------

    @classmethod
    def _from_op(cls, data, parents, backward) -> "Tensor":
        out = cls(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self, seed: np.ndarray | None = None):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if not self.requires_grad:
            return
        if seed is None:
            if self.data.size != 1:
                raise ValueError("backward() on a non-scalar needs a seed adjoint")
            seed = np.ones_like(self.data)

        # iterative topological sort (graphs can exceed the recursion limit)
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

        self._accumulate(np.asarray(seed, dtype=np.float64))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- shape helpers -------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))
        return Tensor._from_op(self.data + other.data, (self, other), backward)

    __radd__ = __add__

    def __sub__(self, other):
        other = as_tensor(other)
        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(-g, other.data.shape))
        return Tensor._from_op(self.data - other.data, (self, other), backward)

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        other = as_tensor(other)
        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))
        return Tensor._from_op(self.data * other.data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(
                    -g * self.data / (other.data * other.data), other.data.shape))
        return Tensor._from_op(self.data / other.data, (self, other), backward)

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __neg__(self):
        def backward(g):
            self._accumulate(-g)
        return Tensor._from_op(-self.data, (self,), backward)

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        def backward(g):
            self._accumulate(g * exponent * self.data ** (exponent - 1))
        return Tensor._from_op(self.data ** exponent, (self,), backward)

    def __matmul__(self, other):
        other = as_tensor(other)
        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(
                    np.matmul(g, np.swapaxes(other.data, -1, -2)), self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(
                    np.matmul(np.swapaxes(self.data, -1, -2), g), other.data.shape))
        return Tensor._from_op(np.matmul(self.data, other.data), (self, other), backward)

    # -- reductions ----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.data.shape).copy())
        return Tensor._from_op(self.data.sum(axis=axis, keepdims=keepdims),
                               (self,), backward)

    def mean(self, axis=None, keepdims: bool = False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def cumsum(self, axis: int = -1):
        def backward(g):
            flipped = np.flip(g, axis=axis)
            self._accumulate(np.flip(np.cumsum(flipped, axis=axis), axis=axis))
        return Tensor._from_op(np.cumsum(self.data, axis=axis), (self,), backward)

    def amax(self, axis: int):
        """Max-reduce along an axis; ties route gradient to the first maximum."""
        idx = np.argmax(self.data, axis=axis)
        out = np.take_along_axis(self.data, np.expand_dims(idx, axis),
                                 axis=axis).squeeze(axis)
        def backward(g):
            buf = np.zeros_like(self.data)
            np.put_along_axis(buf, np.expand_dims(idx, axis),
                              np.expand_dims(g, axis), axis=axis)
            self._accumulate(buf)
        return Tensor._from_op(out, (self,), backward)

    # -- elementwise nonlinearities -------------------------------------------

    def relu(self):
        mask = self.data > 0
        def backward(g):
            self._accumulate(g * mask)
        return Tensor._from_op(np.where(mask, self.data, 0.0), (self,), backward)

    def leaky_relu(self, slope: float = 0.01):
        mask = self.data > 0
        def backward(g):
            self._accumulate(g * np.where(mask, 1.0, slope))
        return Tensor._from_op(np.where(mask, self.data, slope * self.data),
                               (self,), backward)

    def exp(self):
        out_data = np.exp(self.data)
        def backward(g):
            self._accumulate(g * out_data)
        return Tensor._from_op(out_data, (self,), backward)

    def log(self):
        def backward(g):
            self._accumulate(g / self.data)
        return Tensor._from_op(np.log(self.data), (self,), backward)

    def sqrt(self):
        out_data = np.sqrt(self.data)
        def backward(g):
            # zero subgradient at 0 keeps rate gradients finite when an
            # upstream relu emits exactly zero power
            safe = np.where(out_data > 0.0, out_data, np.inf)
            self._accumulate(g * 0.5 / safe)
        return Tensor._from_op(out_data, (self,), backward)

    def cos(self):
        def backward(g):
            self._accumulate(-g * np.sin(self.data))
        return Tensor._from_op(np.cos(self.data), (self,), backward)

    def sin(self):
        def backward(g):
            self._accumulate(g * np.cos(self.data))
        return Tensor._from_op(np.sin(self.data), (self,), backward)

    def clamp_min(self, bound: float):
        """max(bound, x) elementwise; gradient passes only where x > bound."""
        mask = self.data > bound
        def backward(g):
            self._accumulate(g * mask)
        return Tensor._from_op(np.where(mask, self.data, bound), (self,), backward)

    # -- shape ops -------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        def backward(g):
            self._accumulate(g.reshape(old))
        return Tensor._from_op(self.data.reshape(shape), (self,), backward)

    def swapaxes(self, a: int, b: int):
        def backward(g):
            self._accumulate(np.swapaxes(g, a, b))
        return Tensor._from_op(np.swapaxes(self.data, a, b), (self,), backward)

    @property
    def T(self):
        return self.swapaxes(-1, -2)

    def expand_dims(self, axis: int):
        def backward(g):
            self._accumulate(np.squeeze(g, axis=axis))
        return Tensor._from_op(np.expand_dims(self.data, axis), (self,), backward)

    def __getitem__(self, idx):
        def backward(g):
            buf = np.zeros_like(self.data)
            buf[idx] += g
            self._accumulate(buf)
        return Tensor._from_op(self.data[idx], (self,), backward)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)
    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])
    return Tensor._from_op(np.concatenate([t.data for t in tensors], axis=axis),
                           tensors, backward)


def stack(tensors: list[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    def backward(g):
        parts = np.moveaxis(g, axis, 0)
        for t, part in zip(tensors, parts):
            if t.requires_grad:
                t._accumulate(part)
    return Tensor._from_op(np.stack([t.data for t in tensors], axis=axis),
                           tensors, backward)


def softmax(t: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax; the max shift is treated as a constant."""
    shifted = t - Tensor(t.data.max(axis=axis, keepdims=True))
    e = shifted.exp()
    return e / e.sum(axis=axis, keepdims=True)


_LN2 = float(np.log(2.0))


def log2(t: Tensor) -> Tensor:
    return t.log() * (1.0 / _LN2)
