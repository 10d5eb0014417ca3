"""Reverse-mode automatic differentiation over float64 arrays.

Every differentiable op links its output tensor to a :class:`Node` holding the
inputs and a vector-Jacobian product. Node ids come from one process-wide
counter, so an op's inputs always have smaller ids than the op itself; sorting
the nodes reachable from a loss by id therefore yields the tape (Wengert list)
in topological order, which :func:`trace` returns as a :class:`Graph`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

ABS_SUBGRADIENT_AT_ZERO = 0.0


class AutodiffError(Exception):
    """Base class for errors raised by the autodiff core."""


class ShapeError(AutodiffError, ValueError):
    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        shown = ", ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {shown}")


class DomainError(AutodiffError, ValueError):
    pass


class ContractError(AutodiffError, ValueError):
    pass


class Tensor:
    """Dense float64 array that may participate in a computation graph."""

    __slots__ = ("values", "requires_grad", "grad", "node", "name")

    def __init__(self, values, requires_grad: bool = False, name: str | None = None):
        arr = np.array(values, dtype=np.float64)
        self.values = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.node: Node | None = None  # None for leaves
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def numpy(self) -> np.ndarray:
        return self.values

    def item(self) -> float:
        return float(self.values)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar, all routed through the primitive set below
    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return negate(self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)


_node_ids = itertools.count()


@dataclass
class Node:
    id: int
    op: str
    inputs: tuple[Tensor, ...]
    vjp: Callable[[np.ndarray], Sequence[np.ndarray]]


@dataclass
class Graph:
    """Nodes reachable from one output, inputs always before their consumers."""

    nodes: list[Node] = field(default_factory=list)

    def __len__(self):
        return len(self.nodes)

    def ops(self) -> list[str]:
        return [n.op for n in self.nodes]


def trace(output: Tensor) -> Graph:
    seen: dict[int, Node] = {}
    stack = [output.node] if output.node is not None else []
    while stack:
        node = stack.pop()
        if node.id in seen:
            continue
        seen[node.id] = node
        stack.extend(t.node for t in node.inputs if t.node is not None and t.node.id not in seen)
    return Graph([seen[k] for k in sorted(seen)])


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(op, inputs, values, vjp) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.values = values
    out.grad = None
    out.name = None
    out.requires_grad = any(t.requires_grad for t in inputs)
    out.node = Node(next(_node_ids), op, tuple(inputs), vjp) if out.requires_grad else None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op, a: Tensor, b: Tensor):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# -- primitive ops ----------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    av, bv = a.values, b.values
    return _make("matmul", (a, b), av @ bv, lambda g: (g @ bv.T, av.T @ g))


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return _make("add", (a, b), a.values + b.values,
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return _make("sub", (a, b), a.values - b.values,
                 lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    """Elementwise product (broadcasting)."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    av, bv = a.values, b.values
    return _make("mul", (a, b), av * bv,
                 lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def negate(a) -> Tensor:
    a = as_tensor(a)
    return _make("negate", (a,), -a.values, lambda g: (-g,))


def scale(a, factor: float) -> Tensor:
    a = as_tensor(a)
    factor = float(factor)
    return _make("scale", (a,), factor * a.values, lambda g: (factor * g,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.values > 0
    return _make("relu", (a,), np.where(mask, a.values, 0.0), lambda g: (g * mask,))


def softmax_rows(a) -> Tensor:
    a = as_tensor(a)
    if a.values.ndim != 2:
        raise ShapeError("softmax-rows", a.shape)
    z = a.values - a.values.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return _make("softmax-rows", (a,), p, vjp)


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.values <= 0):
        raise DomainError(f"log: input has non-positive entries (min {a.values.min()!r})")
    av = a.values
    return _make("log", (a,), np.log(av), lambda g: (g / av,))


def clip_min(a, floor: float) -> Tensor:
    """max(a, floor) elementwise; gradient passes only where a > floor."""
    a = as_tensor(a)
    keep = a.values > floor
    return _make("clip-min", (a,), np.where(keep, a.values, floor), lambda g: (g * keep,))


def abs(a) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    sign = np.sign(a.values)
    sign[a.values == 0] = ABS_SUBGRADIENT_AT_ZERO
    return _make("abs", (a,), np.abs(a.values), lambda g: (g * sign,))


def sum(a, axis: int | None = None) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    shape = a.shape
    if axis is None:
        return _make("sum", (a,), np.asarray(a.values.sum()),
                     lambda g: (np.broadcast_to(g, shape).copy(),))
    out = a.values.sum(axis=axis)
    return _make("sum", (a,), out,
                 lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),))


def mean(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else a.shape[axis]
    if count == 0:
        raise ShapeError("mean", a.shape)
    return scale(sum(a, axis=axis), 1.0 / count)


def forward_op(kind: str, *inputs, **kwargs) -> Tensor:
    """Dispatch a primitive by name, e.g. ``forward_op("relu", x)``."""
    try:
        fn = OPS[kind]
    except KeyError:
        raise ContractError(f"unknown op kind {kind!r}") from None
    return fn(*inputs, **kwargs)


OPS = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "mul": mul,
    "negate": negate,
    "scale": scale,
    "relu": relu,
    "softmax-rows": softmax_rows,
    "log": log,
    "clip-min": clip_min,
    "abs": abs,
    "mean": mean,
    "sum": sum,
}


# -- gradients and parameters ----------------------------------------------

@dataclass
class ParamBlock:
    """Named group of parameter tensors that is frozen or trained as a unit."""

    name: str
    tensors: list[Tensor]
    trainable: bool = True

    def __iter__(self):
        return iter(self.tensors)

    def snapshot(self) -> list[np.ndarray]:
        return [t.values.copy() for t in self.tensors]

    def matches(self, snapshot: list[np.ndarray]) -> bool:
        """Bit-for-bit comparison against an earlier :meth:`snapshot`."""
        return all(
            t.values.shape == s.shape and t.values.tobytes() == s.tobytes()
            for t, s in zip(self.tensors, snapshot)
        )


Gradients = dict  # Tensor -> np.ndarray, keyed by identity


def backward(loss: Tensor, params: Iterable[ParamBlock] = ()) -> Gradients:
    """Backpropagate from a scalar ``loss``.

    Returns a map from every leaf tensor that requires grad (and every tensor
    of ``params``) to its gradient; leaves the loss does not reach get zeros.
    Leaf ``.grad`` attributes are overwritten, not accumulated.
    """
    if loss.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")

    grads: Gradients = {}
    for block in params:
        for t in block.tensors:
            grads[t] = np.zeros_like(t.values)

    if loss.node is None:
        if loss.requires_grad:
            grads[loss] = np.ones_like(loss.values)
    else:
        adjoint: dict[int, np.ndarray] = {loss.node.id: np.ones_like(loss.values)}
        leaves: dict[int, tuple[Tensor, np.ndarray]] = {}
        for node in reversed(trace(loss).nodes):
            g_out = adjoint.pop(node.id, None)
            if g_out is None:
                continue
            for inp, g_in in zip(node.inputs, node.vjp(g_out)):
                if not inp.requires_grad:
                    continue
                if inp.node is not None:
                    prev = adjoint.get(inp.node.id)
                    adjoint[inp.node.id] = g_in if prev is None else prev + g_in
                else:
                    prev = leaves.get(id(inp))
                    leaves[id(inp)] = (inp, g_in if prev is None else prev[1] + g_in)
        for t, g in leaves.values():
            grads[t] = np.asarray(g, dtype=np.float64).reshape(t.shape)

    for t, g in grads.items():
        t.grad = g
    return grads


def sgd_step(params: Iterable[ParamBlock], grads: Gradients, lr: float) -> None:
    """In-place ``value -= lr * grad`` for each trainable block."""
    if not lr >= 0:
        raise ContractError(f"sgd_step: learning rate must be nonnegative, got {lr!r}")
    for block in params:
        if not block.trainable:
            continue
        for t in block.tensors:
            g = grads.get(t)
            if g is None:
                continue
            if g.shape != t.shape:
                raise ContractError(
                    f"sgd_step: gradient shape {g.shape} != parameter shape {t.shape}"
                    f" in block {block.name!r}"
                )
            if lr:
                t.values -= lr * g
