"""Dense float64 tensors with a small tape-based reverse-mode autodiff.

Values are plain ``numpy`` arrays.  A :class:`Graph` records every operation
as a :class:`Node` (kind, parents, cached value) in creation order, which is
also a topological order.  ``Graph.backward`` walks that list once in reverse.

Gradients can be requested for any node created with ``requires_grad=True``,
including model *inputs*, which is what inference-time guidance needs.
Constants never receive gradients.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf from its inputs."""


def _as_array(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("non-finite value supplied to graph")
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Node:
    __slots__ = ("graph", "id", "kind", "parents", "attrs", "value", "requires_grad")

    def __init__(self, graph, id_, kind, parents, attrs, value, requires_grad):
        self.graph = graph
        self.id = id_
        self.kind = kind
        self.parents = parents
        self.attrs = attrs
        self.value = value
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Node(id={self.id}, kind={self.kind!r}, shape={self.shape})"

    # operator sugar; python scalars / arrays become constants
    def _lift(self, other) -> "Node":
        if isinstance(other, Node):
            if other.graph is not self.graph:
                raise ValueError("operands belong to different graphs")
            return other
        return self.graph.constant(other)

    def __add__(self, other):
        return self.graph.apply("add", self, self._lift(other))

    def __radd__(self, other):
        return self.graph.apply("add", self._lift(other), self)

    def __sub__(self, other):
        return self.graph.apply("sub", self, self._lift(other))

    def __rsub__(self, other):
        return self.graph.apply("sub", self._lift(other), self)

    def __mul__(self, other):
        return self.graph.apply("mul", self, self._lift(other))

    def __rmul__(self, other):
        return self.graph.apply("mul", self._lift(other), self)

    def __truediv__(self, other):
        return self.graph.apply("div", self, self._lift(other))

    def __rtruediv__(self, other):
        return self.graph.apply("div", self._lift(other), self)

    def __neg__(self):
        return self.graph.apply("mul", self, self.graph.constant(-1.0))

    def __matmul__(self, other):
        return self.graph.apply("matmul", self, self._lift(other))

    def __rmatmul__(self, other):
        return self.graph.apply("matmul", self._lift(other), self)

    def __getitem__(self, index):
        return self.graph.apply("slice", self, index=index)


# -- op table ---------------------------------------------------------------
# each entry: forward(values, attrs) -> array
#             backward(grad_out, values, out_value, attrs) -> list of parent grads

def _matmul_forward(vals, attrs):
    if vals[0].ndim < 2 or vals[1].ndim < 2:
        raise ValueError("matmul requires operands with ndim >= 2")
    return np.matmul(vals[0], vals[1])


def _matmul_backward(g, vals, out, attrs, needs=(True, True)):
    a, b = vals
    ga = gb = None
    if needs[0]:
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b, -1, -2)), a.shape)
    if needs[1]:
        if b.ndim == 2 and g.ndim > 2:
            # shared weight: collapse leading axes into one gemm
            gb = a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = _unbroadcast(np.matmul(np.swapaxes(a, -1, -2), g), b.shape)
    return [ga, gb]


def _concat_forward(vals, attrs):
    return np.concatenate(vals, axis=attrs["axis"])


def _concat_backward(g, vals, out, attrs):
    axis = attrs["axis"]
    sizes = np.cumsum([v.shape[axis] for v in vals])[:-1]
    return np.split(g, sizes, axis=axis)


def _slice_backward(g, vals, out, attrs):
    full = np.zeros_like(vals[0])
    full[attrs["index"]] += g
    return [full]


def _sum_forward(vals, attrs):
    return np.sum(vals[0], axis=attrs.get("axis"), keepdims=attrs.get("keepdims", False))


def _sum_backward(g, vals, out, attrs):
    x = vals[0]
    axis = attrs.get("axis")
    if axis is not None and not attrs.get("keepdims", False):
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(a % x.ndim for a in axes)
        g = np.expand_dims(g, axes)
    return [np.broadcast_to(g, x.shape).copy()]


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


_OPS: dict[str, tuple[Callable, Callable]] = {
    "add": (
        lambda v, a: v[0] + v[1],
        lambda g, v, o, a: [_unbroadcast(g, v[0].shape), _unbroadcast(g, v[1].shape)],
    ),
    "sub": (
        lambda v, a: v[0] - v[1],
        lambda g, v, o, a: [_unbroadcast(g, v[0].shape), _unbroadcast(-g, v[1].shape)],
    ),
    "mul": (
        lambda v, a: v[0] * v[1],
        lambda g, v, o, a: [_unbroadcast(g * v[1], v[0].shape), _unbroadcast(g * v[0], v[1].shape)],
    ),
    "div": (
        lambda v, a: v[0] / v[1],
        lambda g, v, o, a: [
            _unbroadcast(g / v[1], v[0].shape),
            _unbroadcast(-g * o / v[1], v[1].shape),
        ],
    ),
    "matmul": (_matmul_forward, _matmul_backward),
    "concat": (_concat_forward, _concat_backward),
    "slice": (lambda v, a: v[0][a["index"]].copy(), _slice_backward),
    "sum": (_sum_forward, _sum_backward),
    "mse": (
        lambda v, a: np.mean((v[0] - v[1]) ** 2),
        lambda g, v, o, a: [
            g * 2.0 * (v[0] - v[1]) / v[0].size,
            -g * 2.0 * (v[0] - v[1]) / v[0].size,
        ],
    ),
    "mae": (
        lambda v, a: np.mean(np.abs(v[0] - v[1])),
        lambda g, v, o, a: [
            g * np.sign(v[0] - v[1]) / v[0].size,
            -g * np.sign(v[0] - v[1]) / v[0].size,
        ],
    ),
    "abs": (lambda v, a: np.abs(v[0]), lambda g, v, o, a: [g * np.sign(v[0])]),
    "sqrt": (lambda v, a: np.sqrt(v[0]), lambda g, v, o, a: [g * 0.5 / o]),
    "tanh": (lambda v, a: np.tanh(v[0]), lambda g, v, o, a: [g * (1.0 - o * o)]),
    "silu": (
        lambda v, a: v[0] * _sigmoid(v[0]),
        lambda g, v, o, a: [g * (_sigmoid(v[0]) * (1.0 + v[0] * (1.0 - _sigmoid(v[0]))))],
    ),
    "sin": (lambda v, a: np.sin(v[0]), lambda g, v, o, a: [g * np.cos(v[0])]),
    "cos": (lambda v, a: np.cos(v[0]), lambda g, v, o, a: [-g * np.sin(v[0])]),
}

LEAF_KINDS = ("input", "constant")


class Graph:
    """An append-only tape of operations.

    Nodes are evaluated eagerly as they are added, so building the graph is
    the first forward pass.  :meth:`forward` re-evaluates every non-leaf node
    after leaf values were replaced with :meth:`set_value`.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    # -- construction -------------------------------------------------------
    def _add(self, kind, parents, attrs, value, requires_grad) -> Node:
        node = Node(self, len(self.nodes), kind, parents, attrs, value, requires_grad)
        self.nodes.append(node)
        return node

    def input(self, value, requires_grad: bool = True) -> Node:
        return self._add("input", (), {}, _as_array(value), requires_grad)

    def constant(self, value) -> Node:
        return self._add("constant", (), {}, _as_array(value), False)

    def apply(self, kind: str, *parents: Node, **attrs) -> Node:
        try:
            fwd, _ = _OPS[kind]
        except KeyError:
            raise ValueError(f"unsupported operation {kind!r}") from None
        for p in parents:
            if p.graph is not self:
                raise ValueError("operands belong to different graphs")
        value = self._evaluate(kind, [p.value for p in parents], attrs)
        requires_grad = any(p.requires_grad for p in parents)
        return self._add(kind, tuple(parents), attrs, value, requires_grad)

    @staticmethod
    def _evaluate(kind, values, attrs) -> np.ndarray:
        fwd, _ = _OPS[kind]
        try:
            with np.errstate(all="ignore"):
                out = np.asarray(fwd(values, attrs), dtype=np.float64)
        except ValueError as exc:
            shapes = [v.shape for v in values]
            raise ValueError(f"{kind}: incompatible operand shapes {shapes}") from exc
        if not np.all(np.isfinite(out)):
            raise NonFiniteError(f"{kind} produced a non-finite value")
        return out

    # -- evaluation ---------------------------------------------------------
    def set_value(self, node: Node, value) -> None:
        if node.kind not in LEAF_KINDS:
            raise ValueError("only leaf nodes can be assigned")
        value = _as_array(value)
        if value.shape != node.value.shape:
            raise ValueError(f"shape mismatch: {value.shape} vs {node.value.shape}")
        node.value = value

    def forward(self, output: Node | None = None) -> np.ndarray:
        for node in self.nodes:
            if node.kind in LEAF_KINDS:
                continue
            node.value = self._evaluate(node.kind, [p.value for p in node.parents], node.attrs)
        out = output if output is not None else self.nodes[-1]
        return out.value

    def backward(self, roots: Iterable[Node], output: Node | None = None) -> dict[int, np.ndarray]:
        """Return d(output)/d(root) for each requested root, keyed by node id.

        ``output`` defaults to the last node and must be scalar.
        """
        out = output if output is not None else self.nodes[-1]
        if out.value.size != 1:
            raise ValueError(f"backward needs a scalar output, got shape {out.shape}")
        roots = list(roots)
        for r in roots:
            if r.graph is not self or r.id >= len(self.nodes) or self.nodes[r.id] is not r:
                raise ValueError(f"root {r!r} is not part of this graph")
            if not r.requires_grad:
                raise ValueError(f"root {r!r} is a constant; no gradient is defined")

        keep = {r.id for r in roots} | {out.id}
        grads: dict[int, np.ndarray] = {out.id: np.ones_like(out.value)}
        for node in reversed(self.nodes[: out.id + 1]):
            g = grads.get(node.id)
            if g is None or node.kind in LEAF_KINDS:
                continue
            _, bwd = _OPS[node.kind]
            values = [p.value for p in node.parents]
            with np.errstate(all="ignore"):
                if node.kind == "matmul":
                    needs = tuple(p.requires_grad for p in node.parents)
                    parent_grads = bwd(g, values, node.value, node.attrs, needs)
                else:
                    parent_grads = bwd(g, values, node.value, node.attrs)
            for p, pg in zip(node.parents, parent_grads):
                if not p.requires_grad:
                    continue
                if not np.all(np.isfinite(pg)):
                    raise NonFiniteError(f"non-finite gradient flowing out of {node.kind}")
                if p.id in grads:
                    grads[p.id] = grads[p.id] + pg
                else:
                    grads[p.id] = pg
            if node.id not in keep:
                del grads[node.id]
        return {r.id: grads.get(r.id, np.zeros_like(r.value)) for r in roots}


# -- functional helpers -----------------------------------------------------

def concat(nodes: Sequence[Node], axis: int = -1) -> Node:
    return nodes[0].graph.apply("concat", *nodes, axis=axis)


def total(x: Node, axis=None, keepdims: bool = False) -> Node:
    return x.graph.apply("sum", x, axis=axis, keepdims=keepdims)


def mse(a: Node, b: Node) -> Node:
    return a.graph.apply("mse", a, b)


def mae(a: Node, b: Node) -> Node:
    return a.graph.apply("mae", a, b)


def absolute(x: Node) -> Node:
    return x.graph.apply("abs", x)


def sqrt(x: Node) -> Node:
    return x.graph.apply("sqrt", x)


def tanh(x: Node) -> Node:
    return x.graph.apply("tanh", x)


def silu(x: Node) -> Node:
    return x.graph.apply("silu", x)


def sin(x: Node) -> Node:
    return x.graph.apply("sin", x)


def cos(x: Node) -> Node:
    return x.graph.apply("cos", x)


# -- parameters -------------------------------------------------------------

class ParameterStore:
    """Named parameter arrays with matching gradient accumulators.

    ``optimizer`` is ``"sgd"`` (p <- p - lr * g) or ``"adam"``.
    """

    def __init__(self, lr: float = 1e-3, optimizer: str = "sgd",
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        if optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {optimizer!r}")
        self.lr = float(lr)
        self.optimizer = optimizer
        self.betas = betas
        self.eps = eps
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._step = 0

    def add(self, name: str, value) -> None:
        value = _as_array(value).copy()
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def names(self) -> list[str]:
        return list(self.params)

    def bind(self, graph: Graph, trainable: bool = True) -> dict[str, Node]:
        """Place every parameter on ``graph`` as a leaf node."""
        if trainable:
            return {k: graph.input(v, requires_grad=True) for k, v in self.params.items()}
        return {k: graph.constant(v) for k, v in self.params.items()}

    def accumulate(self, grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            if g.shape != self.grads[name].shape:
                raise ValueError(f"gradient shape mismatch for {name}")
            self.grads[name] += g

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def step(self) -> None:
        if self.optimizer == "sgd":
            sgd_step(self)
        else:
            self._adam_step()

    def _adam_step(self) -> None:
        b1, b2 = self.betas
        self._step += 1
        c1 = 1.0 - b1 ** self._step
        c2 = 1.0 - b2 ** self._step
        for name, p in self.params.items():
            g = self.grads[name]
            m = self._m.setdefault(name, np.zeros_like(p))
            v = self._v.setdefault(name, np.zeros_like(p))
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def sgd_step(store: ParameterStore) -> None:
    """Plain gradient descent; gradients are left in place."""
    for name, p in store.params.items():
        p -= store.lr * store.grads[name]
