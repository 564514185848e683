"""Minimal tape-based reverse-mode differentiation over the dense kernels.

Every op appends a :class:`Node` to the tape of its first node argument.
Plain arrays passed as operands are lifted to constants. Because nodes are
appended in creation order, the tape is already topologically sorted and
:func:`backward` is a single reverse sweep.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import ops
from ..exceptions import ContractError, ShapeError


class Node:
    __slots__ = ("tape", "index", "value", "inputs", "vjp", "requires_grad", "name")

    def __init__(self, tape, value, inputs=(), vjp=None, requires_grad=False, name=None):
        self.tape = tape
        self.value = value
        self.inputs = tuple(inputs)
        self.vjp = vjp
        self.requires_grad = requires_grad
        self.name = name
        self.index = tape._next_index()

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = self.name or f"#{self.index}"
        return f"Node({label}, shape={self.value.shape})"


class Tape:
    """Single-owner record of one forward pass.

    Only nodes that lie on a path from a variable are kept. Everything else
    is a plain value: it drops its inputs so that inference-only graphs free
    their intermediates as soon as they go out of scope.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._count = 0

    def _next_index(self) -> int:
        self._count += 1
        return self._count - 1

    def variable(self, value, name=None) -> Node:
        node = Node(self, np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self.nodes.append(node)
        return node

    def constant(self, value, name=None) -> Node:
        return Node(self, np.asarray(value, dtype=np.float64), name=name)

    def _record(self, value, inputs, vjp) -> Node:
        if not any(i.requires_grad for i in inputs):
            return Node(self, value)
        node = Node(self, value, inputs, vjp, True)
        self.nodes.append(node)
        return node

    def __len__(self):
        return len(self.nodes)


class Gradients(dict):
    """Mapping ``leaf node -> gradient array``."""

    def __getitem__(self, node):
        if isinstance(node, Node):
            return super().__getitem__(node.index)
        return super().__getitem__(node)


def _tape_of(args) -> Tape:
    for a in args:
        if isinstance(a, Node):
            return a.tape
    raise ContractError("at least one operand must be a tape node")


def _lift(tape, x) -> Node:
    if isinstance(x, Node):
        if x.tape is not tape:
            raise ContractError("operands belong to different tapes")
        return x
    return tape.constant(x)


def _op(fn: Callable):
    """Lift array operands, run ``fn`` on node operands."""

    def wrapper(*args, **kwargs):
        tape = _tape_of(args)
        nodes = [_lift(tape, a) if isinstance(a, (Node, np.ndarray)) else a for a in args]
        return fn(tape, *nodes, **kwargs)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def backward(tape: Tape, output: Node) -> Gradients:
    """Gradients of the scalar ``output`` with respect to every variable leaf."""
    if output.tape is not tape:
        raise ContractError("output node belongs to a different tape")
    if output.value.size != 1:
        raise ContractError(f"output must be scalar, got shape {output.value.shape}")
    adj: dict[int, np.ndarray] = {output.index: np.ones_like(output.value)}
    for node in reversed(tape.nodes):
        if node.vjp is None or node.index > output.index:
            continue
        g = adj.pop(node.index, None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.vjp(g)):
            if gi is None or not inp.requires_grad:
                continue
            if inp.index in adj:
                adj[inp.index] = adj[inp.index] + gi
            else:
                adj[inp.index] = gi
    grads = Gradients()
    for node in tape.nodes:
        if node.requires_grad and node.vjp is None:
            g = adj.get(node.index)
            grads[node.index] = np.zeros_like(node.value) if g is None else g
    return grads


# -- elementwise and shape ops -------------------------------------------

@_op
def add(tape, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} vs {b.shape}")
    return tape._record(a.value + b.value, (a, b), lambda g: (g, g))


@_op
def sub(tape, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"sub: {a.shape} vs {b.shape}")
    return tape._record(a.value - b.value, (a, b), lambda g: (g, -g))


@_op
def mul(tape, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}")
    av, bv = a.value, b.value
    return tape._record(av * bv, (a, b), lambda g: (g * bv, g * av))


@_op
def scale(tape, a, c: float):
    c = float(c)
    return tape._record(a.value * c, (a,), lambda g: (g * c,))


@_op
def add_row(tape, x, b):
    """``x + b`` with bias vector ``b`` broadcast over rows."""
    if b.value.ndim != 1 or b.shape[0] != x.shape[-1]:
        raise ShapeError(f"bias {b.shape} does not match last axis of {x.shape}")
    axes = tuple(range(x.value.ndim - 1))
    return tape._record(x.value + b.value, (x, b), lambda g: (g, g.sum(axis=axes)))


@_op
def reshape(tape, a, shape):
    old = a.shape
    return tape._record(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


@_op
def transpose(tape, a):
    return tape._record(a.value.T.copy(), (a,), lambda g: (g.T,))


@_op
def columns(tape, a, lo: int, hi: int):
    def vjp(g):
        full = np.zeros_like(a.value)
        full[:, lo:hi] = g
        return (full,)

    return tape._record(a.value[:, lo:hi].copy(), (a,), vjp)


@_op
def total(tape, a):
    shape = a.shape
    return tape._record(np.asarray(a.value.sum()), (a,), lambda g: (np.full(shape, float(g)),))


@_op
def dot(tape, a, b):
    """Scalar inner product of two same-shaped nodes."""
    if a.shape != b.shape:
        raise ShapeError(f"dot: {a.shape} vs {b.shape}")
    av, bv = a.value, b.value
    return tape._record(np.asarray(np.sum(av * bv)), (a, b),
                        lambda g: (float(g) * bv, float(g) * av))


@_op
def mean_rows(tape, a):
    """Average the rows of an n x d matrix into a 1 x d matrix."""
    n = a.shape[0]
    return tape._record(a.value.mean(axis=0, keepdims=True), (a,),
                        lambda g: (np.repeat(g / n, n, axis=0),))


def concat(parts: Sequence, axis: int = -1) -> Node:
    tape = _tape_of(parts)
    nodes = [_lift(tape, p) for p in parts]
    sizes = [n.value.shape[axis] for n in nodes]
    cuts = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, cuts, axis=axis))

    return tape._record(np.concatenate([n.value for n in nodes], axis=axis), nodes, vjp)


@_op
def broadcast_grid(tape, v, h: int, w: int):
    """Tile a 1 x d (or d) vector into an h x w x d grid."""
    d = v.value.size
    shape = v.shape
    value = np.broadcast_to(v.value.reshape(1, 1, d), (h, w, d)).copy()
    return tape._record(value, (v,), lambda g: (g.sum(axis=(0, 1)).reshape(shape),))


# -- linear algebra ------------------------------------------------------

@_op
def matmul(tape, a, b):
    av, bv = a.value, b.value
    return tape._record(ops.matmul(av, bv), (a, b), lambda g: (g @ bv.T, av.T @ g))


@_op
def pair_dot(tape, a, b):
    """``a @ b.T`` with order-fixed accumulation (see :func:`ops.pair_dot`)."""
    av, bv = a.value, b.value
    return tape._record(ops.pair_dot(av, bv), (a, b), lambda g: (g @ bv, g.T @ av))


@_op
def affine(tape, x, w, b):
    """Token-wise affine map ``x @ w.T + b`` with ``w`` shaped (out, in)."""
    xv, wv = x.value, w.value
    if wv.ndim != 2 or xv.shape[-1] != wv.shape[1]:
        raise ShapeError(f"affine: tokens {xv.shape} vs weight {wv.shape}")
    if b.value.shape != (wv.shape[0],):
        raise ShapeError(f"affine: bias {b.shape} vs weight {wv.shape}")
    return tape._record(xv @ wv.T + b.value, (x, w, b),
                        lambda g: (g @ wv, g.T @ xv, g.sum(axis=0)))


# -- normalizations --------------------------------------------------------

@_op
def row_softmax(tape, m, scale: float = 1.0):
    y = ops.row_softmax(m.value, scale)

    def vjp(g):
        return ((g - np.sum(g * y, axis=1, keepdims=True)) * y / scale,)

    return tape._record(y, (m,), vjp)


@_op
def row_unit_normalize(tape, m):
    y = ops.row_unit_normalize(m.value)
    norms = ops.row_norms(m.value)[:, None]

    def vjp(g):
        return ((g - y * np.sum(g * y, axis=1, keepdims=True)) / norms,)

    return tape._record(y, (m,), vjp)


@_op
def sigmoid(tape, x):
    y = ops.sigmoid(x.value)
    return tape._record(y, (x,), lambda g: (g * y * (1.0 - y),))


@_op
def bce(tape, probs, truth, eps: float = 1e-7):
    """Mean binary cross-entropy; probabilities are clamped to [eps, 1-eps]."""
    if probs.shape != truth.shape:
        raise ShapeError(f"bce: probs {probs.shape} vs truth {truth.shape}")
    p = np.clip(probs.value, eps, 1.0 - eps)
    t = truth.value
    n = p.size
    loss = -np.sum(t * np.log(p) + (1.0 - t) * np.log1p(-p)) / n
    inside = (probs.value >= eps) & (probs.value <= 1.0 - eps)

    def vjp(g):
        dp = (-(t / p) + (1.0 - t) / (1.0 - p)) / n
        return (float(g) * dp * inside, None)

    return tape._record(np.asarray(loss), (probs, truth), vjp)


# -- grid ops ----------------------------------------------------------------

@_op
def bilinear_resize(tape, g, out_h: int, out_w: int):
    gv = ops.as_grid(g.value)
    rh, rw = ops.resize_matrices(gv.shape[0], gv.shape[1], out_h, out_w)
    value = np.einsum("oh,hwc,pw->opc", rh, gv, rw)
    return tape._record(value, (g,),
                        lambda gr: (np.einsum("oh,opc,pw->hwc", rh, gr, rw).reshape(g.shape),))


@_op
def conv2d(tape, g, kernels, bias):
    gv = ops.as_grid(g.value)
    kv = kernels.value
    ops._check_conv(gv, kv, bias.value)
    h, w, c = gv.shape
    cols = ops.im2col(gv)
    kmat = kv.reshape(kv.shape[0], -1)
    value = (cols @ kmat.T + bias.value).reshape(h, w, kv.shape[0])

    def vjp(gr):
        gm = gr.reshape(h * w, -1)
        dk = (gm.T @ cols).reshape(kv.shape)
        dg = ops.col2im(gm @ kmat, h, w, c).reshape(g.shape)
        return (dg, dk, gm.sum(axis=0))

    return tape._record(value, (g, kernels, bias), vjp)
