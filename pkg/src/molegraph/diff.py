"""Minimal reverse-mode differentiation on numpy arrays.

A Tape records every primitive operation in creation order (which is a
topological order by construction); `backward` seeds the scalar loss with
gradient one and replays the record in exact reverse, accumulating into
each node's gradient buffer and finally into the watched Parameters.

Everything is float64.  Reductions run in fixed (ascending index) order, so
two backward passes over identical tapes are bit-identical.
"""

import numpy as np

from . import kernels
from .errors import NonFiniteValue, NonScalarLoss


class Parameter:
    """Named differentiable array with a same-shape gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name, value):
        self.name = name
        self.value = np.array(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class Node:
    """A value on the tape; gradient buffer is allocated lazily."""

    __slots__ = ("value", "grad", "_backward")

    def __init__(self, value):
        self.value = value
        self.grad = None
        self._backward = None

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    @property
    def shape(self):
        return self.value.shape


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to `shape`."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Tape:
    """Ordered record of primitive ops over Nodes."""

    def __init__(self):
        self._records = []
        self._watched = []  # (Parameter, leaf Node) pairs

    # --- leaves ---

    def param(self, p):
        node = Node(p.value)
        self._watched.append((p, node))
        return node

    def const(self, x):
        return Node(np.asarray(x, dtype=np.float64))

    def _record(self, value, backward):
        node = Node(value)
        node._backward = backward
        self._records.append(node)
        return node

    # --- arithmetic ---

    def add(self, a, b):
        def bw(node):
            a._accum(_unbroadcast(node.grad, a.value.shape))
            b._accum(_unbroadcast(node.grad, b.value.shape))

        return self._record(a.value + b.value, bw)

    def sub(self, a, b):
        def bw(node):
            a._accum(_unbroadcast(node.grad, a.value.shape))
            b._accum(-_unbroadcast(node.grad, b.value.shape))

        return self._record(a.value - b.value, bw)

    def mul(self, a, b):
        def bw(node):
            a._accum(_unbroadcast(node.grad * b.value, a.value.shape))
            b._accum(_unbroadcast(node.grad * a.value, b.value.shape))

        return self._record(a.value * b.value, bw)

    def neg(self, a):
        def bw(node):
            a._accum(-node.grad)

        return self._record(-a.value, bw)

    def scale(self, a, s):
        s = float(s)

        def bw(node):
            a._accum(s * node.grad)

        return self._record(s * a.value, bw)

    def add_scalar(self, a, s):
        s = float(s)

        def bw(node):
            a._accum(node.grad)

        return self._record(a.value + s, bw)

    def mul_const(self, a, arr):
        """Elementwise product with a constant array (e.g. a label mask)."""
        arr = np.asarray(arr, dtype=np.float64)

        def bw(node):
            a._accum(_unbroadcast(node.grad * arr, a.value.shape))

        return self._record(a.value * arr, bw)

    def matmul(self, a, b):
        def bw(node):
            a._accum(node.grad @ b.value.T)
            b._accum(a.value.T @ node.grad)

        return self._record(a.value @ b.value, bw)

    def power(self, a, exponent):
        e = float(exponent)

        def bw(node):
            a._accum(node.grad * e * a.value ** (e - 1.0))

        return self._record(a.value**e, bw)

    # --- elementwise nonlinearities ---

    def relu(self, a):
        mask = a.value > 0.0

        def bw(node):
            a._accum(node.grad * mask)

        return self._record(np.where(mask, a.value, 0.0), bw)

    def tanh(self, a):
        out = np.tanh(a.value)

        def bw(node):
            a._accum(node.grad * (1.0 - out * out))

        return self._record(out, bw)

    def sigmoid(self, a):
        out = _sigmoid(a.value)

        def bw(node):
            a._accum(node.grad * out * (1.0 - out))

        return self._record(out, bw)

    def exp(self, a):
        out = np.exp(a.value)

        def bw(node):
            a._accum(node.grad * out)

        return self._record(out, bw)

    def log(self, a):
        def bw(node):
            a._accum(node.grad / a.value)

        return self._record(np.log(a.value), bw)

    def softplus(self, a):
        """log(1 + exp(x)), computed stably; derivative is sigmoid(x)."""
        x = a.value
        out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

        def bw(node):
            a._accum(node.grad * _sigmoid(x))

        return self._record(out, bw)

    def maximum(self, a, b):
        """Elementwise max; on exact ties the first argument takes the gradient."""
        take_a = a.value >= b.value

        def bw(node):
            a._accum(_unbroadcast(node.grad * take_a, a.value.shape))
            b._accum(_unbroadcast(node.grad * ~take_a, b.value.shape))

        return self._record(np.where(take_a, a.value, b.value), bw)

    # --- reductions ---

    def sum(self, a):
        def bw(node):
            a._accum(np.broadcast_to(node.grad, a.value.shape))

        return self._record(a.value.sum(), bw)

    def mean0(self, a):
        """Mean over axis 0 (the node/batch axis)."""
        n = a.value.shape[0]

        def bw(node):
            a._accum(np.broadcast_to(node.grad / n, a.value.shape))

        return self._record(a.value.mean(axis=0), bw)

    # --- row indexing ---

    def gather_rows(self, a, idx):
        idx = np.asarray(idx, dtype=np.int64)

        def bw(node):
            g = np.zeros_like(a.value)
            np.add.at(g, idx, node.grad)
            a._accum(g)

        return self._record(a.value[idx], bw)

    def scatter_rows(self, pairs, total_rows):
        """Assemble a row-partitioned matrix from (index array, node) pairs.

        The index arrays must partition range(total_rows) — each output row is
        written exactly once (degree buckets satisfy this).
        """
        width = pairs[0][1].value.shape[1]
        out = np.zeros((total_rows, width), dtype=np.float64)
        for idx, node in pairs:
            out[idx] = node.value

        def bw(node):
            for idx, part in pairs:
                part._accum(node.grad[idx])

        return self._record(out, bw)

    # --- graph segment ops (kernel-backed) ---

    def neighbor_sum(self, a, batch):
        """out[i] = sum of rows over node i's sorted neighbour list."""
        nbr_flat, offsets = batch.nbr_flat, batch.nbr_offsets

        def bw(node):
            # the neighbour relation is symmetric, so the op is self-adjoint
            a._accum(kernels.neighbor_sum(node.grad, nbr_flat, offsets))

        return self._record(kernels.neighbor_sum(a.value, nbr_flat, offsets), bw)

    def segment_sum(self, a, seg_offsets):
        """Per-segment row sums over contiguous segments."""
        seg_offsets = np.asarray(seg_offsets, dtype=np.int64)
        counts = np.diff(seg_offsets)

        def bw(node):
            a._accum(np.repeat(node.grad, counts, axis=0))

        return self._record(kernels.segment_sum(a.value, seg_offsets), bw)

    def closed_max(self, a, batch):
        """Columnwise max over closed neighbourhoods ({v} + neighbours).

        Gradient flows only to the winning element; the lowest node index
        wins exact ties.
        """
        out, argwin = kernels.closed_max(a.value, batch.cnbr_flat, batch.cnbr_offsets)
        n_rows = a.value.shape[0]

        def bw(node):
            a._accum(kernels.scatter_max_grad(node.grad, argwin, n_rows))

        return self._record(out, bw)


def backward(tape, loss):
    """Reverse sweep; accumulates into each watched Parameter's `.grad`.

    Returns {parameter name: gradient contribution of this pass}.
    """
    if loss.value.size != 1:
        raise NonScalarLoss(f"loss has shape {loss.value.shape}")
    if not np.isfinite(loss.value):
        raise NonFiniteValue("loss is not finite")
    loss.grad = np.ones_like(loss.value)
    for node in reversed(tape._records):
        if node.grad is not None and node._backward is not None:
            node._backward(node)
    out = {}
    for p, leaf in tape._watched:
        if leaf.grad is not None:
            p.grad += leaf.grad
            out[p.name] = leaf.grad
        else:
            out[p.name] = np.zeros_like(p.value)
    return out


def gradient_check(f, params, h=1e-5):
    """Max relative error between analytic and central-difference gradients.

    `f` builds a fresh tape from the current parameter values and returns
    (tape, scalar loss node); it must be deterministic and side-effect free.
    Relative error per coordinate is |a - d| / max(1e-8, |a| + |d|).
    """
    tape, loss = f()
    analytic = backward(tape, loss)
    worst = 0.0
    for p in params:
        grad = analytic.get(p.name, np.zeros_like(p.value))
        flat_value = p.value.reshape(-1)
        flat_grad = grad.reshape(-1)
        for i in range(flat_value.size):
            orig = flat_value[i]
            flat_value[i] = orig + h
            _, up = f()
            flat_value[i] = orig - h
            _, down = f()
            flat_value[i] = orig
            fd = (float(up.value) - float(down.value)) / (2.0 * h)
            a = float(flat_grad[i])
            err = abs(a - fd) / max(1e-8, abs(a) + abs(fd))
            if err > worst:
                worst = err
    return worst


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out
