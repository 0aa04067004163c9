"""Reverse-mode automatic differentiation on float64 numpy arrays.

A tiny tape: each Tensor remembers its parents and a closure that pushes
gradients backwards.  Only the handful of operations the model needs are
implemented, each with an exact gradient.  Everything is float64; callers
convert on the way in and out.

Constants (the propagation operators, index arrays) never enter the tape:
they are passed to the dedicated ops below as plain arrays.
"""

import numpy as np
from scipy.special import expit


def _as_array(x):
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad, shape):
    """Reduce `grad` back to `shape` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    """Node in the computation graph.

    `data` is a float64 ndarray, `grad` is filled in by backward() and is
    None for nodes that were not part of the last backward pass.
    """

    __slots__ = ("data", "grad", "_parents", "_backward", "name")

    def __init__(self, data, parents=(), backward=None, name=""):
        self.data = _as_array(data)
        self.grad = None
        self._parents = tuple(parents)
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape})"

    # -- arithmetic ---------------------------------------------------

    def __add__(self, other):
        other = _wrap(other)

        def bwd(g, a=self, b=other):
            a.grad += _unbroadcast(g, a.data.shape)
            b.grad += _unbroadcast(g, b.data.shape)

        return Tensor(self.data + other.data, (self, other), bwd)

    __radd__ = __add__

    def __sub__(self, other):
        other = _wrap(other)

        def bwd(g, a=self, b=other):
            a.grad += _unbroadcast(g, a.data.shape)
            b.grad -= _unbroadcast(g, b.data.shape)

        return Tensor(self.data - other.data, (self, other), bwd)

    def __rsub__(self, other):
        return _wrap(other) - self

    def __mul__(self, other):
        other = _wrap(other)

        def bwd(g, a=self, b=other):
            a.grad += _unbroadcast(g * b.data, a.data.shape)
            b.grad += _unbroadcast(g * a.data, b.data.shape)

        return Tensor(self.data * other.data, (self, other), bwd)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _wrap(other)

        def bwd(g, a=self, b=other):
            a.grad += _unbroadcast(g / b.data, a.data.shape)
            b.grad += _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)

        return Tensor(self.data / other.data, (self, other), bwd)

    def __neg__(self):
        def bwd(g, a=self):
            a.grad -= g

        return Tensor(-self.data, (self,), bwd)

    def __matmul__(self, other):
        other = _wrap(other)

        def bwd(g, a=self, b=other):
            a.grad += g @ b.data.T
            b.grad += a.data.T @ g

        return Tensor(self.data @ other.data, (self, other), bwd)

    # -- reductions and pointwise maps --------------------------------

    def sum(self, axis=None, keepdims=False):
        def bwd(g, a=self, axis=axis, keepdims=keepdims):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a.grad += np.broadcast_to(g, a.data.shape)

        return Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,), bwd)

    def square(self):
        def bwd(g, a=self):
            a.grad += 2.0 * a.data * g

        return Tensor(self.data * self.data, (self,), bwd)

    def exp(self):
        out_data = np.exp(self.data)

        def bwd(g, a=self, o=out_data):
            a.grad += o * g

        return Tensor(out_data, (self,), bwd)

    def sigmoid(self):
        out_data = expit(self.data)

        def bwd(g, a=self, o=out_data):
            a.grad += o * (1.0 - o) * g

        return Tensor(out_data, (self,), bwd)

    def logsigmoid(self):
        # log sigma(x) = -log(1 + exp(-x)), gradient sigma(-x)
        out_data = -np.logaddexp(0.0, -self.data)

        def bwd(g, a=self):
            a.grad += expit(-a.data) * g

        return Tensor(out_data, (self,), bwd)

    # -- backward -----------------------------------------------------

    def backward(self):
        """Accumulate gradients of this (scalar) node into the whole graph.

        Every node reachable from here gets a fresh .grad; nodes outside
        the graph keep grad=None so optimizers can skip them.
        """
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")
        order = []
        seen = set()
        stack = [(self, False)]
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
                if id(p) not in seen:
                    stack.append((p, False))
        for node in order:
            node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(data, name=""):
    """Leaf tensor that participates in the graph but is not a parameter."""
    return Tensor(data, name=name)


# -- structural ops (constant operands stay out of the tape) ----------


def matmul_const(const, t):
    """`const @ t` where const is a fixed dense or scipy.sparse matrix."""

    def bwd(g, a=t, c=const):
        a.grad += c.T @ g

    return Tensor(const @ t.data, (t,), bwd)


def gather_rows(t, index):
    """Rows of `t` at `index` (duplicates allowed)."""
    index = np.asarray(index, dtype=np.intp)

    def bwd(g, a=t, idx=index):
        np.add.at(a.grad, idx, g)

    return Tensor(t.data[index], (t,), bwd)


def segment_sum(t, segment_ids, num_segments):
    """Sum rows of `t` into `num_segments` buckets given by `segment_ids`."""
    segment_ids = np.asarray(segment_ids, dtype=np.intp)
    out_data = np.zeros((num_segments,) + t.data.shape[1:], dtype=np.float64)
    np.add.at(out_data, segment_ids, t.data)

    def bwd(g, a=t, idx=segment_ids):
        a.grad += g[idx]

    return Tensor(out_data, (t,), bwd)


def segment_softmax(scores, segment_ids, num_segments):
    """Softmax of `scores` (shape (E,1)) within each segment.

    The per-segment max is subtracted as a constant before exponentiation;
    softmax is shift-invariant per segment, so the gradient is unchanged.
    """
    segment_ids = np.asarray(segment_ids, dtype=np.intp)
    shift = np.full((num_segments, 1), -np.inf)
    np.maximum.at(shift, segment_ids, scores.data)
    e = (scores - shift[segment_ids]).exp()
    denom = segment_sum(e, segment_ids, num_segments)
    return e / gather_rows(denom, segment_ids)
