"""A small reverse-mode tape for the fixed set of layers the models need.

Usage::

    tape = Tape()
    X = tape.const(x)
    h = tape.leaky_relu(tape.affine(tape.param(W), tape.param(b), X), 0.01)
    loss = tape.bce_with_logits(..., y)
    tape.backward(loss)        # fills W.grad, b.grad

Only ops issued through a tape can be differentiated; handing a raw array
or a node from another tape to an op raises :class:`UnrecordedOpError`.
"""

from dataclasses import dataclass, field

import numpy as np

from .ops import ShapeError, as_matrix, sigmoid, softplus


class UnrecordedOpError(RuntimeError):
    pass


@dataclass(eq=False)
class ParamBlock:
    """A trainable array with its gradient and optimizer accumulators."""

    value: np.ndarray
    grad: np.ndarray = None
    state: dict = field(default_factory=dict)

    def __post_init__(self):
        self.value = np.array(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        else:
            self.grad = np.array(self.grad, dtype=np.float64)
        if self.grad.shape != self.value.shape:
            raise ShapeError(
                f"grad shape {self.grad.shape} differs from value shape {self.value.shape}")

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0


class Node:
    __slots__ = ("tape", "index", "value", "grad", "requires_grad",
                 "_parents", "_vjp", "_block")

    def __init__(self, tape, value, parents=(), vjp=None, requires_grad=False, block=None):
        self.tape = tape
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._vjp = vjp
        self._block = block
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return np.shape(self.value)

    def __repr__(self):
        return f"Node(#{self.index}, shape={self.shape})"


class Tape:
    def __init__(self):
        self.nodes = []

    def _check(self, *nodes):
        for n in nodes:
            if not isinstance(n, Node) or n.tape is not self:
                raise UnrecordedOpError(
                    f"input {n!r} was not recorded on this tape; wrap it with tape.const()")

    def _op(self, value, parents, vjp):
        needs = any(p.requires_grad for p in parents)
        return Node(self, value, parents, vjp if needs else None, requires_grad=needs)

    # leaves

    def const(self, value):
        return Node(self, np.asarray(value, dtype=np.float64))

    def var(self, value):
        return Node(self, np.array(value, dtype=np.float64), requires_grad=True)

    def param(self, block):
        return Node(self, block.value, requires_grad=True, block=block)

    # ops

    def affine(self, W, b, X):
        self._check(W, b, X)
        Wv, bv, Xv = W.value, b.value, as_matrix(X.value)
        if Wv.ndim != 2 or Wv.shape[1] != Xv.shape[1] or bv.reshape(-1).shape[0] != Wv.shape[0]:
            raise ShapeError(
                f"affine: weight {Wv.shape}, bias {bv.shape}, input {Xv.shape}")
        out = Xv @ Wv.T + bv.reshape(-1)

        def vjp(g):
            return (g.T @ Xv, g.sum(axis=0).reshape(bv.shape), (g @ Wv).reshape(X.value.shape))

        return self._op(out, (W, b, X), vjp)

    def leaky_relu(self, x, slope=0.01):
        self._check(x)
        pos = x.value >= 0
        out = np.where(pos, x.value, slope * x.value)
        # derivative at exactly 0 taken from the positive branch
        return self._op(out, (x,), lambda g: (np.where(pos, g, slope * g),))

    def sigmoid(self, x):
        self._check(x)
        out = np.asarray(sigmoid(x.value), dtype=np.float64)
        return self._op(out, (x,), lambda g: (g * out * (1.0 - out),))

    def bce_with_logits(self, logits, labels):
        self._check(logits)
        z = logits.value.reshape(-1)
        y = np.asarray(labels, dtype=np.float64).reshape(-1)
        if z.shape != y.shape:
            raise ShapeError(f"bce_with_logits: logits {logits.shape} vs labels {y.shape}")
        if z.size == 0:
            raise ValueError("bce_with_logits: empty batch")
        sign = 2.0 * y - 1.0
        val = np.mean(softplus(-sign * z))
        n = z.size

        def vjp(g):
            d = -sign * np.asarray(sigmoid(-sign * z)) / n
            return ((g * d).reshape(logits.value.shape),)

        return self._op(np.float64(val), (logits,), vjp)

    def squared_error(self, X, Xhat):
        self._check(X, Xhat)
        if X.shape != Xhat.shape:
            raise ShapeError(f"squared_error: {X.shape} vs {Xhat.shape}")
        diff = X.value - Xhat.value
        n = diff.shape[0]
        val = np.mean(np.sum(diff ** 2, axis=1))
        return self._op(np.float64(val), (X, Xhat),
                        lambda g: (2.0 * g * diff / n, -2.0 * g * diff / n))

    def mean(self, x, rows=None):
        """Mean over all entries of ``x``, or of ``x[rows]`` when given."""
        self._check(x)
        if rows is None:
            sel = x.value
        else:
            rows = np.asarray(rows)
            if rows.dtype == bool:
                rows = np.flatnonzero(rows)
            sel = x.value[rows]
        if sel.size == 0:
            raise ValueError("mean over an empty selection")
        val = np.mean(sel)
        size = sel.size

        def vjp(g):
            full = np.zeros_like(x.value)
            if rows is None:
                full[...] = g / size
            else:
                np.add.at(full, rows, g / size)
            return (full,)

        return self._op(np.float64(val), (x,), vjp)

    def abs(self, x):
        self._check(x)
        # subgradient 0 at the kink
        sgn = np.sign(x.value)
        return self._op(np.abs(x.value), (x,), lambda g: (g * sgn,))

    def combine(self, *terms):
        """Linear combination ``sum(coef * node)`` of same-shaped nodes."""
        if not terms:
            raise ValueError("combine needs at least one term")
        nodes = [n for _, n in terms]
        self._check(*nodes)
        coefs = [float(c) for c, _ in terms]
        val = sum(c * n.value for c, n in zip(coefs, nodes))
        return self._op(np.asarray(val, dtype=np.float64), tuple(nodes),
                        lambda g: tuple(c * g for c in coefs))

    # reverse pass

    def backward(self, out, seed_grad=1.0):
        """Propagate ``seed_grad`` from ``out`` back to every leaf.

        Parameter leaves add their gradient into ``block.grad``; every node
        that requires a gradient gets ``node.grad`` set.
        """
        self._check(out)
        if not out.requires_grad:
            return
        for n in self.nodes:
            n.grad = None
        out.grad = np.broadcast_to(np.asarray(seed_grad, dtype=np.float64), out.shape).copy()
        for node in reversed(self.nodes[:out.index + 1]):
            if node.grad is None or not node.requires_grad:
                continue
            if node._vjp is None:
                if node._block is not None:
                    node._block.grad += node.grad
                continue
            for parent, g in zip(node._parents, node._vjp(node.grad)):
                if not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.array(g, dtype=np.float64)
                else:
                    parent.grad = parent.grad + g
