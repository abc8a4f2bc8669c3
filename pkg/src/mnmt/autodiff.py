"""Minimal reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps an ndarray and, while gradients are enabled, records
the operation that produced it together with a vector-Jacobian product
closure.  :meth:`Tensor.backward` walks the recorded graph in reverse
topological order and accumulates exact gradients into ``.grad``.  Only the
operations the translation model needs are provided; all of them preserve the
operand dtype so the same graph runs in float32 for training and float64 for
finite-difference checks.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np

# Per-thread so concurrent inference (e.g. grid evaluation workers) cannot
# re-enable recording under another thread's no_grad block.
_STATE = threading.local()


def _grad_enabled() -> bool:
    return getattr(_STATE, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference mode)."""
    prev = _grad_enabled()
    _STATE.enabled = False
    try:
        yield
    finally:
        _STATE.enabled = prev


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to ``shape`` to undo numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """An ndarray plus the tape entry that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"

    # -- graph -------------------------------------------------------------

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable ``.grad``."""
        if seed is None:
            seed = np.ones_like(self.data)
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
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.asarray(seed, dtype=self.data.dtype)
        for node in reversed(order):
            if node._vjp is None or node.grad is None:
                continue
            for parent, grad in zip(node._parents, node._vjp(node.grad)):
                if not parent.requires_grad or grad is None:
                    continue
                if parent.grad is None:
                    parent.grad = grad
                else:
                    parent.grad = parent.grad + grad

    def zero_grad(self) -> None:
        self.grad = None

    # -- operators ----------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            out = _track(self.data + other.data, (self, other))
            if out._vjp is _PENDING:
                a_shape, b_shape = self.data.shape, other.data.shape
                out._vjp = lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape))
            return out
        const = np.asarray(other, dtype=self.data.dtype)
        out = _track(self.data + const, (self,))
        if out._vjp is _PENDING:
            shape = self.data.shape
            out._vjp = lambda g: (_unbroadcast(g, shape),)
        return out

    __radd__ = __add__

    def __neg__(self):
        out = _track(-self.data, (self,))
        if out._vjp is _PENDING:
            out._vjp = lambda g: (-g,)
        return out

    def __sub__(self, other):
        if isinstance(other, Tensor):
            out = _track(self.data - other.data, (self, other))
            if out._vjp is _PENDING:
                a_shape, b_shape = self.data.shape, other.data.shape
                out._vjp = lambda g: (_unbroadcast(g, a_shape), -_unbroadcast(g, b_shape))
            return out
        return self + (-np.asarray(other, dtype=self.data.dtype))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            a, b = self, other
            out = _track(a.data * b.data, (a, b))
            if out._vjp is _PENDING:
                out._vjp = lambda g: (
                    _unbroadcast(g * b.data, a.data.shape),
                    _unbroadcast(g * a.data, b.data.shape),
                )
            return out
        const = np.asarray(other, dtype=self.data.dtype)
        out = _track(self.data * const, (self,))
        if out._vjp is _PENDING:
            shape = self.data.shape
            out._vjp = lambda g: (_unbroadcast(g * const, shape),)
        return out

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def __matmul__(self, other):
        return matmul(self, other)


_PENDING = object()


def _track(data: np.ndarray, parents: tuple[Tensor, ...]) -> Tensor:
    """Build a result tensor, marking it for a vjp if the graph is live."""
    live = _grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=live)
    if live:
        out._parents = parents
        out._vjp = _PENDING
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = _track(a.data @ b.data, (a, b))
    if out._vjp is _PENDING:
        def vjp(g):
            ga = g @ np.swapaxes(b.data, -1, -2)
            gb = np.swapaxes(a.data, -1, -2) @ g
            return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

        out._vjp = vjp
    return out


def relu(a: Tensor) -> Tensor:
    out = _track(np.maximum(a.data, 0), (a,))
    if out._vjp is _PENDING:
        mask = a.data > 0
        out._vjp = lambda g: (g * mask,)
    return out


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather; the gradient scatter-adds duplicate ids."""
    ids = np.asarray(ids)
    out = _track(table.data[ids], (table,))
    if out._vjp is _PENDING:
        def vjp(g):
            grad = np.zeros_like(table.data)
            np.add.at(grad, ids, g)
            return (grad,)

        out._vjp = vjp
    return out


def gather_last(a: Tensor, idx: np.ndarray) -> Tensor:
    """Pick ``a[..., idx]`` elementwise along the last axis."""
    idx = np.asarray(idx)
    out = _track(np.take_along_axis(a.data, idx[..., None], axis=-1)[..., 0], (a,))
    if out._vjp is _PENDING:
        def vjp(g):
            grad = np.zeros_like(a.data)
            np.put_along_axis(grad, idx[..., None], g[..., None], axis=-1)
            return (grad,)

        out._vjp = vjp
    return out


def softmax(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)
    out = _track(s, (a,))
    if out._vjp is _PENDING:
        out._vjp = lambda g: (s * (g - (g * s).sum(axis=-1, keepdims=True)),)
    return out


def log_softmax(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    lsm = shifted - lse
    out = _track(lsm, (a,))
    if out._vjp is _PENDING:
        out._vjp = lambda g: (g - np.exp(lsm) * g.sum(axis=-1, keepdims=True),)
    return out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.data.dtype))
    xhat = centered * inv
    out = _track(gamma.data * xhat + beta.data, (x, gamma, beta))
    if out._vjp is _PENDING:
        n = x.data.shape[-1]

        def vjp(g):
            dgamma = _unbroadcast(g * xhat, gamma.data.shape)
            dbeta = _unbroadcast(g, beta.data.shape)
            dxhat = g * gamma.data
            dx = (inv / n) * (
                n * dxhat
                - dxhat.sum(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
            )
            return dx, dgamma, dbeta

        out._vjp = vjp
    return out


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = _track(a.data.sum(axis=axis, keepdims=keepdims), (a,))
    if out._vjp is _PENDING:
        shape = a.data.shape

        def vjp(g):
            g = np.asarray(g)
            if axis is None:
                return (np.broadcast_to(g, shape).copy(),)
            axes = axis if isinstance(axis, tuple) else (axis,)
            if not keepdims:
                for ax in sorted(ax % len(shape) for ax in axes):
                    g = np.expand_dims(g, ax)
            return (np.broadcast_to(g, shape).copy(),)

        out._vjp = vjp
    return out


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else np.prod(
        [a.data.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
    )
    return tsum(a, axis=axis, keepdims=keepdims) / float(count)


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    out = _track(a.data.transpose(axes), (a,))
    if out._vjp is _PENDING:
        inverse = tuple(np.argsort(axes))
        out._vjp = lambda g: (g.transpose(inverse),)
    return out


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = _track(a.data.reshape(shape), (a,))
    if out._vjp is _PENDING:
        orig = a.data.shape
        out._vjp = lambda g: (g.reshape(orig),)
    return out


def slice_rows(a: Tensor, n: int) -> Tensor:
    """First ``n`` rows; gradients land in those rows, zeros elsewhere."""
    out = _track(a.data[:n], (a,))
    if out._vjp is _PENDING:
        def vjp(g):
            grad = np.zeros_like(a.data)
            grad[:n] = g
            return (grad,)

        out._vjp = vjp
    return out
