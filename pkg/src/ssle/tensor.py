"""Reverse-mode automatic differentiation over numpy arrays.

Graphs are built eagerly; ``Tensor.backward`` walks them in reverse
topological order. Gradients accumulate into ``.grad`` until zeroed.
Everything runs in float64.
"""

from __future__ import annotations

import contextlib

import numpy as np

_grad_enabled = True
_kink_probe: list | None = None


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextlib.contextmanager
def track_kinks():
    """Record the smallest |input| seen by relu/prelu/clip kinks.

    Yields a one-element list holding the running minimum distance.
    """
    global _kink_probe
    prev, probe = _kink_probe, [np.inf]
    _kink_probe = probe
    try:
        yield probe
    finally:
        _kink_probe = prev


def _note_kink(dist: np.ndarray):
    if _kink_probe is not None and dist.size:
        _kink_probe[0] = min(_kink_probe[0], float(np.min(dist)))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tensor:
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, _parents=(), _op: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward = None
        self._op = _op

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op or 'leaf'})"

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad = self.grad + g

    @staticmethod
    def _make(data, parents, backward, op):
        needs = _grad_enabled and any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=needs, _parents=parents if needs else (), _op=op)
        if needs:
            out._backward = backward
        return out

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError(f"backward needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in reversed(node._parents):
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # arithmetic -----------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        a, b = self.shape, other.shape
        return Tensor._make(self.data + other.data, (self, other),
                            lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)), "add")

    __radd__ = __add__

    def __neg__(self):
        return Tensor._make(-self.data, (self,), lambda g: (-g,), "neg")

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self.shape, other.shape
        x, y = self.data, other.data
        return Tensor._make(x * y, (self, other),
                            lambda g: (_unbroadcast(g * y, a), _unbroadcast(g * x, b)), "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self.shape, other.shape
        x, y = self.data, other.data
        return Tensor._make(x / y, (self, other),
                            lambda g: (_unbroadcast(g / y, a), _unbroadcast(-g * x / (y * y), b)),
                            "div")

    def square(self):
        x = self.data
        return Tensor._make(x * x, (self,), lambda g: (2.0 * g * x,), "square")

    def exp(self):
        y = np.exp(self.data)
        return Tensor._make(y, (self,), lambda g: (g * y,), "exp")

    def log(self):
        x = self.data
        return Tensor._make(np.log(x), (self,), lambda g: (g / x,), "log")

    def sum(self, axis=None, keepdims=False):
        shape = self.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), back, "sum")

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        old = self.shape
        return Tensor._make(self.data.reshape(*shape), (self,), lambda g: (g.reshape(old),), "reshape")

    def relu(self):
        return relu(self)

    def clip(self, lo, hi):
        return clip(self, lo, hi)


def relu(x: Tensor) -> Tensor:
    """max(0, x); the derivative at exactly 0 is taken as 0."""
    d = x.data
    _note_kink(np.abs(d))
    mask = d > 0
    return Tensor._make(np.where(mask, d, 0.0), (x,), lambda g: (g * mask,), "relu")


def prelu(x: Tensor, alpha: Tensor) -> Tensor:
    """x for x > 0, alpha * x otherwise (derivative alpha at 0). alpha is a scalar tensor."""
    d, a = x.data, alpha.data
    _note_kink(np.abs(d))
    pos = d > 0
    out = np.where(pos, d, a * d)

    def back(g):
        return g * np.where(pos, 1.0, a), np.reshape(np.sum(g * np.where(pos, 0.0, d)), alpha.shape)

    return Tensor._make(out, (x, alpha), back, "prelu")


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    d = x.data
    _note_kink(np.minimum(np.abs(d - lo), np.abs(d - hi)))
    inside = (d >= lo) & (d <= hi)
    return Tensor._make(np.clip(d, lo, hi), (x,), lambda g: (g * inside,), "clip")


def maximum(x: Tensor, floor: float) -> Tensor:
    d = x.data
    _note_kink(np.abs(d - floor))
    keep = d > floor
    return Tensor._make(np.where(keep, d, floor), (x,), lambda g: (g * keep,), "maximum")


def matmul(a, b) -> Tensor:
    """np.matmul with broadcasting over leading batch axes."""
    a, b = as_tensor(a), as_tensor(b)
    x, y = a.data, b.data

    def back(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(y, -1, -2), x.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(x, -1, -2) @ g, y.shape)
        return ga, gb

    return Tensor._make(x @ y, (a, b), back, "matmul")


def _im2col(x: np.ndarray, K: int) -> np.ndarray:
    """(B, C, T) -> (B*T, C*K) with cols[b*T + t, c*K + k] = x_padded[b, c, t + k]."""
    B, C, T = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (K // 2, K // 2)))
    cols = np.lib.stride_tricks.sliding_window_view(xp, K, axis=2).transpose(0, 2, 1, 3)
    return np.ascontiguousarray(cols).reshape(B * T, C * K)


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Stride-1 'same' cross-correlation.

    x: (B, C_in, T) or (C_in, T); weight: (C_out, C_in, K) with K odd;
    bias: (C_out,). Output keeps the time length T.
    """
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or weight.ndim != 3:
        raise ValueError(f"conv1d expects input (B, C, T) and weight (O, C, K); "
                         f"got input {x.shape} and weight {weight.shape}")
    B, C, T = xd.shape
    O, Cw, K = weight.shape
    if Cw != C:
        raise ValueError(f"conv1d channel mismatch: input {x.shape} vs weight {weight.shape}")
    if K % 2 == 0:
        raise ValueError(f"conv1d kernel size must be odd, got {K}")
    if bias is not None and bias.shape != (O,):
        raise ValueError(f"conv1d bias shape {bias.shape} does not match weight {weight.shape}")
    cols = _im2col(xd, K)
    w2 = weight.data.reshape(O, C * K)
    out = cols @ w2.T
    if bias is not None:
        out += bias.data
    out = np.ascontiguousarray(out.reshape(B, T, O).transpose(0, 2, 1))
    if squeeze:
        out = out[0]

    def back(g):
        g3 = g[None] if squeeze else g
        gx = gw = gb = None
        g2 = None
        if weight.requires_grad or (bias is not None and bias.requires_grad):
            g2 = np.ascontiguousarray(g3.transpose(0, 2, 1)).reshape(B * T, O)
        if x.requires_grad:
            # Input gradient is a 'same' correlation with the flipped, transposed kernel.
            flipped = np.ascontiguousarray(weight.data[:, :, ::-1].transpose(1, 0, 2)).reshape(C, O * K)
            gx = (_im2col(g3, K) @ flipped.T).reshape(B, T, C).transpose(0, 2, 1)
            gx = gx[0] if squeeze else gx
        if weight.requires_grad:
            gw = (g2.T @ cols).reshape(O, C, K)
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=0)
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._make(out, parents, (lambda g: back(g)[:2]) if bias is None else back, "conv1d")


def stop_gradient(x: Tensor) -> Tensor:
    return Tensor(x.data)
