"""Parameters, layers, the Adam optimizer and a finite-difference gradient checker."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, conv1d, prelu, relu


class Parameter(Tensor):
    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def _single(x: np.ndarray) -> np.ndarray:
    """Round to single precision, keep the float64 container."""
    return np.asarray(x, dtype=np.float32).astype(np.float64)


class Module:
    """Minimal container; parameters are discovered in attribute order."""

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{full}.{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise KeyError(f"state mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
        for name, p in own.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ValueError(f"{name}: shape {value.shape} != {p.shape}")
            p.data = value.copy()

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


class Conv1d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int = 7, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = np.sqrt(1.0 / (c_in * kernel))
        self.weight = Parameter(_single(rng.uniform(-bound, bound, (c_out, c_in, kernel))))
        self.bias = Parameter(_single(rng.uniform(-bound, bound, c_out)))
        self.c_in, self.c_out, self.kernel = c_in, c_out, kernel

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d(x, self.weight, self.bias)


class ConvStack(Module):
    """Conv layers over ``channels`` with ReLU between (and optionally after) them."""

    def __init__(self, channels, kernel: int = 7, rng=None, final_relu: bool = False):
        self.layers = [Conv1d(a, b, kernel, rng) for a, b in zip(channels[:-1], channels[1:])]
        self.final_relu = final_relu

    @property
    def channels(self):
        return [self.layers[0].c_in] + [layer.c_out for layer in self.layers]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1 or self.final_relu:
                x = relu(x)
        return x


class PReLU(Module):
    def __init__(self, alpha: float = 0.25):
        self.alpha = Parameter(np.array([alpha]))

    def __call__(self, x: Tensor) -> Tensor:
        return prelu(x, self.alpha)


def name_parameters(module: Module) -> None:
    for name, p in module.named_parameters():
        p.name = name


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


class Adam:
    """Adam with bias correction. State is kept per parameter name.

    ``storage`` rounds parameters and moments to that dtype after each step
    (arithmetic stays float64); None keeps full double precision.
    """

    def __init__(self, named_params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, storage=None):
        self.params = list(named_params)
        names = [n for n, _ in self.params]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")
        self.state = AdamState(lr, beta1, beta2, eps)
        self.storage = storage

    def _store(self, x):
        return x if self.storage is None else np.asarray(x, dtype=self.storage).astype(np.float64)

    def zero_grad(self):
        for _, p in self.params:
            p.grad = None

    def step(self):
        s = self.state
        s.t += 1
        bc1 = 1.0 - s.beta1 ** s.t
        bc2 = 1.0 - s.beta2 ** s.t
        for name, p in self.params:
            g = p.grad
            if g is None:
                continue
            m = s.m.get(name, np.zeros_like(p.data))
            v = s.v.get(name, np.zeros_like(p.data))
            m = s.beta1 * m + (1.0 - s.beta1) * g
            v = s.beta2 * v + (1.0 - s.beta2) * (g * g)
            s.m[name] = self._store(m)
            s.v[name] = self._store(v)
            p.data = self._store(p.data - s.lr * (m / bc1) / (np.sqrt(v / bc2) + s.eps))


def rel_error(a, b, floor: float = 1e-5) -> np.ndarray:
    """|a - b| / max(|a|, |b|, floor); the floor keeps near-zero pairs from dominating."""
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def grad_check(loss_fn, params, h: float = 1e-4, max_elems: int | None = None, rng=None) -> dict:
    """Compare autodiff gradients to central differences.

    ``loss_fn()`` must rebuild the graph from the current parameter values and
    return a scalar Tensor. Returns the worst relative error per parameter.
    ``max_elems`` samples that many entries per parameter.
    """
    params = list(params)
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [np.zeros(p.shape) if p.grad is None else p.grad.copy() for p in params]
    rng = rng if rng is not None else np.random.default_rng(0)
    report = {}
    for i, (p, ga) in enumerate(zip(params, analytic)):
        p.data = np.ascontiguousarray(p.data)
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_elems is not None and flat.size > max_elems:
            idx = np.sort(rng.choice(flat.size, max_elems, replace=False))
        worst = 0.0
        for j in idx:
            orig = flat[j]
            flat[j] = orig + h
            up = loss_fn().item()
            flat[j] = orig - h
            down = loss_fn().item()
            flat[j] = orig
            numeric = (up - down) / (2 * h)
            worst = max(worst, float(rel_error(ga.reshape(-1)[j], numeric)))
        report[getattr(p, "name", "") or f"param{i}"] = worst
    return report
