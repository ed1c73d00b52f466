"""Dereverberation mask (DM) and estimated ratio mask (ERM) module.

The oracle functions work on plain arrays (spectrogram or latent domain);
:class:`MaskingModule` is the learned three-stage estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import ConvStack, Module, PReLU
from .tensor import Tensor, prelu, relu

MASK_FLOOR = 1e-7


@dataclass(frozen=True)
class Mask:
    values: np.ndarray
    kind: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if self.kind not in ("dm", "erm"):
            raise ValueError(f"unknown mask kind {self.kind!r}")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("mask values must be finite and non-negative")
        object.__setattr__(self, "values", values)


def _same_shape(*arrays):
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise ValueError(f"shape mismatch: {[np.shape(a) for a in arrays]}")


def _values(m):
    return m.values if isinstance(m, Mask) else np.asarray(m, dtype=np.float64)


def oracle_dm(S, I, Y, floor: float = MASK_FLOOR) -> Mask:
    """(S + I) / Y elementwise, Y floored at ``floor``."""
    _same_shape(S, I, Y)
    return Mask((np.asarray(S) + np.asarray(I)) / np.maximum(Y, floor), "dm")


def apply_dm(Y, dm) -> np.ndarray:
    _same_shape(Y, _values(dm))
    return np.asarray(Y) * _values(dm)


def oracle_erm(S, Yd, floor: float = MASK_FLOOR) -> Mask:
    """|S| / |Yd| elementwise, |Yd| floored at ``floor``."""
    _same_shape(S, Yd)
    return Mask(np.abs(S) / np.maximum(np.abs(Yd), floor), "erm")


def compose_estimate(Y, dm, erm, prelu_alpha: float = 0.25) -> np.ndarray:
    """PReLU(erm * dm * Y)."""
    dm, erm = _values(dm), _values(erm)
    _same_shape(Y, dm, erm)
    x = erm * dm * np.asarray(Y)
    return np.where(x > 0, x, prelu_alpha * x)


def oracle_estimate(S, I, Y, floor: float = MASK_FLOOR) -> np.ndarray:
    """Run the DM -> ERM -> compose chain with ground-truth masks."""
    dm = oracle_dm(S, I, Y, floor)
    erm = oracle_erm(S, apply_dm(Y, dm), floor)
    return compose_estimate(Y, dm, erm)


class MaskingModule(Module):
    """Learned DM/ERM heads with a residual connection and PReLU output.

    Each head is two 'same' convolutions (dim -> dim, kernel 7), ReLU between
    them and on the output, so predicted masks are non-negative.
    """

    def __init__(self, dim: int = 64, kernel: int = 7, depth: int = 2, rng=None):
        self.dm_head = ConvStack([dim] * (depth + 1), kernel, rng)
        self.erm_head = ConvStack([dim] * (depth + 1), kernel, rng)
        self.prelu = PReLU(0.25)
        self.dim = dim

    def __call__(self, Y: Tensor):
        if Y.shape[-2] != self.dim:
            raise ValueError(f"masking module expects {self.dim} channels, got shape {Y.shape}")
        dm = relu(self.dm_head(Y))
        erm = relu(self.erm_head(Y * dm))
        S_hat = prelu(erm * dm * Y + Y, self.prelu.alpha)
        return S_hat, dm, erm


def masking_forward(Y: Tensor, params: MaskingModule):
    return params(Y)
