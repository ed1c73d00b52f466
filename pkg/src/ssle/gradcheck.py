"""Finite-difference gradient checks for every differentiable building block.

Each case builds a small random instance, redraws it while any
ReLU / PReLU / clip input sits within ``KINK_MARGIN`` of a kink, and compares
autodiff gradients (parameters and inputs) against central differences.
"""

from __future__ import annotations

import numpy as np

from .masking import MaskingModule
from .models import Decoder, Encoder, FeatureSpace, VariationalLatent
from .nn import Conv1d, Parameter, grad_check
from .tensor import Tensor, clip, prelu, relu, track_kinks
from .training import cycle_loss, kl_loss, masking_loss, recon_loss

KINK_MARGIN = 1e-3
TOLERANCE = 1e-4
STEP = 1e-4


def _shape(rng):
    return int(rng.integers(1, 3)), int(rng.integers(2, 5)), int(rng.integers(3, 9))


def _param(rng, shape, name, scale=1.0):
    return Parameter(rng.standard_normal(shape) * scale, name)


def _readout(out: Tensor, rng) -> Tensor:
    """Random weights for a linear readout so every output element matters."""
    return Tensor(rng.standard_normal(out.shape))


def _case_conv1d(rng):
    B, C, T = _shape(rng)
    O, K = int(rng.integers(1, 5)), int(rng.choice([1, 3, 5, 7]))
    layer = Conv1d(C, O, K, rng)
    layer.weight.name, layer.bias.name = "weight", "bias"
    x = _param(rng, (B, C, T), "input")
    w = _readout(layer(x), rng)
    return (lambda: (layer(x) * w).sum()), [layer.weight, layer.bias, x]


def _case_relu(rng):
    x = _param(rng, _shape(rng), "input")
    w = _readout(x, rng)
    return (lambda: (relu(x) * w).sum()), [x]


def _case_prelu(rng):
    x = _param(rng, _shape(rng), "input")
    alpha = Parameter(np.array([rng.uniform(0.05, 0.5)]), "alpha")
    w = _readout(x, rng)
    return (lambda: (prelu(x, alpha) * w).sum()), [x, alpha]


def _case_clip(rng):
    x = _param(rng, _shape(rng), "input", scale=3.0)
    w = _readout(x, rng)
    return (lambda: (clip(x, -2.0, 2.0) * w).sum()), [x]


def _named(module, extra):
    params = []
    for name, p in module.named_parameters():
        p.name = name
        params.append(p)
    return params + extra


def _case_encoder(rng):
    B, C, T = _shape(rng)
    hidden = [int(rng.integers(2, 5)) for _ in range(2)]
    enc = Encoder(C, hidden, latent_dim=int(rng.integers(2, 4)), kernel=int(rng.choice([3, 5])), rng=rng)
    x = _param(rng, (B, C, T), "input")
    lat = enc(x)
    wm, wl = _readout(lat.mu, rng), _readout(lat.logvar, rng)

    def loss():
        out = enc(x)
        return (out.mu * wm).sum() + (out.logvar * wl).sum()

    return loss, _named(enc, [x])


def _case_decoder(rng):
    B, C, T = _shape(rng)
    hidden = [int(rng.integers(2, 5)) for _ in range(2)]
    dec = Decoder(int(rng.integers(2, 6)), hidden, latent_dim=C, kernel=int(rng.choice([3, 5])), rng=rng)
    z = _param(rng, (B, C, T), "input")
    w = _readout(dec(z), rng)
    return (lambda: (dec(z) * w).sum()), _named(dec, [z])


def _case_masking(rng):
    B, C, T = _shape(rng)
    mod = MaskingModule(dim=C, kernel=int(rng.choice([3, 5])), depth=2, rng=rng)
    for p in mod.parameters():
        p.data = p.data * 2.0
    Y = _param(rng, (B, C, T), "input")
    out = mod(Y)
    ws = [_readout(o, rng) for o in out]

    def loss():
        s_hat, dm, erm = mod(Y)
        return (s_hat * ws[0]).sum() + (dm * ws[1]).sum() + (erm * ws[2]).sum()

    return loss, _named(mod, [Y])


def _case_kl(rng):
    shape = _shape(rng)
    mu = _param(rng, shape, "mu")
    lv = _param(rng, shape, "logvar", scale=0.5)
    return (lambda: kl_loss(VariationalLatent(mu, lv))), [mu, lv]


def _case_recon(rng):
    shape = _shape(rng)
    a, b = _param(rng, shape, "target"), _param(rng, shape, "estimate")
    return (lambda: recon_loss(a, b)), [a, b]


def _case_cycle(rng):
    ps = [_param(rng, s, n) for s, n in zip([_shape(rng)] * 2 + [_shape(rng)] * 2, ["S", "S_hat", "X", "X_hat"])]
    theta2 = float(rng.uniform(1e-3, 1.0))
    return (lambda: cycle_loss(*ps, theta2)), ps


def _case_masking_loss(rng):
    shape = _shape(rng)
    mu, lv = _param(rng, shape, "mu"), _param(rng, shape, "logvar", scale=0.5)
    a, b = _param(rng, shape, "S"), _param(rng, shape, "S_hat")
    x, xh = _param(rng, shape, "X"), _param(rng, shape, "X_hat")

    def loss():
        kl = kl_loss(VariationalLatent(mu, lv))
        return masking_loss(kl, recon_loss(a, b), cycle_loss(a, b, x, xh, 1e-3), 1e-3)

    return loss, [mu, lv, a, b, x, xh]


def _case_mfcc_features(rng):
    fs = FeatureSpace("mfcc", 16000, n_mels=int(rng.integers(4, 9)), n_mfcc=int(rng.integers(2, 5)))
    T = int(rng.integers(2, 5))
    fs.fit([rng.normal(-2.0, 1.0, (513, T))])
    t = _param(rng, (1, 513, T), "target", scale=0.5)
    w = _readout(fs.input_from_target(t), rng)
    return (lambda: (fs.input_from_target(t) * w).sum()), [t]


CASES = {
    "conv1d": _case_conv1d,
    "relu": _case_relu,
    "prelu": _case_prelu,
    "clip": _case_clip,
    "encoder": _case_encoder,
    "decoder": _case_decoder,
    "masking": _case_masking,
    "kl": _case_kl,
    "recon": _case_recon,
    "cycle": _case_cycle,
    "masking_loss": _case_masking_loss,
    "mfcc_features": _case_mfcc_features,
}


def _clear_of_kinks(loss_fn, params, h) -> bool:
    """No kink input within KINK_MARGIN (plus slack for the step) at the base point."""
    with track_kinks() as probe:
        loss_fn()
    return probe[0] >= KINK_MARGIN + h * 10


def check_case(name: str, rng, h: float = STEP, max_tries: int = 200) -> dict:
    build = CASES[name]
    for _ in range(max_tries):
        loss_fn, params = build(rng)
        if _clear_of_kinks(loss_fn, params, h):
            return grad_check(loss_fn, params, h=h, rng=rng)
    raise RuntimeError(f"{name}: could not draw an instance clear of kinks in {max_tries} tries")


def run_suite(instances: int = 20, seed: int = 0, names=None, h: float = STEP) -> dict:
    """Worst relative error per case name over ``instances`` random draws."""
    rng = np.random.default_rng(seed)
    worst = {}
    for name in names or CASES:
        errs = [max(check_case(name, rng, h).values()) for _ in range(instances)]
        worst[name] = {"instances": instances, "max_rel_error": float(max(errs))}
    return worst
