"""Variational autoencoders (PAE: E1/D1 + masking module, DAE: E2/D2) and persistence."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import checkpoint as ckpt
from .dsp import FRAME_SIZE, LOG_FLOOR, FeatureMatrix, dct_matrix, mel_filterbank
from .masking import MaskingModule
from .nn import ConvStack, Conv1d, Module, name_parameters
from .tensor import Tensor, clip, matmul, maximum

LATENT_DIM = 64
LOGVAR_RANGE = (-10.0, 10.0)
PAE_HIDDEN = (512, 256, 128)
DAE_HIDDEN = (512, 400, 300, 200, 100)
N_BINS = FRAME_SIZE // 2 + 1


@dataclass
class VariationalLatent:
    mu: Tensor  # (B, 64, T) or (64, T)
    logvar: Tensor

    def __post_init__(self):
        if self.mu.shape != self.logvar.shape:
            raise ValueError(f"mu {self.mu.shape} and logvar {self.logvar.shape} differ")


class Encoder(Module):
    """'Same' conv stack with ReLU after each hidden layer and mu/logvar heads."""

    def __init__(self, input_dim: int, hidden, latent_dim: int = LATENT_DIM, kernel: int = 7, rng=None):
        self.body = ConvStack([input_dim, *hidden], kernel, rng, final_relu=True)
        self.mu = Conv1d(hidden[-1], latent_dim, kernel, rng)
        self.logvar = Conv1d(hidden[-1], latent_dim, kernel, rng)

    @property
    def schedule(self):
        return [*self.body.channels, self.mu.c_out]

    def __call__(self, x: Tensor) -> VariationalLatent:
        h = self.body(x)
        return VariationalLatent(self.mu(h), clip(self.logvar(h), *LOGVAR_RANGE))


class Decoder(Module):
    """Mirror of the encoder schedule; the output layer is linear."""

    def __init__(self, output_dim: int, hidden, latent_dim: int = LATENT_DIM, kernel: int = 7, rng=None):
        self.body = ConvStack([latent_dim, *reversed(hidden), output_dim], kernel, rng)

    @property
    def schedule(self):
        return self.body.channels

    def __call__(self, z: Tensor) -> Tensor:
        return self.body(z)


def reparameterize(latent: VariationalLatent, seed=None, rng=None) -> Tensor:
    """z = mu + exp(logvar / 2) * eta with eta ~ N(0, 1)."""
    rng = rng if rng is not None else np.random.default_rng(seed)
    eta = rng.standard_normal(latent.mu.shape)
    return latent.mu + (latent.logvar * 0.5).exp() * eta


# ---------------------------------------------------------------------------
# feature handling shared by both autoencoders


class FeatureSpace:
    """Maps raw log-magnitude frames to normalised encoder inputs and decoder targets.

    Arrays are laid out (B, D, T). Decoder outputs live in the normalised
    log-magnitude space; :meth:`input_from_target` is the differentiable map
    used when a decoded estimate is re-encoded.
    """

    def __init__(self, kind="log_magnitude", sample_rate=16000, n_mels=40, n_mfcc=20,
                 in_mean=None, in_std=None, out_mean=None, out_std=None):
        if kind not in ("log_magnitude", "mfcc"):
            raise ValueError(f"unknown feature kind {kind!r}")
        self.kind, self.sample_rate, self.n_mels, self.n_mfcc = kind, sample_rate, n_mels, n_mfcc
        d_in = self.input_dim
        self.in_mean = np.zeros((d_in, 1)) if in_mean is None else np.asarray(in_mean).reshape(d_in, 1)
        self.in_std = np.ones((d_in, 1)) if in_std is None else np.asarray(in_std).reshape(d_in, 1)
        self.out_mean = np.zeros((N_BINS, 1)) if out_mean is None else np.asarray(out_mean).reshape(N_BINS, 1)
        self.out_std = np.ones((N_BINS, 1)) if out_std is None else np.asarray(out_std).reshape(N_BINS, 1)
        if kind == "mfcc":
            self._mel = mel_filterbank(n_mels, sample_rate, FRAME_SIZE)
            self._dct = dct_matrix(n_mfcc, n_mels)

    @property
    def input_dim(self) -> int:
        return N_BINS if self.kind == "log_magnitude" else self.n_mfcc

    def _raw_input(self, logmag: np.ndarray) -> np.ndarray:
        if self.kind == "log_magnitude":
            return logmag
        power = (np.exp(logmag) - LOG_FLOOR) ** 2
        return self._dct @ np.log(np.maximum(self._mel @ power, LOG_FLOOR))

    def fit(self, logmags) -> FeatureSpace:
        """Per-dimension statistics over a list of (513, T) log-magnitude arrays."""
        out = np.concatenate(list(logmags), axis=-1)
        inp = self._raw_input(out)

        def stats(a):
            mean = a.mean(axis=-1, keepdims=True)
            std = np.maximum(a.std(axis=-1, keepdims=True), 1e-2)
            return (mean.astype(np.float32).astype(np.float64),
                    std.astype(np.float32).astype(np.float64))

        self.in_mean, self.in_std = stats(inp)
        self.out_mean, self.out_std = stats(out)
        return self

    def encoder_input(self, logmag: np.ndarray) -> np.ndarray:
        return (self._raw_input(logmag) - self.in_mean) / self.in_std

    def target(self, logmag: np.ndarray) -> np.ndarray:
        return (logmag - self.out_mean) / self.out_std

    def to_logmag(self, target: np.ndarray) -> np.ndarray:
        return target * self.out_std + self.out_mean

    def input_from_target(self, t: Tensor) -> Tensor:
        if self.kind == "log_magnitude":
            if (np.array_equal(self.in_mean, self.out_mean)
                    and np.array_equal(self.in_std, self.out_std)):
                return t
            return (t * self.out_std + self.out_mean - self.in_mean) * (1.0 / self.in_std)
        logmag = t * self.out_std + self.out_mean
        mag = logmag.exp() - LOG_FLOOR
        mel = matmul(self._mel, mag.square())
        raw = matmul(self._dct, maximum(mel, LOG_FLOOR).log())
        return (raw - self.in_mean) * (1.0 / self.in_std)

    def tensors(self) -> dict:
        return {"norm.in_mean": self.in_mean, "norm.in_std": self.in_std,
                "norm.out_mean": self.out_mean, "norm.out_std": self.out_std}

    def meta(self) -> dict:
        return {"kind": self.kind, "sample_rate": self.sample_rate,
                "n_mels": self.n_mels, "n_mfcc": self.n_mfcc}

    @classmethod
    def restore(cls, meta: dict, tensors: dict) -> FeatureSpace:
        return cls(meta["kind"], meta["sample_rate"], meta["n_mels"], meta["n_mfcc"],
                   tensors["norm.in_mean"], tensors["norm.in_std"],
                   tensors["norm.out_mean"], tensors["norm.out_std"])


class PAE(Module):
    """Pre-training autoencoder: E1, D1 and the masking module."""

    kind = "pae"

    def __init__(self, features: FeatureSpace | None = None, hidden=PAE_HIDDEN, kernel=7,
                 seed: int = 0, mask_depth: int = 2, latent_dim: int = LATENT_DIM,
                 pretasks: int = 2):
        rng = np.random.default_rng(seed)
        self.features = features or FeatureSpace()
        self.hidden = tuple(hidden)
        self.encoder = Encoder(self.features.input_dim, self.hidden, latent_dim, kernel, rng)
        self.decoder = Decoder(N_BINS, self.hidden, latent_dim, kernel, rng)
        self.masking = MaskingModule(latent_dim, kernel, mask_depth, rng)
        # pretasks == 1 trains latent learning only; inference then skips the masks.
        self.pretasks = pretasks
        self.arch = {"hidden": list(self.hidden), "kernel": kernel, "mask_depth": mask_depth,
                     "latent_dim": latent_dim, "seed": seed, "pretasks": pretasks}
        name_parameters(self)

    def encode(self, x: Tensor) -> VariationalLatent:
        return self.encoder(x)

    def decode(self, z: Tensor) -> Tensor:
        return self.decoder(z)


class DAE(Module):
    """Downstream autoencoder: E2 and D2 over mixture features."""

    kind = "dae"

    def __init__(self, features: FeatureSpace | None = None, hidden=DAE_HIDDEN, kernel=7,
                 seed: int = 0, latent_dim: int = LATENT_DIM):
        rng = np.random.default_rng(seed)
        self.features = features or FeatureSpace()
        self.hidden = tuple(hidden)
        self.encoder = Encoder(self.features.input_dim, self.hidden, latent_dim, kernel, rng)
        self.decoder = Decoder(N_BINS, self.hidden, latent_dim, kernel, rng)
        self.arch = {"hidden": list(self.hidden), "kernel": kernel, "latent_dim": latent_dim,
                     "seed": seed}
        name_parameters(self)

    def encode(self, x: Tensor) -> VariationalLatent:
        return self.encoder(x)

    def decode(self, z: Tensor) -> Tensor:
        return self.decoder(z)


# ---------------------------------------------------------------------------
# single-utterance helpers (T x D in, T x D out)


def _batch(features: FeatureMatrix, expected: int) -> Tensor:
    if features.dim != expected:
        raise ValueError(f"feature dimension {features.dim} does not match model input {expected}")
    return Tensor(features.frames.T[None])


def _latent_frames(latent: VariationalLatent) -> VariationalLatent:
    return VariationalLatent(Tensor(latent.mu.data[0].T), Tensor(latent.logvar.data[0].T))


def pae_encode(model: PAE, features: FeatureMatrix) -> VariationalLatent:
    """Per-frame latent, mu and logvar each T x 64."""
    return _latent_frames(model.encode(_batch(features, model.features.input_dim)))


def dae_encode(model: DAE, features: FeatureMatrix) -> VariationalLatent:
    return _latent_frames(model.encode(_batch(features, model.features.input_dim)))


def _decode_frames(model, z) -> FeatureMatrix:
    z = np.asarray(z.data if isinstance(z, Tensor) else z)
    if z.ndim != 2 or z.shape[1] != LATENT_DIM:
        raise ValueError(f"latent must be T x {LATENT_DIM}, got {z.shape}")
    out = model.decode(Tensor(z.T[None]))
    return FeatureMatrix(out.data[0].T, "log_magnitude")


def pae_decode(model: PAE, z) -> FeatureMatrix:
    return _decode_frames(model, z)


def dae_decode(model: DAE, z) -> FeatureMatrix:
    return _decode_frames(model, z)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model, path, optimizer=None, meta: dict | None = None) -> None:
    tensors = {f"param.{n}": p.data for n, p in model.named_parameters()}
    tensors.update(model.features.tensors())
    info = {"arch": model.arch, "features": model.features.meta()}
    if optimizer is not None:
        s = optimizer.state
        for n in sorted(s.m):
            tensors[f"adam.m.{n}"] = s.m[n]
            tensors[f"adam.v.{n}"] = s.v[n]
        info["adam"] = {"t": s.t, "lr": s.lr, "beta1": s.beta1, "beta2": s.beta2, "eps": s.eps}
    info.update(meta or {})
    ckpt.write(path, model.kind, tensors, info)


def load_checkpoint(path, expected_kind: str | None = None):
    """Return ``(model, meta, adam_tensors)``."""
    kind, tensors, meta = ckpt.read(path)
    if expected_kind is not None and kind != expected_kind:
        raise ckpt.CheckpointError(f"{path}: expected a {expected_kind!r} checkpoint, found {kind!r}")
    if meta is None:
        raise ckpt.CheckpointError(f"{path}: missing metadata")
    features = FeatureSpace.restore(meta["features"], tensors)
    arch = meta["arch"]
    if kind == "pae":
        model = PAE(features, arch["hidden"], arch["kernel"], arch["seed"], arch["mask_depth"],
                    arch["latent_dim"], arch.get("pretasks", 2))
    elif kind == "dae":
        model = DAE(features, arch["hidden"], arch["kernel"], arch["seed"], arch["latent_dim"])
    else:
        raise ckpt.CheckpointError(f"{path}: unknown model kind {kind!r}")
    model.load_state_dict({k[len("param."):]: v for k, v in tensors.items() if k.startswith("param.")})
    adam = {k[len("adam."):]: v for k, v in tensors.items() if k.startswith("adam.")}
    return model, meta, adam
