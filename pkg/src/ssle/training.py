"""Loss terms and the PAE / DAE training loops."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .datagen import DatasetManifest
from .features import analysis_logmag
from .models import DAE, PAE, FeatureSpace, VariationalLatent, reparameterize
from .nn import Adam
from .tensor import Tensor, no_grad, stop_gradient

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 4
    epochs_pae: int = 50
    epochs_dae: int = 100
    theta1: float = 1e-3
    theta2: float = 1e-3
    alignment_weight: float = 1.0
    alignment_target: str = "masked"
    seed: int = 1234
    feature_kind: str = "log_magnitude"
    n_mels: int = 40
    n_mfcc: int = 20
    kl_warmup: bool = True
    warmup_fraction: float = 0.1
    pretasks: int = 2
    schedule: str = "sum"
    task2_decode: str = "average"

    def __post_init__(self):
        for name in ("lr", "batch_size", "epochs_pae", "epochs_dae"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("theta1", "theta2", "alignment_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        choices = {"alignment_target": ("mixture", "masked"), "schedule": ("sum", "alternate"),
                   "task2_decode": ("average", "masked"),
                   "feature_kind": ("log_magnitude", "mfcc")}
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if self.pretasks not in (1, 2):
            raise ValueError("pretasks must be 1 or 2")


# ---------------------------------------------------------------------------
# losses


def kl_loss(latent: VariationalLatent) -> Tensor:
    """KL(q || N(0, I)) summed over latent dims, averaged over frames."""
    mu, lv = latent.mu, latent.logvar
    per_dim = (lv + 1.0) - mu.square() - lv.exp()
    return per_dim.sum(axis=-2).mean() * -0.5


def recon_loss(S, S_hat) -> Tensor:
    """Mean squared error."""
    S, S_hat = _t(S), _t(S_hat)
    if S.shape != S_hat.shape:
        raise ValueError(f"shape mismatch: {S.shape} vs {S_hat.shape}")
    return (S - S_hat).square().mean()


def cycle_loss(S, S_hat, X, X_hat, theta2: float) -> Tensor:
    return recon_loss(S, S_hat) + recon_loss(X, X_hat) * theta2


def masking_loss(kl, l_s, l_cyc, theta1: float):
    return kl * theta1 + l_s + l_cyc


def _t(x):
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# reports

TERMS = ("kl", "recon", "cycle", "alignment")


@dataclass
class LossReport:
    stage: str
    steps: list = field(default_factory=list)

    def add(self, step, epoch, kl_weight, **terms):
        row = {"step": step, "epoch": epoch, "kl_weight": kl_weight}
        row.update({k: float(terms.get(k, 0.0)) for k in TERMS})
        row["total"] = float(terms["total"])
        self.steps.append(row)

    def epochs(self) -> list:
        out = {}
        for row in self.steps:
            out.setdefault(row["epoch"], []).append(row)
        return [{"epoch": e, **{k: float(np.mean([r[k] for r in rows])) for k in (*TERMS, "total")}}
                for e, rows in sorted(out.items())]

    def totals(self) -> np.ndarray:
        return np.array([r["total"] for r in self.steps])

    def to_text(self) -> str:
        lines = [f"# ssle loss log stage={self.stage}"]
        for r in self.steps:
            lines.append(" ".join([f"step={r['step']}", f"epoch={r['epoch']}",
                                   f"kl_weight={r['kl_weight']!r}"]
                                  + [f"{k}={r[k]!r}" for k in (*TERMS, "total")]))
        return "\n".join(lines) + "\n"

    def write(self, path):
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def read(cls, path) -> LossReport:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        stage = lines[0].split("stage=")[-1] if lines and lines[0].startswith("#") else ""
        report = cls(stage)
        for line in lines:
            if not line or line.startswith("#"):
                continue
            kv = dict(tok.split("=", 1) for tok in line.split())
            report.steps.append({k: (int(v) if k in ("step", "epoch") else float(v))
                                 for k, v in kv.items()})
        return report


# ---------------------------------------------------------------------------
# data


def _stack(arrays):
    frames = min(a.shape[-1] for a in arrays)
    return np.stack([a[..., :frames] for a in arrays])


def pae_data(manifest: DatasetManifest):
    clean, mix = [], []
    for r in manifest.split("pae"):
        clean.append(analysis_logmag(manifest.load(r, "clean")))
        mix.append(analysis_logmag(manifest.load(r, "mixture")))
    if not clean:
        raise TrainingError("manifest has no PAE pairs")
    return clean, mix


def dae_data(manifest: DatasetManifest):
    mix = [analysis_logmag(manifest.load(r, "mixture")) for r in manifest.split("dae")]
    if not mix:
        raise TrainingError("manifest has no DAE mixtures")
    return mix


def _kl_weight(cfg: TrainConfig, step: int, total_steps: int) -> float:
    if not cfg.kl_warmup:
        return cfg.theta1
    warm = max(1, int(round(cfg.warmup_fraction * total_steps)))
    return cfg.theta1 * min(1.0, (step + 1) / warm)


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def _check_finite(value: float, step: int, stage: str):
    if not np.isfinite(value):
        raise TrainingError(f"{stage}: non-finite loss at step {step}")


# ---------------------------------------------------------------------------
# PAE


def pae_objective(model: PAE, xc, tc, xm, cfg: TrainConfig, rng, tasks=(1, 2)):
    """Loss terms for one batch. Returns dict of Tensors (kl, recon, cycle)."""
    feats = model.features
    lat_c = model.encode(Tensor(xc))
    z_c = reparameterize(lat_c, rng=rng)
    kl = recon = cycle = Tensor(0.0)
    if 1 in tasks:
        dec_c = model.decode(z_c)
        r1 = recon_loss(tc, dec_c)
        re_c = model.encode(feats.input_from_target(dec_c))
        kl = kl + kl_loss(lat_c)
        recon = recon + r1
        cycle = cycle + r1 + recon_loss(lat_c.mu, re_c.mu) * cfg.theta2
    if 2 in tasks:
        lat_m = model.encode(Tensor(xm))
        z_m = reparameterize(lat_m, rng=rng)
        s_hat, _, _ = model.masking(z_m)
        code = (s_hat + z_c) * 0.5 if cfg.task2_decode == "average" else s_hat
        dec_m = model.decode(code)
        r2 = recon_loss(tc, dec_m)
        re_m = model.encode(feats.input_from_target(dec_m))
        kl = kl + kl_loss(lat_m)
        recon = recon + r2
        cycle = cycle + r2 + recon_loss(lat_c.mu, re_m.mu) * cfg.theta2
    return {"kl": kl, "recon": recon, "cycle": cycle}


def train_pae(manifest: DatasetManifest | None, cfg: TrainConfig, data=None, progress=None):
    """Train the PAE. Returns ``(model, optimizer, report)``.

    ``data`` may supply ``(clean_logmags, mixture_logmags)`` directly.
    """
    clean, mix = data if data is not None else pae_data(manifest)
    if not clean:
        raise TrainingError("no PAE training pairs")
    features = FeatureSpace(cfg.feature_kind, _sample_rate(manifest), cfg.n_mels, cfg.n_mfcc)
    features.fit(clean + mix)
    model = PAE(features, seed=cfg.seed, pretasks=cfg.pretasks)
    opt = Adam(model.named_parameters(), lr=cfg.lr, storage=np.float32)
    xc = [features.encoder_input(a) for a in clean]
    tc = [features.target(a) for a in clean]
    xm = [features.encoder_input(a) for a in mix]

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    per_epoch = -(-len(clean) // cfg.batch_size)
    total_steps = cfg.epochs_pae * per_epoch
    report = LossReport("pae")
    step = 0
    for epoch in range(cfg.epochs_pae):
        for idx in _batches(len(clean), cfg.batch_size, rng):
            if cfg.pretasks == 1:
                tasks = (1,)
            elif cfg.schedule == "alternate":
                tasks = (1,) if step % 2 == 0 else (2,)
            else:
                tasks = (1, 2)
            terms = pae_objective(model, _stack([xc[i] for i in idx]), _stack([tc[i] for i in idx]),
                                  _stack([xm[i] for i in idx]), cfg, rng, tasks)
            w = _kl_weight(cfg, step, total_steps)
            total = masking_loss(terms["kl"], terms["recon"], terms["cycle"], w)
            _check_finite(total.item(), step, "train-pae")
            opt.zero_grad()
            total.backward()
            opt.step()
            report.add(step, epoch, w, total=total.item(),
                       **{k: v.item() for k, v in terms.items()})
            if progress:
                progress(report.steps[-1])
            step += 1
    return model, opt, report


# ---------------------------------------------------------------------------
# DAE


def alignment_targets(pae: PAE, xm_list, target: str = "masked", use_masking: bool = True):
    """Frozen-PAE latents the DAE encoder is pulled toward, one per mixture."""
    out = []
    with no_grad():
        for x in xm_list:
            mu = pae.encode(Tensor(x[None])).mu
            if target == "masked" and use_masking:
                mu = pae.masking(mu)[0]
            out.append(mu.data[0])
    return out


def dae_objective(dae: DAE, xm, tm, align, cfg: TrainConfig, rng, kl_weight: float):
    lat = dae.encode(Tensor(xm))
    z = reparameterize(lat, rng=rng)
    recon = recon_loss(tm, dae.decode(z))
    kl = kl_loss(lat)
    alignment = recon_loss(z, stop_gradient(Tensor(align))) * cfg.alignment_weight
    total = kl * kl_weight + recon + alignment
    return total, {"kl": kl, "recon": recon, "alignment": alignment}


def train_dae(manifest: DatasetManifest | None, pae: PAE, cfg: TrainConfig, data=None,
              progress=None):
    """Train E2/D2 on unlabeled mixtures with the PAE frozen.

    Returns ``(model, optimizer, report)``.
    """
    if not isinstance(pae, PAE):
        raise TrainingError(f"train-dae needs a PAE model, got {type(pae).__name__}")
    mix = data if data is not None else dae_data(manifest)
    if not mix:
        raise TrainingError("no DAE mixtures")
    feats = pae.features
    dae = DAE(feats, seed=cfg.seed + 1)
    opt = Adam(dae.named_parameters(), lr=cfg.lr, storage=np.float32)
    xm = [feats.encoder_input(a) for a in mix]
    tm = [feats.target(a) for a in mix]
    align = alignment_targets(pae, xm, cfg.alignment_target, use_masking=pae.pretasks == 2)

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
    per_epoch = -(-len(mix) // cfg.batch_size)
    total_steps = cfg.epochs_dae * per_epoch
    report = LossReport("dae")
    step = 0
    for epoch in range(cfg.epochs_dae):
        for idx in _batches(len(mix), cfg.batch_size, rng):
            w = _kl_weight(cfg, step, total_steps)
            total, terms = dae_objective(dae, _stack([xm[i] for i in idx]), _stack([tm[i] for i in idx]),
                                         _stack([align[i] for i in idx]), cfg, rng, w)
            _check_finite(total.item(), step, "train-dae")
            opt.zero_grad()
            total.backward()
            opt.step()
            report.add(step, epoch, w, total=total.item(), **{k: v.item() for k, v in terms.items()})
            if progress:
                progress(report.steps[-1])
            step += 1
    return dae, opt, report


def _sample_rate(manifest) -> int:
    if manifest is None:
        return 16000
    return int(manifest.config.get("sample_rate", 16000))


def train_meta(cfg: TrainConfig, stage: str, steps: int, config_hash: str = "") -> dict:
    return {"stage": stage, "step": steps, "seed": cfg.seed, "config_hash": config_hash,
            "train": asdict(cfg)}
