"""Report figures. Rendered off-screen with the Agg backend; PNG metadata is
stripped so identical inputs give identical files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_SAVE = {"dpi": 100, "metadata": {"Software": None}}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="png", **_SAVE)
    plt.close(fig)


def plot_losses(report, path, terms=None):
    """Per-epoch mean of each logged loss term, log-scaled."""
    epochs = report.epochs()
    if not epochs:
        raise ValueError("loss report is empty")
    terms = terms or [t for t in ("total", "kl", "recon", "cycle", "alignment") if t in epochs[0]]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    x = np.arange(len(epochs))
    for t in terms:
        y = np.array([e[t] for e in epochs])
        if np.any(y > 0):
            ax.plot(x, np.where(y > 0, y, np.nan), label=t)
    ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(f"{report.stage} training")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_metrics(metrics, path):
    """Input vs output metric means per SNR."""
    groups = metrics.aggregate(("snr_db",))
    labels = [f"{g['snr_db']:+g} dB" for g in groups]
    x = np.arange(len(groups))
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.2))
    for ax, (base, name) in zip(axes, [("si_sdr", "SI-SDR (dB)"), ("seg_snr", "segSNR (dB)"), ("lsd", "LSD (dB)")]):
        ax.bar(x - 0.2, [g[f"{base}_in"] for g in groups], 0.4, label="input")
        ax.bar(x + 0.2, [g[f"{base}_out"] for g in groups], 0.4, label="output")
        ax.set_xticks(x, labels)
        ax.set_title(name)
        ax.axhline(0.0, color="k", lw=0.5)
    axes[0].legend(fontsize=8)
    _save(fig, path)


def plot_spectrograms(specs: dict, path, floor: float = 1e-7):
    """Log-magnitude images, one panel per named (frames x bins) magnitude."""
    fig, axes = plt.subplots(len(specs), 1, figsize=(6, 2.2 * len(specs)), squeeze=False)
    for ax, (name, mag) in zip(axes[:, 0], specs.items()):
        ax.imshow(20.0 * np.log10(np.asarray(mag).T + floor), origin="lower", aspect="auto",
                  vmin=-80, vmax=20, cmap="magma")
        ax.set_title(name, fontsize=9)
        ax.set_ylabel("bin")
    axes[-1, 0].set_xlabel("frame")
    _save(fig, path)
