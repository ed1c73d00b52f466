"""Objective quality metrics: SI-SDR, segmental SNR and log-spectral distance."""

from __future__ import annotations

import numpy as np

from .dsp import LOG_FLOOR, MagnitudeSpectrogram, Waveform

SI_SDR_CAP = 60.0
SEG_SNR_RANGE = (-10.0, 35.0)


def _samples(x) -> np.ndarray:
    return x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=np.float64)


def si_sdr(est, ref) -> float:
    """Scale-invariant SDR in dB, clamped to [-60, +60] dB."""
    est, ref = _samples(est), _samples(ref)
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {ref.shape}")
    ref_energy = ref @ ref
    if ref_energy == 0:
        raise ValueError("reference signal has zero energy")
    target = (est @ ref / ref_energy) * ref
    residual = est - target
    num, den = target @ target, residual @ residual
    if num <= den * 10.0 ** (-SI_SDR_CAP / 10.0):
        return -SI_SDR_CAP  # includes a silent estimate
    if den <= num * 10.0 ** (-SI_SDR_CAP / 10.0):
        return SI_SDR_CAP
    return float(10.0 * np.log10(num / den))


def seg_snr(est, ref, frame: int = 512, silence: float = 1e-10) -> float:
    """Mean per-frame SNR, each frame clamped to [-10, 35] dB; silent reference frames skipped."""
    est, ref = _samples(est), _samples(ref)
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {ref.shape}")
    n = ref.size // frame
    if n == 0:
        raise ValueError(f"signal shorter than one {frame}-sample frame")
    r = ref[: n * frame].reshape(n, frame)
    e = est[: n * frame].reshape(n, frame)
    sig = np.sum(r * r, axis=1)
    noise = np.sum((r - e) ** 2, axis=1)
    keep = sig >= silence
    if not keep.any():
        raise ValueError("every reference frame is silent")
    lo, hi = SEG_SNR_RANGE
    with np.errstate(divide="ignore"):
        snr = np.where(noise[keep] > 0, 10.0 * np.log10(sig[keep] / np.maximum(noise[keep], 1e-300)), hi)
    return float(np.mean(np.clip(snr, lo, hi)))


def lsd(est_mag, ref_mag, floor: float = LOG_FLOOR) -> float:
    """Mean over frames of the RMS (over bins) dB difference."""
    a = est_mag.frames if isinstance(est_mag, MagnitudeSpectrogram) else np.asarray(est_mag)
    b = ref_mag.frames if isinstance(ref_mag, MagnitudeSpectrogram) else np.asarray(ref_mag)
    if a.shape != b.shape:
        raise ValueError(f"spectrogram geometry mismatch: {a.shape} vs {b.shape}")
    diff = 20.0 * np.log10((a + floor) / (b + floor))
    return float(np.mean(np.sqrt(np.mean(diff * diff, axis=1))))
