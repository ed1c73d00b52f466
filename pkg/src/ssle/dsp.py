"""Time-frequency analysis, synthesis and feature extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

FRAME_SIZE = 1024
HOP = 512
LOG_FLOOR = 1e-7


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("waveform must be a non-empty 1-D array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class ComplexSpectrogram:
    """T x F complex frames. ``length`` is the unpadded signal length."""

    frames: np.ndarray
    frame_size: int = FRAME_SIZE
    hop: int = HOP
    sample_rate: int = 16000
    length: int | None = None

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ValueError(f"spectrogram frames must be T x F with T >= 1, got {frames.shape}")
        object.__setattr__(self, "frames", frames)

    @property
    def n_bins(self) -> int:
        return self.frames.shape[1]

    def magnitude(self) -> MagnitudeSpectrogram:
        return MagnitudeSpectrogram(np.abs(self.frames), self.frame_size, self.hop,
                                    self.sample_rate, self.length)

    def phase(self) -> np.ndarray:
        return np.angle(self.frames)


@dataclass(frozen=True)
class MagnitudeSpectrogram:
    frames: np.ndarray
    frame_size: int = FRAME_SIZE
    hop: int = HOP
    sample_rate: int = 16000
    length: int | None = None

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2:
            raise ValueError(f"magnitude frames must be T x F, got {frames.shape}")
        if np.any(frames < 0):
            raise ValueError("magnitude spectrogram has negative entries")
        object.__setattr__(self, "frames", frames)


@dataclass(frozen=True)
class FeatureMatrix:
    frames: np.ndarray  # T x D
    kind: str

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[1] == 0:
            raise ValueError(f"feature matrix must be T x D with D > 0, got {frames.shape}")
        if self.kind not in ("mfcc", "log_magnitude"):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if not np.all(np.isfinite(frames)):
            raise ValueError("feature matrix contains non-finite values")
        object.__setattr__(self, "frames", frames)

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


def hann_window(length: int) -> np.ndarray:
    """Periodic Hann window; COLA at hop = length / 2."""
    if length < 2 or length % 2:
        raise ValueError(f"window length must be even and >= 2, got {length}")
    n = np.arange(length)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * n / length))


def _frame_count(n_samples: int, frame_size: int, hop: int) -> int:
    if n_samples <= frame_size:
        return 1
    return 1 + int(np.ceil((n_samples - frame_size) / hop))


def stft(wave: Waveform, frame_size: int = FRAME_SIZE, hop: int = HOP) -> ComplexSpectrogram:
    if hop <= 0 or hop > frame_size:
        raise ValueError(f"hop must be in (0, frame_size], got {hop}")
    if frame_size % hop:
        raise ValueError(f"hop {hop} must divide frame_size {frame_size}")
    x = wave.samples
    n_frames = _frame_count(x.size, frame_size, hop)
    padded = np.zeros(frame_size + (n_frames - 1) * hop)
    padded[: x.size] = x
    frames = np.lib.stride_tricks.sliding_window_view(padded, frame_size)[::hop]
    spec = np.fft.rfft(frames * hann_window(frame_size), axis=1)
    return ComplexSpectrogram(spec, frame_size, hop, wave.sample_rate, x.size)


def istft(spec: ComplexSpectrogram) -> Waveform:
    """Least-squares weighted overlap-add inverse of :func:`stft`."""
    n = spec.frame_size
    if spec.n_bins != n // 2 + 1:
        raise ValueError(f"{spec.n_bins} bins inconsistent with frame_size {n}")
    window = hann_window(n)
    frames = np.fft.irfft(spec.frames, n=n, axis=1) * window
    n_frames = frames.shape[0]
    total = n + (n_frames - 1) * spec.hop
    out = np.zeros(total)
    norm = np.zeros(total)
    w2 = window * window
    for t in range(n_frames):
        start = t * spec.hop
        out[start:start + n] += frames[t]
        norm[start:start + n] += w2
    nz = norm > 1e-10
    out[nz] /= norm[nz]
    out[~nz] = 0.0
    length = spec.length if spec.length is not None else total
    return Waveform(out[:length], spec.sample_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, sample_rate: int, n_fft: int = FRAME_SIZE) -> np.ndarray:
    """Unit-area triangular mel filters, shape (n_mels, n_fft // 2 + 1)."""
    if n_mels < 1:
        raise ValueError("n_mels must be >= 1")
    if n_fft % 2:
        raise ValueError("n_fft must be even")
    n_bins = n_fft // 2 + 1
    freqs = np.arange(n_bins) * sample_rate / n_fft
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2), n_mels + 2))
    fb = np.zeros((n_mels, n_bins))
    for i in range(n_mels):
        lo, mid, hi = edges[i], edges[i + 1], edges[i + 2]
        rising = (freqs - lo) / (mid - lo)
        falling = (hi - freqs) / (hi - mid)
        fb[i] = np.maximum(0.0, np.minimum(rising, falling))
    sums = fb.sum(axis=1)
    empty = np.flatnonzero(sums <= 0)
    if empty.size:
        raise ValueError(f"n_mels={n_mels} too large for n_fft={n_fft}: "
                         f"filters {empty.tolist()} cover no FFT bins")
    return fb / sums[:, None]


def dct_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Orthonormal DCT-II basis, rows = coefficients."""
    k = np.arange(n_out)[:, None]
    n = np.arange(n_in)[None, :]
    basis = np.cos(np.pi * k * (2 * n + 1) / (2 * n_in)) * np.sqrt(2.0 / n_in)
    basis[0] /= np.sqrt(2.0)
    return basis


def mfcc(mag: MagnitudeSpectrogram, n_mels: int = 40, n_mfcc: int = 20,
         floor: float = LOG_FLOOR) -> FeatureMatrix:
    if n_mfcc > n_mels:
        raise ValueError(f"n_mfcc={n_mfcc} exceeds n_mels={n_mels}")
    fb = mel_filterbank(n_mels, mag.sample_rate, mag.frame_size)
    mel_power = (mag.frames ** 2) @ fb.T
    log_mel = np.log(np.maximum(mel_power, floor))
    coeffs = scipy.fft.dct(log_mel, type=2, norm="ortho", axis=1)[:, :n_mfcc]
    return FeatureMatrix(coeffs, "mfcc")


def log_magnitude(spec: ComplexSpectrogram | MagnitudeSpectrogram,
                  floor: float = LOG_FLOOR) -> FeatureMatrix:
    mag = np.abs(spec.frames)
    return FeatureMatrix(np.log(mag + floor), "log_magnitude")
