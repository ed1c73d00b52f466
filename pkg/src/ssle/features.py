"""Analysis front-end shared by training and inference.

Waveforms are padded by one hop on each side so every real sample sits in
the fully overlapped region of the STFT.
"""

from __future__ import annotations

import numpy as np

from .dsp import FRAME_SIZE, HOP, ComplexSpectrogram, Waveform, istft, log_magnitude, stft


def analysis_stft(wave: Waveform, frame_size: int = FRAME_SIZE, hop: int = HOP) -> ComplexSpectrogram:
    padded = Waveform(np.concatenate([np.zeros(hop), wave.samples, np.zeros(hop)]), wave.sample_rate)
    return stft(padded, frame_size, hop)


def analysis_logmag(wave: Waveform) -> np.ndarray:
    """(513, T) log-magnitude array."""
    return log_magnitude(analysis_stft(wave)).frames.T


def synthesize(magnitude: np.ndarray, like: ComplexSpectrogram, length: int) -> Waveform:
    """Combine a (T, F) magnitude with the phase of ``like`` and invert, trimming the padding."""
    frames = magnitude * np.exp(1j * like.phase())
    spec = ComplexSpectrogram(frames, like.frame_size, like.hop, like.sample_rate, like.length)
    out = istft(spec).samples[like.hop:like.hop + length]
    return Waveform(out, like.sample_rate)
