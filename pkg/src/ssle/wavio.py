"""16-bit PCM mono WAV reading and writing."""

from __future__ import annotations

import os
import wave

import numpy as np

from .dsp import Waveform

_SCALE = 32768.0


class WavFormatError(ValueError):
    pass


def quantize(samples: np.ndarray) -> np.ndarray:
    """Round to the 16-bit grid used by :func:`write_wav`."""
    q = np.clip(np.round(np.asarray(samples) * _SCALE), -32768, 32767)
    return q / _SCALE


def write_wav(path, wave_: Waveform) -> None:
    ints = np.clip(np.round(wave_.samples * _SCALE), -32768, 32767).astype("<i2")
    try:
        with open(os.fspath(path), "wb") as raw, wave.open(raw, "wb") as fh:
            fh.setnchannels(1)
            fh.setsampwidth(2)
            fh.setframerate(wave_.sample_rate)
            fh.writeframes(ints.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_wav(path) -> Waveform:
    try:
        with wave.open(os.fspath(path), "rb") as fh:
            channels = fh.getnchannels()
            width = fh.getsampwidth()
            rate = fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except wave.Error as exc:
        raise WavFormatError(f"{path}: malformed or unsupported WAV ({exc})") from exc
    except EOFError as exc:
        raise WavFormatError(f"{path}: truncated WAV header") from exc
    if channels != 1:
        raise WavFormatError(f"{path}: expected mono, found {channels} channels")
    if width != 2:
        raise WavFormatError(f"{path}: expected 16-bit PCM, found {8 * width}-bit")
    ints = np.frombuffer(raw, dtype="<i2")
    if ints.size == 0:
        raise WavFormatError(f"{path}: no audio frames")
    return Waveform(ints.astype(np.float64) / _SCALE, rate)
