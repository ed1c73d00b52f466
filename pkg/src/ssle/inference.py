"""Enhancement: mixture -> E2 -> masking module -> D1 -> waveform."""

from __future__ import annotations

import numpy as np

from .dsp import LOG_FLOOR, Waveform, log_magnitude
from .features import analysis_stft, synthesize
from .masking import oracle_estimate
from .models import DAE, PAE
from .tensor import Tensor, no_grad


def enhance(mixture: Waveform, pae: PAE, dae: DAE) -> Waveform:
    """Deterministic enhancement using the encoder mean (no sampling)."""
    sr = pae.features.sample_rate
    if mixture.sample_rate != sr:
        raise ValueError(f"mixture is {mixture.sample_rate} Hz but the models were trained at {sr} Hz")
    spec = analysis_stft(mixture)
    logmag = log_magnitude(spec).frames.T
    with no_grad():
        x = Tensor(dae.features.encoder_input(logmag)[None])
        code = dae.encode(x).mu
        if pae.pretasks == 2:
            code = pae.masking(code)[0]
        out = pae.decode(code).data[0]
    est_logmag = pae.features.to_logmag(out)
    magnitude = np.maximum(np.exp(est_logmag) - LOG_FLOOR, 0.0).T
    return synthesize(magnitude, spec, len(mixture))


def oracle_enhance(mixture: Waveform, clean: Waveform, interference: Waveform) -> Waveform:
    """Ground-truth DM/ERM applied to magnitude spectrograms, identity autoencoders."""
    spec = analysis_stft(mixture)
    Y = np.abs(spec.frames)
    S = np.abs(analysis_stft(clean).frames)
    I = np.abs(analysis_stft(interference).frames)
    return synthesize(oracle_estimate(S, I, Y), spec, len(mixture))


def passthrough(mixture: Waveform) -> Waveform:
    return mixture
