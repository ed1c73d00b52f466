import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssle.dsp import (
    ComplexSpectrogram, MagnitudeSpectrogram, Waveform, hann_window, hz_to_mel, istft,
    log_magnitude, mel_filterbank, mfcc, stft,
)

SR = 16000


def direct_dft(frame):
    """O(N^2) non-negative-frequency DFT."""
    n = frame.size
    k = np.arange(n // 2 + 1)[:, None]
    t = np.arange(n)[None, :]
    return (frame[None, :] * np.exp(-2j * np.pi * k * t / n)).sum(axis=1)


def naive_dct2(x, n_out):
    n = x.size
    out = np.empty(n_out)
    for k in range(n_out):
        s = sum(x[i] * np.cos(np.pi * k * (2 * i + 1) / (2 * n)) for i in range(n))
        out[k] = s * np.sqrt((1.0 if k == 0 else 2.0) / n)
    return out


def interior(n, frame=1024):
    return slice(frame, n - frame)


# --- window ----------------------------------------------------------------

def test_hann_values():
    w = hann_window(1024)
    assert w[0] == 0.0
    assert w[512] == 1.0
    assert hann_window(8)[2] == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("length", [0, 1, 7, 1023])
def test_hann_rejects(length):
    with pytest.raises(ValueError):
        hann_window(length)


def test_hann_cola_half_hop():
    w = hann_window(1024)
    np.testing.assert_allclose(w[:512] + w[512:], 1.0, atol=1e-15)


# --- stft ------------------------------------------------------------------

def test_stft_geometry():
    spec = stft(Waveform(np.zeros(16000), SR))
    assert spec.frames.shape[1] == 513
    assert spec.frame_size == 1024 and spec.hop == 512


def test_stft_zero_input():
    spec = stft(Waveform(np.zeros(2048), SR), hop=512)
    assert np.all(spec.frames == 0)


def test_stft_impulse_at_zero_is_windowed_out():
    x = np.zeros(2048)
    x[0] = 1.0
    spec = stft(Waveform(x, SR))
    np.testing.assert_allclose(np.abs(spec.frames[0]), 0.0, atol=1e-15)


def test_stft_matches_direct_dft():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(3000)
    spec = stft(Waveform(x, SR))
    w = hann_window(1024)
    for t in (0, 2, spec.frames.shape[0] - 1):
        frame = np.zeros(1024)
        seg = x[t * 512: t * 512 + 1024]
        frame[: seg.size] = seg
        np.testing.assert_allclose(spec.frames[t], direct_dft(frame * w), atol=1e-9)


def test_stft_bin_centred_sine():
    k = 37
    n = np.arange(8192)
    x = np.sin(2 * np.pi * k * n / 1024)
    mag = np.abs(stft(Waveform(x, SR)).frames)
    for row in mag[1:-1]:
        assert np.argmax(row) == k
        # Hann main lobe spans k-1..k+1; everything else is leakage-free for a bin-centred tone
        assert row[k] ** 2 / np.sum(row ** 2) > 0.6
        np.testing.assert_allclose(np.delete(row, [k - 1, k, k + 1]), 0.0, atol=1e-9)


@pytest.mark.parametrize("hop", [0, -1, 2048, 300])
def test_stft_rejects_bad_hop(hop):
    with pytest.raises(ValueError):
        stft(Waveform(np.ones(4096), SR), hop=hop)


def test_parseval_per_frame():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(4096)
    spec = stft(Waveform(x, SR))
    w = hann_window(1024)
    for t in range(spec.frames.shape[0]):
        seg = np.zeros(1024)
        s = x[t * 512: t * 512 + 1024]
        seg[: s.size] = s
        X = spec.frames[t]
        # full spectrum energy from the retained half: DC and Nyquist once, the rest twice
        full = np.abs(X[0]) ** 2 + np.abs(X[-1]) ** 2 + 2 * np.sum(np.abs(X[1:-1]) ** 2)
        assert np.sum((seg * w) ** 2) == pytest.approx(full / 1024, rel=1e-12)


# --- istft -----------------------------------------------------------------

def test_istft_zero():
    spec = ComplexSpectrogram(np.zeros((5, 513), complex), 1024, 512, SR, 3072)
    assert np.all(istft(spec).samples == 0)


def test_istft_rejects_bad_geometry():
    with pytest.raises(ValueError):
        istft(ComplexSpectrogram(np.zeros((3, 100), complex), 1024, 512, SR, 2048))


def test_round_trip_noise():
    x = np.random.default_rng(0).standard_normal(SR)
    y = istft(stft(Waveform(x, SR))).samples
    sl = interior(x.size)
    assert np.max(np.abs(y[sl] - x[sl])) < 1e-6


def test_round_trip_sine():
    x = np.sin(2 * np.pi * 440 * np.arange(SR) / SR)
    y = istft(stft(Waveform(x, SR))).samples
    sl = interior(x.size)
    assert np.linalg.norm(y[sl] - x[sl]) / np.linalg.norm(x[sl]) < 1e-6


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2100, 9000), seed=st.integers(0, 2**31 - 1), scale=st.floats(1e-3, 1e3))
def test_round_trip_property(n, seed, scale):
    x = np.random.default_rng(seed).standard_normal(n) * scale
    y = istft(stft(Waveform(x, SR))).samples
    assert y.size == n
    sl = interior(n)
    assert np.linalg.norm(y[sl] - x[sl]) <= 1e-6 * np.linalg.norm(x[sl])


def test_stft_deterministic():
    x = np.random.default_rng(1).standard_normal(5000)
    a, b = stft(Waveform(x, SR)).frames, stft(Waveform(x.copy(), SR)).frames
    assert a.tobytes() == b.tobytes()


# --- mel / mfcc --------------------------------------------------------------

def test_mel_formula():
    assert hz_to_mel(700.0) == pytest.approx(2595 * np.log10(2), abs=1e-12)
    assert hz_to_mel(700.0) == pytest.approx(781.17, abs=5e-3)


def test_filterbank_properties():
    fb = mel_filterbank(40, SR, 1024)
    assert fb.shape == (40, 513)
    assert np.all(fb >= 0)
    assert np.all(fb.sum(axis=1) > 0)
    assert np.all(np.diff(np.argmax(fb, axis=1)) > 0)
    # every bin strictly inside the covered band has weight from some filter
    assert np.all(fb[:, 1:-1].sum(axis=0) > 0)


def test_filterbank_too_many_mels():
    with pytest.raises(ValueError, match="too large"):
        mel_filterbank(400, SR, 1024)


@pytest.mark.parametrize("n_mels,n_fft", [(0, 1024), (10, 1023)])
def test_filterbank_rejects(n_mels, n_fft):
    with pytest.raises(ValueError):
        mel_filterbank(n_mels, SR, n_fft)


def _mag(frames):
    return MagnitudeSpectrogram(np.asarray(frames, float), 1024, 512, SR)


def test_mfcc_matches_naive_dct():
    rng = np.random.default_rng(2)
    mag = _mag(rng.uniform(0.0, 2.0, (3, 513)))
    out = mfcc(mag, 40, 20).frames
    fb = mel_filterbank(40, SR, 1024)
    for t in range(3):
        logmel = np.log(np.maximum(fb @ mag.frames[t] ** 2, 1e-7))
        np.testing.assert_allclose(out[t], naive_dct2(logmel, 20), atol=1e-9)


def test_mfcc_constant_spectrum():
    # unit-area filters make every mel energy identical for a flat spectrum
    out = mfcc(_mag(np.full((2, 513), 0.3)), 40, 20).frames
    np.testing.assert_allclose(out[:, 1:], 0.0, atol=1e-9)


def test_mfcc_zero_with_floor():
    out = mfcc(_mag(np.zeros((4, 513))), 40, 13).frames
    assert np.all(out == out[0])
    assert out[0, 0] == pytest.approx(np.log(1e-7) * np.sqrt(40), rel=1e-12)


def test_mfcc_scale_shifts_c0_only():
    mag = _mag(np.random.default_rng(4).uniform(0.5, 1.5, (2, 513)))
    a = mfcc(mag, 40, 20).frames
    b = mfcc(_mag(mag.frames * 3.0), 40, 20).frames
    np.testing.assert_allclose(b[:, 1:], a[:, 1:], atol=1e-9)
    np.testing.assert_allclose(b[:, 0] - a[:, 0], 2 * np.log(3.0) * np.sqrt(40), atol=1e-9)


def test_mfcc_rejects_more_coeffs_than_mels():
    with pytest.raises(ValueError):
        mfcc(_mag(np.ones((1, 513))), 10, 11)


# --- log magnitude ---------------------------------------------------------

def test_log_magnitude_zero_and_unit():
    z = ComplexSpectrogram(np.zeros((2, 513), complex), 1024, 512, SR, 1536)
    np.testing.assert_array_equal(log_magnitude(z).frames, np.log(1e-7))
    one = ComplexSpectrogram(np.exp(1j * np.random.default_rng(0).uniform(0, 6, (2, 513))), 1024, 512, SR, 1536)
    np.testing.assert_allclose(log_magnitude(one).frames, 1e-7, rtol=1e-6)


def test_log_magnitude_inverse():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((4, 513)) + 1j * rng.standard_normal((4, 513))
    feats = log_magnitude(ComplexSpectrogram(X, 1024, 512, SR, 2560))
    assert feats.kind == "log_magnitude" and feats.dim == 513
    np.testing.assert_allclose(np.exp(feats.frames) - 1e-7, np.abs(X), atol=1e-9)


# --- domain types ------------------------------------------------------------

@pytest.mark.parametrize("samples,sr", [([], SR), ([np.nan], SR), ([0.0], 0)])
def test_waveform_invariants(samples, sr):
    with pytest.raises(ValueError):
        Waveform(np.asarray(samples, float), sr)


def test_magnitude_rejects_negative():
    with pytest.raises(ValueError):
        _mag(-np.ones((1, 513)))
