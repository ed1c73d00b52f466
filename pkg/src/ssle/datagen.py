"""Synthetic corpus generation: pseudo-speech, noise, rooms, SNR mixing, manifests."""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy.signal

from .dsp import Waveform
from .wavio import quantize, read_wav, write_wav

NOISE_KINDS = ("white", "pink", "babble_like")
CASES = ("noise", "mixture", "both")
PEAK = 0.9
_DECAY = 6.9077552789821  # ln(1000): amplitude falls 60 dB at t = rt60


@dataclass(frozen=True)
class ImpulseResponse:
    taps: np.ndarray
    sample_rate: int
    rt60: float

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 1 or taps.size == 0 or taps[0] == 0:
            raise ValueError("impulse response needs a non-zero direct path at tap 0")
        if not np.all(np.isfinite(taps)):
            raise ValueError("impulse response has non-finite taps")
        object.__setattr__(self, "taps", taps)


@dataclass(frozen=True)
class MixtureSpec:
    speech_id: str
    noise_id: str
    room_id: str
    snr_db: float
    seed: int

    def __post_init__(self):
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) & 0xFFFFFFFF for k in key]))


def _smooth_noise(rng, n, sample_rate, cutoff_hz):
    """Unit-variance noise low-passed to ``cutoff_hz``."""
    b, a = scipy.signal.butter(2, cutoff_hz / (sample_rate / 2))
    x = scipy.signal.lfilter(b, a, rng.standard_normal(n + sample_rate))[sample_rate:]
    return x / (np.std(x) + 1e-12)


def _peak_normalize(x, peak=PEAK):
    m = np.max(np.abs(x))
    return x if m == 0 else x * (peak / m)


def synth_speech_like(duration_s: float, seed: int, sample_rate: int = 16000,
                      excitation: str = "harmonic") -> Waveform:
    """Harmonic pseudo-speech with a drifting pitch, formants and syllabic envelope.

    ``excitation="gaussian"`` replaces the harmonic source by white noise
    pushed through the same formant and syllable shaping.
    """
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    rng = _rng(seed, 0x5EEC)
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate

    base = rng.uniform(100.0, 220.0)
    f0 = np.clip(base * np.exp(0.18 * _smooth_noise(rng, n, sample_rate, 3.0)), 80.0, 300.0)

    # Formant tracks wander slowly around vowel-like centres.
    centres = np.array([rng.uniform(450, 800), rng.uniform(1000, 1900), rng.uniform(2300, 3000)])
    widths = np.array([90.0, 140.0, 200.0])
    tracks = centres[:, None] * np.exp(0.12 * np.stack(
        [_smooth_noise(rng, n, sample_rate, 4.0) for _ in range(3)]))

    def formant_gain(freq):
        g = sum(np.exp(-0.5 * ((freq - tracks[i]) / widths[i]) ** 2) / (i + 1) for i in range(3))
        return g + 0.03 * np.exp(-freq / 2000.0)

    if excitation == "harmonic":
        phase = 2.0 * np.pi * np.cumsum(f0) / sample_rate
        nyq_limit = min(0.45 * sample_rate, 5000.0)
        n_harm = int(nyq_limit // 80.0)
        x = np.zeros(n)
        for h in range(1, n_harm + 1):
            freq = h * f0
            inside = freq < nyq_limit
            if not inside.any():
                break
            x += np.where(inside, formant_gain(freq), 0.0) * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    elif excitation == "gaussian":
        spec = np.fft.rfft(rng.standard_normal(n))
        freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
        shape = sum(np.exp(-0.5 * ((freqs - centres[i]) / (2 * widths[i])) ** 2) / (i + 1)
                    for i in range(3)) + 0.03
        x = np.fft.irfft(spec * shape, n=n)
    else:
        raise ValueError(f"unknown excitation {excitation!r}")

    # Syllabic envelope: rate drifts inside 3-6 Hz; half-wave shaped lobes give pauses.
    rate = 4.5 + 1.5 * np.tanh(_smooth_noise(rng, n, sample_rate, 0.5))
    syl_phase = 2.0 * np.pi * np.cumsum(rate) / sample_rate + rng.uniform(0, 2 * np.pi)
    envelope = np.maximum(np.sin(syl_phase), 0.0) ** 1.5
    x = x * envelope
    # Fade edges so every utterance starts and ends silent.
    ramp = min(n // 4, int(0.02 * sample_rate))
    if ramp:
        fade = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        x[:ramp] *= fade
        x[n - ramp:] *= fade[::-1]
    return Waveform(_peak_normalize(x), sample_rate)


def synth_noise(kind: str, duration_s: float, seed: int, sample_rate: int = 16000) -> Waveform:
    if kind not in NOISE_KINDS:
        raise ValueError(f"unknown noise kind {kind!r}; expected one of {NOISE_KINDS}")
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    n = int(round(duration_s * sample_rate))
    rng = _rng(seed, 0x0015E, NOISE_KINDS.index(kind))
    if kind == "white":
        x = rng.standard_normal(n)
    elif kind == "pink":
        spec = np.fft.rfft(rng.standard_normal(n))
        freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
        freqs[0] = freqs[1]
        x = np.fft.irfft(spec / np.sqrt(freqs), n=n)
    else:
        talkers = rng.integers(0, 2**31, size=6)
        x = sum(synth_speech_like(duration_s, int(s), sample_rate).samples for s in talkers)
    return Waveform(_peak_normalize(x), sample_rate)


def synth_rir(rt60_s: float, duration_s: float | None = None, seed: int = 0,
              sample_rate: int = 16000, drr_db: float = 0.0) -> ImpulseResponse:
    """Exponentially decaying Gaussian tail behind a unit direct path.

    The tail is scaled so direct-to-reverberant energy equals ``drr_db``.
    ``duration_s`` defaults to 1.5 * rt60, long enough for an 80 dB decay.
    """
    if not 0.1 <= rt60_s <= 1.5:
        raise ValueError(f"rt60 must lie in [0.1, 1.5] s, got {rt60_s}")
    if duration_s is None:
        duration_s = 1.5 * rt60_s
    n = int(round(duration_s * sample_rate))
    if n < 2:
        raise ValueError("impulse response too short")
    rng = _rng(seed, 0x0A1E)
    t = np.arange(n) / sample_rate
    tail = rng.standard_normal(n) * np.exp(-_DECAY * t / rt60_s)
    tail[0] = 0.0
    tail *= np.sqrt(10.0 ** (-drr_db / 10.0) / np.sum(tail ** 2))
    taps = tail
    taps[0] = 1.0
    return ImpulseResponse(taps, sample_rate, rt60_s)


def convolve_rir(wave: Waveform, rir: ImpulseResponse, method: str = "fft") -> Waveform:
    """Linear convolution truncated to the input length."""
    if wave.sample_rate != rir.sample_rate:
        raise ValueError(f"sample rate mismatch: wave {wave.sample_rate} Hz, rir {rir.sample_rate} Hz")
    n = len(wave)
    if method == "fft":
        y = scipy.signal.fftconvolve(wave.samples, rir.taps)[:n]
    elif method == "direct":
        y = np.convolve(wave.samples, rir.taps)[:n]
    else:
        raise ValueError(f"unknown method {method!r}")
    return Waveform(y, wave.sample_rate)


def power(x) -> float:
    x = x.samples if isinstance(x, Waveform) else np.asarray(x)
    return float(np.mean(x * x))


def mix_at_snr(speech: Waveform, interference: Waveform, snr_db: float):
    """Return ``(mixture, scaled_interference)`` with the requested SNR."""
    if len(speech) != len(interference):
        raise ValueError(f"length mismatch: {len(speech)} vs {len(interference)}")
    if speech.sample_rate != interference.sample_rate:
        raise ValueError("sample rate mismatch")
    ps, pi = power(speech), power(interference)
    if ps == 0 or pi == 0:
        raise ValueError("speech and interference must have non-zero energy")
    g = np.sqrt(ps / (pi * 10.0 ** (snr_db / 10.0)))
    scaled = interference.samples * g
    return (Waveform(speech.samples + scaled, speech.sample_rate),
            Waveform(scaled, speech.sample_rate))


# ---------------------------------------------------------------------------
# manifests


@dataclass
class GenerationConfig:
    seed: int = 1234
    sample_rate: int = 16000
    duration_s: float = 4.0
    n_pae: int = 12
    n_dae: int = 48
    n_eval: int = 12
    rt60s: tuple = (0.3, 0.5, 0.7)
    noises: tuple = NOISE_KINDS
    snrs: tuple = (-5.0, 0.0, 5.0)
    drr_db: float = 10.0
    case: str = "noise"
    case2_source: str = "gaussian"

    def __post_init__(self):
        self.rt60s = tuple(float(r) for r in self.rt60s)
        self.noises = tuple(self.noises)
        self.snrs = tuple(float(s) for s in self.snrs)
        for name in ("n_pae", "n_dae", "n_eval"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.case not in CASES:
            raise ValueError(f"case must be one of {CASES}, got {self.case!r}")
        if self.case2_source not in ("gaussian", "speech_like"):
            raise ValueError(f"case2_source must be gaussian or speech_like, got {self.case2_source!r}")
        for kind in self.noises:
            if kind not in NOISE_KINDS:
                raise ValueError(f"unknown noise kind {kind!r}")


MANIFEST_NAME = "manifest.txt"
_COMPONENTS = ("clean", "reverb_speech", "interference", "reverb_interference", "mixture")
_SPLITS = ("pae", "dae", "eval")


@dataclass
class UtteranceRecord:
    id: str
    split: str
    speech_id: str
    noise_id: str
    room_id: str
    rt60: float
    noise_kind: str
    snr_db: float
    seed: int
    files: dict = field(default_factory=dict)

    @property
    def condition(self) -> str:
        return f"{self.room_id}/{self.noise_kind}/{self.snr_db:+g}dB"


@dataclass
class DatasetManifest:
    root: Path
    seed: int
    config: dict
    records: list

    def split(self, name: str) -> list:
        return [r for r in self.records if r.split == name]

    def path(self, record: UtteranceRecord, component: str) -> Path:
        return self.root / record.files[component]

    @property
    def pae_pairs(self):
        return [(self.path(r, "clean"), self.path(r, "mixture"), self.path(r, "interference"))
                for r in self.split("pae")]

    @property
    def dae_mixtures(self):
        return [self.path(r, "mixture") for r in self.split("dae")]

    @property
    def eval_set(self):
        return [(self.path(r, "clean"), self.path(r, "mixture")) for r in self.split("eval")]

    def load(self, record: UtteranceRecord, component: str) -> Waveform:
        return read_wav(self.path(record, component))


def _condition(cfg: GenerationConfig, i: int):
    # Latin-square walk: every block of 9 covers all (snr, noise) and (snr, room) pairs.
    snr = cfg.snrs[i % len(cfg.snrs)]
    noise = cfg.noises[(i // len(cfg.snrs)) % len(cfg.noises)]
    room = (i + i // len(cfg.snrs)) % len(cfg.rt60s)
    return room, noise, snr


def _interferer(cfg: GenerationConfig, kind: str, seed: int) -> Waveform:
    def other():
        if cfg.case2_source == "gaussian":
            return synth_noise("white", cfg.duration_s, seed + 7, cfg.sample_rate)
        return synth_speech_like(cfg.duration_s, seed + 7, cfg.sample_rate, excitation="gaussian")

    if cfg.case == "noise":
        return synth_noise(kind, cfg.duration_s, seed, cfg.sample_rate)
    if cfg.case == "mixture":
        return other()
    a = synth_noise(kind, cfg.duration_s, seed, cfg.sample_rate).samples
    b = other().samples
    b = b * np.sqrt(power(a) / power(b))
    return Waveform(_peak_normalize(a + b), cfg.sample_rate)


def render_utterance(cfg: GenerationConfig, rooms: list, split: str, index: int):
    """Synthesize one utterance; returns (record, {component: samples})."""
    split_code = _SPLITS.index(split)
    seed = int(np.random.SeedSequence([cfg.seed, split_code, index]).generate_state(1)[0])
    room, noise_kind, snr = _condition(cfg, index)
    rir = rooms[room]
    speech = synth_speech_like(cfg.duration_s, seed, cfg.sample_rate)
    interf = _interferer(cfg, noise_kind, seed ^ 0x9E3779B9)
    rev_speech = convolve_rir(speech, rir)
    rev_interf = convolve_rir(interf, rir)
    _, scaled_rev_interf = mix_at_snr(rev_speech, rev_interf, snr)
    gain = np.sqrt(power(rev_speech) / (power(rev_interf) * 10.0 ** (snr / 10.0)))
    parts = {
        "clean": speech.samples,
        "reverb_speech": rev_speech.samples,
        "interference": interf.samples * gain,
        "reverb_interference": scaled_rev_interf.samples,
    }
    peak = max(np.max(np.abs(rev_speech.samples + scaled_rev_interf.samples)),
               *(np.max(np.abs(v)) for v in parts.values()))
    scale = min(1.0, 0.95 / peak)
    parts = {k: quantize(v * scale) for k, v in parts.items()}
    # Quantized components sum exactly on the 16-bit grid.
    parts["mixture"] = parts["reverb_speech"] + parts["reverb_interference"]
    if split == "dae":
        parts = {"mixture": parts["mixture"]}
    uid = f"{split}-{index:04d}"
    record = UtteranceRecord(
        id=uid, split=split, speech_id=f"spk-{cfg.seed}-{split}-{index:04d}",
        noise_id=f"{noise_kind}-{seed & 0xFFFF:04x}", room_id=f"room{room}",
        rt60=cfg.rt60s[room], noise_kind=noise_kind, snr_db=snr, seed=seed,
        files={k: f"{split}/{uid}/{k}.wav" for k in parts})
    return record, parts


def _rooms(cfg: GenerationConfig):
    return [synth_rir(rt, None, cfg.seed * 31 + k, cfg.sample_rate, cfg.drr_db)
            for k, rt in enumerate(cfg.rt60s)]


def build_manifest(cfg: GenerationConfig, out_dir, workers: int = 1) -> DatasetManifest:
    """Generate every waveform under ``out_dir`` and write ``manifest.txt``."""
    out_dir = Path(out_dir)
    rooms = _rooms(cfg)
    jobs = [(split, i) for split, count in
            (("pae", cfg.n_pae), ("dae", cfg.n_dae), ("eval", cfg.n_eval)) for i in range(count)]

    def run(job):
        split, i = job
        record, parts = render_utterance(cfg, rooms, split, i)
        for comp, samples in parts.items():
            path = out_dir / record.files[comp]
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise OSError(f"cannot create {path.parent}: {exc}") from exc
            write_wav(path, Waveform(samples, cfg.sample_rate))
        return record

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run, jobs))
    else:
        records = [run(j) for j in jobs]

    speakers = [set(r.speech_id for r in records if r.split == s) for s in _SPLITS]
    for a in range(3):
        for b in range(a + 1, 3):
            if speakers[a] & speakers[b]:
                raise RuntimeError("utterance splits overlap")
    manifest = DatasetManifest(out_dir, cfg.seed, config_to_dict(cfg), records)
    write_manifest(manifest, out_dir / MANIFEST_NAME)
    return manifest


def config_to_dict(cfg: GenerationConfig) -> dict:
    return asdict(cfg)


def _fmt(value) -> str:
    if isinstance(value, (tuple, list)):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_manifest(manifest: DatasetManifest, path) -> None:
    lines = ["# ssle dataset manifest", "[manifest]", "format=1", f"seed={manifest.seed}"]
    lines += [f"config.{k}={_fmt(v)}" for k, v in manifest.config.items()]
    for r in manifest.records:
        lines.append("[utterance]")
        for f in fields(UtteranceRecord):
            if f.name == "files":
                continue
            lines.append(f"{f.name}={_fmt(getattr(r, f.name))}")
        lines += [f"file.{k}={v}" for k, v in r.files.items()]
    text = "\n".join(lines) + "\n"
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write manifest {path}: {exc}") from exc


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    sections = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            sections.append((line[1:-1], {}))
            continue
        if "=" not in line or not sections:
            raise ValueError(f"{path}:{lineno}: malformed manifest line {raw!r}")
        key, value = line.split("=", 1)
        sections[-1][1][key] = value
    if not sections or sections[0][0] != "manifest":
        raise ValueError(f"{path}: missing [manifest] header")
    head = sections[0][1]
    config = {k[len("config."):]: v for k, v in head.items() if k.startswith("config.")}
    records = []
    for name, rec in sections[1:]:
        if name != "utterance":
            raise ValueError(f"{path}: unknown section [{name}]")
        records.append(UtteranceRecord(
            id=rec["id"], split=rec["split"], speech_id=rec["speech_id"],
            noise_id=rec["noise_id"], room_id=rec["room_id"], rt60=float(rec["rt60"]),
            noise_kind=rec["noise_kind"], snr_db=float(rec["snr_db"]), seed=int(rec["seed"]),
            files={k[len("file."):]: v for k, v in rec.items() if k.startswith("file.")}))
    return DatasetManifest(path.parent, int(head["seed"]), config, records)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def manifest_digest(manifest_path) -> str:
    """Hash of the manifest text plus every referenced WAV file."""
    path = Path(manifest_path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    manifest = read_manifest(path)
    h = hashlib.sha256(path.read_bytes())
    for r in manifest.records:
        for comp in sorted(r.files):
            h.update(Path(manifest.path(r, comp)).read_bytes())
    return h.hexdigest()
