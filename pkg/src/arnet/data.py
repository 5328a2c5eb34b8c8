"""Dataset plumbing: WAV ingestion, trial protocols, the seeded synthetic
spoof dataset, and the binary feature / text score formats.

All readers reject malformed input with a diagnostic instead of returning
partial data, and every write/read pair round-trips within its format's
stated precision.
"""
from __future__ import annotations

import struct
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError
from .frontend import Waveform
from .metrics import BONAFIDE, SPOOF, ScoreSet
from .rng import RngState

FEATURE_MAGIC = b"ARNF"
FEATURE_VERSION = 1

PCM_SCALE = 32768.0

ARTIFACTS = ("phase_flatten", "amp_quantize", "hiss")


# ---------------------------------------------------------------------------
# WAV
# ---------------------------------------------------------------------------


def read_wav(path) -> Waveform:
    """Reads a mono 16-bit PCM RIFF/WAVE file; samples map to s/32768."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as fh:
            if fh.getcomptype() != "NONE":
                raise FormatError(f"{path}: compressed WAV ({fh.getcomptype()}) not supported")
            if fh.getnchannels() != 1:
                raise FormatError(f"{path}: expected mono, got {fh.getnchannels()} channels")
            if fh.getsampwidth() != 2:
                raise FormatError(
                    f"{path}: expected 16-bit PCM, got {8 * fh.getsampwidth()}-bit")
            n = fh.getnframes()
            raw = fh.readframes(n)
    except wave.Error as e:
        raise FormatError(f"{path}: not a readable WAV file ({e})") from None
    except EOFError:
        raise FormatError(f"{path}: truncated WAV header") from None
    if len(raw) != 2 * n:
        raise FormatError(f"{path}: truncated payload ({len(raw)} bytes for {n} frames)")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM_SCALE
    with wave.open(str(path), "rb") as fh:
        rate = fh.getframerate()
    return Waveform(samples=samples, sample_rate=rate, utt_id=path.stem)


def write_wav(path, w: Waveform) -> None:
    ints = np.clip(np.round(w.samples * PCM_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(w.sample_rate)
        fh.writeframes(ints.tobytes())


# ---------------------------------------------------------------------------
# trial protocol
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrialRecord:
    speaker_id: str
    utt_id: str
    attack_id: str  # "-" for bona fide
    key: str        # BONAFIDE or SPOOF


def parse_protocol(path) -> list[TrialRecord]:
    """One trial per line: ``speaker utt_id field3 attack key``; the key is
    parsed case-sensitively from {bonafide, spoof}."""
    records: list[TrialRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 5:
                raise FormatError(
                    f"{path}:{lineno}: expected 5 fields, got {len(fields)}")
            speaker, utt, _unused, attack, key = fields
            if key not in (BONAFIDE, SPOOF):
                raise FormatError(f"{path}:{lineno}: unknown key {key!r}")
            records.append(TrialRecord(speaker, utt, attack, key))
    return records


def write_protocol(path, records: list[TrialRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(f"{r.speaker_id} {r.utt_id} - {r.attack_id} {r.key}\n")


def load_dataset_dir(directory) -> list[tuple[Waveform, str]]:
    """Reads ``protocol.txt`` plus one ``<utt_id>.wav`` per trial."""
    directory = Path(directory)
    proto = directory / "protocol.txt"
    if not proto.exists():
        raise DataError(f"{directory}: no protocol.txt found")
    dataset = []
    for rec in parse_protocol(proto):
        wav_path = directory / f"{rec.utt_id}.wav"
        if not wav_path.exists():
            raise DataError(f"{directory}: missing {wav_path.name} listed in protocol")
        dataset.append((read_wav(wav_path), rec.key))
    return dataset


# ---------------------------------------------------------------------------
# synthetic dataset
# ---------------------------------------------------------------------------


@dataclass
class SynthSpec:
    """Recipe for the seeded synthetic spoof dataset.

    Bona fide utterances are 4-8 random harmonics of a random fundamental
    in [90, 255] Hz with random phases plus low-level 1/f noise. Spoofs use
    the same construction with one artifact applied:

    * ``phase_flatten``: every harmonic phase zeroed (the default; the
      magnitude spectrum barely moves but the waveform collapses into
      aligned pulses),
    * ``amp_quantize``: samples quantized to 3 bits of full scale,
    * ``hiss``: a 6-7.8 kHz noise band mixed in.

    Everything is drawn from one PCG64 stream, so the dataset is a pure
    function of the seed. All waveforms are peak-normalized to 0.9.
    """

    seed: int = 0
    n_per_class: int = 100
    duration_s: float = 0.6
    sr: int = 16000
    artifact: str = "phase_flatten"

    def __post_init__(self):
        if self.n_per_class < 1:
            raise DataError(f"n_per_class must be >= 1, got {self.n_per_class}")
        if self.artifact not in ARTIFACTS:
            raise DataError(f"unknown artifact {self.artifact!r}; choose from {ARTIFACTS}")
        if self.duration_s * self.sr < 512:
            raise DataError(
                f"duration {self.duration_s}s at {self.sr} Hz is shorter than "
                f"one analysis frame (512 samples)")


def _pink_noise(rng: RngState, n: int) -> np.ndarray:
    white = rng.normal(0.0, 1.0, n)
    spec = np.fft.rfft(white)
    spec[0] = 0.0
    spec[1:] /= np.sqrt(np.arange(1, spec.size))
    noise = np.fft.irfft(spec, n)
    rms = np.sqrt((noise ** 2).mean())
    return noise / max(rms, 1e-12)


def _band_noise(rng: RngState, n: int, sr: int, lo: float, hi: float) -> np.ndarray:
    white = rng.normal(0.0, 1.0, n)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, 1.0 / sr)
    spec[(freqs < lo) | (freqs > hi)] = 0.0
    noise = np.fft.irfft(spec, n)
    rms = np.sqrt((noise ** 2).mean())
    return noise / max(rms, 1e-12)


def _synth_one(rng: RngState, spec: SynthSpec, spoof: bool) -> np.ndarray:
    n = int(round(spec.duration_s * spec.sr))
    t = np.arange(n) / spec.sr
    f0 = rng.uniform(90.0, 255.0)
    k = int(rng.integers(4, 9))
    amps = rng.uniform(0.4, 1.0, k) / np.arange(1, k + 1)
    phases = rng.uniform(0.0, 2.0 * np.pi, k)
    if spoof and spec.artifact == "phase_flatten":
        phases = np.zeros(k)
    x = np.zeros(n)
    for h in range(k):
        x += amps[h] * np.cos(2.0 * np.pi * (h + 1) * f0 * t + phases[h])
    x += 0.02 * _pink_noise(rng, n)
    if spoof and spec.artifact == "amp_quantize":
        step = np.abs(x).max() / 4.0
        x = np.round(x / step) * step
    if spoof and spec.artifact == "hiss":
        x += 0.08 * _band_noise(rng, n, spec.sr, 6000.0, 7800.0)
    return 0.9 * x / np.abs(x).max()


def synth_dataset(spec: SynthSpec) -> list[tuple[Waveform, str]]:
    """Generates ``n_per_class`` bona fide then ``n_per_class`` spoofed
    waveforms, deterministically from the seed."""
    rng = RngState(spec.seed)
    out: list[tuple[Waveform, str]] = []
    for i in range(spec.n_per_class):
        samples = _synth_one(rng, spec, spoof=False)
        out.append((Waveform(samples, spec.sr, f"synth_b{i:04d}"), BONAFIDE))
    for i in range(spec.n_per_class):
        samples = _synth_one(rng, spec, spoof=True)
        out.append((Waveform(samples, spec.sr, f"synth_s{i:04d}"), SPOOF))
    return out


ARTIFACT_TAGS = {"phase_flatten": "S01", "amp_quantize": "S02", "hiss": "S03"}


def dataset_records(dataset: list[tuple[Waveform, str]],
                    artifact: str = "phase_flatten") -> list[TrialRecord]:
    tag = ARTIFACT_TAGS[artifact]
    return [TrialRecord("SY0001", w.utt_id, "-" if label == BONAFIDE else tag, label)
            for w, label in dataset]


# ---------------------------------------------------------------------------
# binary feature format
# ---------------------------------------------------------------------------


def write_features(path, values: np.ndarray) -> None:
    """Feature file: magic ``ARNF``, then little-endian u32 version (=1),
    rows, cols, then rows*cols float32 values row-major."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise FormatError(f"feature payload must be 2-D, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise FormatError("feature payload contains non-finite values")
    rows, cols = values.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<III", FEATURE_VERSION, rows, cols))
        fh.write(values.astype("<f4").tobytes())


def read_features(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16:
        raise FormatError(f"{path}: truncated header ({len(blob)} bytes)")
    if blob[:4] != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {FEATURE_MAGIC!r}")
    version, rows, cols = struct.unpack_from("<III", blob, 4)
    if version != FEATURE_VERSION:
        raise FormatError(f"{path}: unsupported feature version {version}")
    expected = 16 + 4 * rows * cols
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload size {len(blob) - 16} does not match header "
            f"({rows}x{cols} float32 = {expected - 16} bytes)")
    values = np.frombuffer(blob, dtype="<f4", offset=16).astype(np.float64)
    return values.reshape(rows, cols)


# ---------------------------------------------------------------------------
# score files
# ---------------------------------------------------------------------------


def write_scores(path, scores: ScoreSet) -> None:
    """One ASCII line per trial: ``<utt_id> <score>`` with six decimals."""
    with open(path, "w", encoding="ascii") as fh:
        for e in scores.entries:
            fh.write(f"{e.utt_id} {e.score:.6f}\n")


def read_scores(path) -> list[tuple[str, float]]:
    out: list[tuple[str, float]] = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 2:
                raise FormatError(f"{path}:{lineno}: expected 'utt score'")
            try:
                out.append((fields[0], float(fields[1])))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad score {fields[1]!r}") from None
    return out
