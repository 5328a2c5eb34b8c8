"""Handcrafted feature extraction: framing, power spectra, log-mel, CQT.

Both front-ends are pure functions of the waveform, so identical inputs give
bitwise-identical feature maps and different utterances can be processed on
different threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DataError, ShapeError

LOG_FLOOR = 1e-10

MEL_KIND = "mel"
CQT_KIND = "cqt"


@dataclass
class Waveform:
    """Mono PCM audio: float samples in [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int = 16000
    utt_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise DataError(f"waveform must be mono 1-D, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise DataError(f"sample rate must be positive, got {self.sample_rate}")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise DataError(f"waveform {self.utt_id!r} contains non-finite samples")
        if self.samples.size and np.abs(self.samples).max() > 1.0:
            raise DataError(
                f"waveform {self.utt_id!r} exceeds full scale "
                f"(peak {np.abs(self.samples).max():.6f})")

    def __len__(self) -> int:
        return self.samples.size


@dataclass
class FeatureMap:
    """Time x frequency-bin matrix from one of the front-ends."""

    values: np.ndarray  # [T, B]
    kind: str           # MEL_KIND or CQT_KIND
    frame_rate: float   # frames per second

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_bins(self) -> int:
        return self.values.shape[1]


@dataclass
class FilterBank:
    """Triangular filters on FFT bins; one row per filter, peak value 1."""

    weights: np.ndarray       # [B, n_fft//2 + 1]
    center_freqs: np.ndarray  # Hz per filter, strictly increasing


@dataclass
class FrontendConfig:
    kind: str = MEL_KIND
    sample_rate: int = 16000
    n_fft: int = 512
    hop: int = 160
    n_mels: int = 80
    fmin: float = 20.0
    fmax: float = 8000.0
    cqt_fmin: float = 32.703
    cqt_bins_per_octave: int = 12
    cqt_n_bins: int = 84
    cqt_hop: int = 160

    def __post_init__(self):
        if self.kind not in (MEL_KIND, CQT_KIND):
            raise ConfigError(f"frontend kind must be mel or cqt, got {self.kind!r}")
        if self.n_fft < 2 or self.n_fft & (self.n_fft - 1):
            raise ConfigError(f"n_fft must be a power of two, got {self.n_fft}")
        if self.hop < 1 or self.cqt_hop < 1:
            raise ConfigError("hop sizes must be >= 1")
        if self.n_mels < 2:
            raise ConfigError(f"n_mels must be >= 2, got {self.n_mels}")
        if not (0 <= self.fmin < self.fmax <= self.sample_rate / 2):
            raise ConfigError(
                f"need 0 <= fmin < fmax <= sr/2, got fmin={self.fmin}, "
                f"fmax={self.fmax}, sr={self.sample_rate}")
        cqt_fmax = self.cqt_fmin * 2.0 ** (self.cqt_n_bins / self.cqt_bins_per_octave)
        if cqt_fmax > self.sample_rate / 2:
            raise ConfigError(
                f"cqt range tops out at {cqt_fmax:.1f} Hz, above Nyquist "
                f"{self.sample_rate / 2:.1f} Hz")

    @property
    def n_bins(self) -> int:
        return self.n_mels if self.kind == MEL_KIND else self.cqt_n_bins

    @property
    def active_hop(self) -> int:
        return self.hop if self.kind == MEL_KIND else self.cqt_hop


def hann_periodic(n: int) -> np.ndarray:
    """Periodic Hann window: 0.5 - 0.5*cos(2*pi*k/n)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_and_window(w: Waveform, frame_len: int, hop: int) -> np.ndarray:
    """Slices the waveform into hop-spaced frames and applies a periodic
    Hann window to each. Returns ``[T, frame_len]`` with
    ``T = floor((len - frame_len)/hop) + 1``."""
    if hop < 1:
        raise ShapeError(f"hop must be >= 1, got {hop}")
    n = len(w)
    if n < frame_len:
        raise DataError(
            f"waveform {w.utt_id!r} has {n} samples, shorter than one "
            f"frame ({frame_len})")
    frames = sliding_window_view(w.samples, frame_len)[::hop]
    return frames * hann_periodic(frame_len)


def stft_power(frames: np.ndarray) -> np.ndarray:
    """Squared magnitude of the real-input DFT per frame.

    ``[T, N] -> [T, N//2 + 1]``; N must be a power of two (radix-2 FFT).
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2:
        raise ShapeError(f"stft_power expects [T,N], got {frames.shape}")
    n = frames.shape[1]
    if n < 2 or n & (n - 1):
        raise ShapeError(f"frame length must be a power of two, got {n}")
    spec = np.fft.rfft(frames, axis=1)
    return (spec.real ** 2 + spec.imag ** 2)


def hz_to_mel(f) -> np.ndarray:
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m) -> np.ndarray:
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sr: float, fmin: float,
                   fmax: float) -> FilterBank:
    """Builds triangular filters with corners equally spaced on the mel
    scale. Each row is evaluated on the FFT bin frequencies and rescaled so
    its peak is exactly 1 at the bin nearest the filter center."""
    if n_mels < 2:
        raise ConfigError(f"n_mels must be >= 2, got {n_mels}")
    if not (0 <= fmin < fmax <= sr / 2):
        raise ConfigError(f"need 0 <= fmin < fmax <= sr/2, got {fmin}/{fmax}/{sr}")
    corners = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bin_freqs = np.arange(n_fft // 2 + 1) * (sr / n_fft)
    weights = np.zeros((n_mels, bin_freqs.size))
    for i in range(n_mels):
        lo, center, hi = corners[i], corners[i + 1], corners[i + 2]
        rise = (bin_freqs - lo) / (center - lo)
        fall = (hi - bin_freqs) / (hi - center)
        tri = np.maximum(0.0, np.minimum(rise, fall))
        peak = tri.max()
        if peak <= 0.0:
            raise ConfigError(
                f"mel filter {i} covers no FFT bin (center {center:.1f} Hz); "
                f"increase n_fft or reduce n_mels")
        weights[i] = tri / peak
    return FilterBank(weights=weights, center_freqs=corners[1:-1].copy())


def mel_frame_count(n_samples: int, cfg: FrontendConfig) -> int:
    return (n_samples - cfg.n_fft) // cfg.hop + 1


def cqt_frame_count(n_samples: int, cfg: FrontendConfig) -> int:
    return 1 + (n_samples - 1) // cfg.cqt_hop


def feature_frame_count(n_samples: int, cfg: FrontendConfig) -> int:
    if cfg.kind == MEL_KIND:
        return mel_frame_count(n_samples, cfg)
    return cqt_frame_count(n_samples, cfg)


def log_mel(w: Waveform, cfg: FrontendConfig) -> FeatureMap:
    """Log-compressed mel spectrogram:
    ``ln(max(filterbank @ |STFT|^2, 1e-10))`` per frame."""
    if w.sample_rate != cfg.sample_rate:
        raise DataError(
            f"waveform rate {w.sample_rate} differs from configured "
            f"{cfg.sample_rate}")
    frames = frame_and_window(w, cfg.n_fft, cfg.hop)
    power = stft_power(frames)
    fb = mel_filterbank(cfg.n_mels, cfg.n_fft, cfg.sample_rate, cfg.fmin, cfg.fmax)
    values = np.log(np.maximum(power @ fb.weights.T, LOG_FLOOR))
    return FeatureMap(values=values, kind=MEL_KIND,
                      frame_rate=cfg.sample_rate / cfg.hop)


def cqt_center_freqs(cfg: FrontendConfig) -> np.ndarray:
    b = np.arange(cfg.cqt_n_bins)
    return cfg.cqt_fmin * 2.0 ** (b / cfg.cqt_bins_per_octave)


def cqt(w: Waveform, cfg: FrontendConfig) -> FeatureMap:
    """Direct constant-Q transform, one complex kernel per bin.

    Bin ``b`` sits at ``fmin * 2^(b/bpo)`` and uses a periodic-Hann window
    of ``ceil(Q * sr / f_b)`` samples with ``Q = 1/(2^(1/bpo) - 1)``. Frames
    are centered every ``cqt_hop`` samples over a reflection-padded signal.
    Kernels are scaled by ``2 / sum(window)`` so a full-scale tone at a bin
    center lands near log-power 0; output is ``ln(max(|X|^2, 1e-10))``.
    """
    if w.sample_rate != cfg.sample_rate:
        raise DataError(
            f"waveform rate {w.sample_rate} differs from configured "
            f"{cfg.sample_rate}")
    sr = cfg.sample_rate
    q = 1.0 / (2.0 ** (1.0 / cfg.cqt_bins_per_octave) - 1.0)
    freqs = cqt_center_freqs(cfg)
    win_lens = np.ceil(q * sr / freqs).astype(int)
    pad = int(win_lens.max() // 2 + 1)
    x = w.samples
    if x.size < 2 or pad > x.size - 1:
        raise DataError(
            f"waveform {w.utt_id!r} too short for the lowest-frequency "
            f"kernel ({win_lens.max()} samples); need more than {pad} samples")
    padded = np.pad(x, pad, mode="reflect")
    n_frames = cqt_frame_count(x.size, cfg)
    centers = np.arange(n_frames) * cfg.cqt_hop + pad

    power = np.empty((n_frames, cfg.cqt_n_bins))
    for b in range(cfg.cqt_n_bins):
        nb = win_lens[b]
        win = hann_periodic(nb)
        n = np.arange(nb)
        kernel = win * np.exp(-2j * np.pi * freqs[b] * (n - (nb - 1) / 2.0) / sr)
        kernel *= 2.0 / win.sum()
        starts = centers - nb // 2
        segs = sliding_window_view(padded, nb)[starts]
        coef = segs @ kernel
        power[:, b] = coef.real ** 2 + coef.imag ** 2
    values = np.log(np.maximum(power, LOG_FLOOR))
    return FeatureMap(values=values, kind=CQT_KIND,
                      frame_rate=sr / cfg.cqt_hop)


def extract(w: Waveform, cfg: FrontendConfig) -> FeatureMap:
    """Dispatches to the configured front-end."""
    if cfg.kind == MEL_KIND:
        return log_mel(w, cfg)
    return cqt(w, cfg)
