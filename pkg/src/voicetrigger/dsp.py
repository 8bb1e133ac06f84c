"""Log-mel filterbank frontend: 25 ms Hann frames, 10 ms shift, 80 mel bands.

The exact pipeline (periodic Hann window, 512-point FFT, HTK mel scale over
20-7600 Hz, natural-log floor at 1e-10, no pre-emphasis, no normalization)
is load-bearing: the trainer reimplements it bit-for-bit so exported models
see the same features at train and inference time.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import AudioSignal

FRAME_LENGTH = 400  # 25 ms at 16 kHz
FRAME_SHIFT = 160  # 10 ms
NUM_FFT = 512
NUM_BINS = NUM_FFT // 2 + 1
NUM_MEL = 80
MEL_FMIN = 20.0
MEL_FMAX = 7600.0
LOG_FLOOR = 1e-10
WINDOW_FRAMES = 40


class EmptyFeatureError(ValueError):
    """Input audio shorter than one analysis frame."""


class TooShortError(ValueError):
    """Feature matrix shorter than one segmental window."""


def hann_window(length: int = FRAME_LENGTH) -> np.ndarray:
    """Periodic Hann window (the STFT convention, not the symmetric one)."""
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)


def hz_to_mel(f):
    """HTK mel scale: 2595 * log10(1 + f/700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class MelFilterbank:
    """80 triangular filters over the 257 FFT bins, peak weight 1."""

    weights: np.ndarray  # (NUM_MEL, NUM_BINS)
    center_freqs: np.ndarray  # (NUM_MEL,) Hz, strictly increasing
    fmin: float
    fmax: float


def make_mel_filterbank(
    num_filters: int = NUM_MEL,
    fmin: float = MEL_FMIN,
    fmax: float = MEL_FMAX,
    nfft: int = NUM_FFT,
    sample_rate: int = 16000,
) -> MelFilterbank:
    """Build triangular mel filters with edges equispaced on the mel scale."""
    if not 0 <= fmin < fmax <= sample_rate / 2:
        raise ValueError(
            f"invalid mel range [{fmin}, {fmax}] for sample rate {sample_rate}"
        )
    edges_hz = mel_to_hz(
        np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), num_filters + 2)
    )
    bin_freqs = np.arange(nfft // 2 + 1) * (sample_rate / nfft)
    weights = np.zeros((num_filters, nfft // 2 + 1))
    for i in range(num_filters):
        left, center, right = edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]
        rising = (bin_freqs - left) / (center - left)
        falling = (right - bin_freqs) / (right - center)
        weights[i] = np.clip(np.minimum(rising, falling), 0.0, None)
    return MelFilterbank(
        weights=weights,
        center_freqs=edges_hz[1:-1],
        fmin=fmin,
        fmax=fmax,
    )


_DEFAULT_FBANK: MelFilterbank | None = None


def default_filterbank() -> MelFilterbank:
    global _DEFAULT_FBANK
    if _DEFAULT_FBANK is None:
        _DEFAULT_FBANK = make_mel_filterbank()
    return _DEFAULT_FBANK


def frame_signal(signal: AudioSignal, channel: int = 0) -> np.ndarray:
    """Slice one channel into Hann-windowed frames, shape (T, 400)."""
    x = signal.channel(channel)
    n = len(x)
    if n < FRAME_LENGTH:
        raise EmptyFeatureError(
            f"audio has {n} samples, need at least {FRAME_LENGTH} for one frame"
        )
    num_frames = 1 + (n - FRAME_LENGTH) // FRAME_SHIFT
    idx = np.arange(FRAME_LENGTH)[None, :] + FRAME_SHIFT * np.arange(num_frames)[:, None]
    return x[idx] * hann_window()


def power_spectrum(frames: np.ndarray) -> np.ndarray:
    """|FFT_512|^2 over the 257 non-redundant bins; accepts (400,) or (T, 400)."""
    spec = np.fft.rfft(frames, n=NUM_FFT, axis=-1)
    return (spec.real**2 + spec.imag**2).astype(np.float64)


def extract_features(
    signal: AudioSignal, channel: int = 0, fbank: MelFilterbank | None = None
) -> np.ndarray:
    """Log-mel feature matrix, shape (T, 80), natural log with 1e-10 floor."""
    if fbank is None:
        fbank = default_filterbank()
    power = power_spectrum(frame_signal(signal, channel))
    mel_energy = power @ fbank.weights.T
    return np.log(np.maximum(mel_energy, LOG_FLOOR))


def segment_windows(
    features: np.ndarray, length: int = WINDOW_FRAMES, hop: int = 1
) -> np.ndarray:
    """Sliding (length, 80) windows over the frame axis, shape (N, length, 80)."""
    t = features.shape[0]
    if t < length:
        raise TooShortError(f"feature matrix has {t} frames, need at least {length}")
    count = 1 + (t - length) // hop
    starts = hop * np.arange(count)
    return features[starts[:, None] + np.arange(length)[None, :]]


def write_feature_dump(path: str | Path, features: np.ndarray) -> None:
    """Binary dump: u32 T, u32 80, then T*80 little-endian f32 row-major."""
    t, d = features.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<II", t, d))
        f.write(features.astype("<f4").tobytes())


def read_feature_dump(path: str | Path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if len(buf) < 8:
        raise ValueError(f"{path}: feature dump truncated")
    t, d = struct.unpack_from("<II", buf, 0)
    expect = 8 + 4 * t * d
    if len(buf) < expect:
        raise ValueError(f"{path}: feature dump truncated (need {expect} bytes)")
    return (
        np.frombuffer(buf, dtype="<f4", count=t * d, offset=8)
        .reshape(t, d)
        .astype(np.float64)
    )
