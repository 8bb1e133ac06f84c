"""PCM WAV reading/writing and the in-memory audio representation.

Only RIFF WAV with 16-bit signed little-endian PCM at 16 kHz (1-6 channels)
is accepted; anything else is rejected with a diagnostic naming the field
that is out of spec.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SAMPLE_RATE = 16000
MAX_CHANNELS = 6
PCM_SCALE = 32768.0


class AudioFormatError(ValueError):
    """Raised when a WAV file does not match the supported PCM format."""


@dataclass(frozen=True)
class AudioSignal:
    """Audio as float samples in [-1, 1), shape (num_samples, channels)."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.samples.ndim != 2:
            raise ValueError("samples must have shape (num_samples, channels)")
        if self.samples.shape[0] == 0:
            raise ValueError("audio contains no samples")
        if self.sample_rate != SAMPLE_RATE:
            raise AudioFormatError(
                f"sample_rate: expected {SAMPLE_RATE} Hz, got {self.sample_rate}"
            )
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("audio contains non-finite samples")

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def channels(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_seconds(self) -> float:
        return self.num_samples / self.sample_rate

    def channel(self, index: int) -> np.ndarray:
        if not 0 <= index < self.channels:
            raise IndexError(f"channel {index} out of range (have {self.channels})")
        return self.samples[:, index]


def _find_chunk(buf: bytes, fourcc: bytes, start: int) -> tuple[int, int]:
    """Return (payload offset, payload size) of the first `fourcc` chunk."""
    pos = start
    while pos + 8 <= len(buf):
        cid = buf[pos : pos + 4]
        (size,) = struct.unpack_from("<I", buf, pos + 4)
        if cid == fourcc:
            return pos + 8, size
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    raise AudioFormatError(f"missing required chunk {fourcc.decode('ascii')!r}")


def read_wav(path: str | Path) -> AudioSignal:
    """Read a 16 kHz 16-bit PCM WAV file into an AudioSignal."""
    return parse_wav(Path(path).read_bytes(), label=str(path))


def parse_wav(buf: bytes, label: str = "<stdin>") -> AudioSignal:
    """Parse in-memory WAV bytes (same format checks as read_wav)."""
    path = label
    if len(buf) < 12 or buf[:4] != b"RIFF":
        raise AudioFormatError(f"{path}: RIFF magic missing (not a WAV file)")
    if buf[8:12] != b"WAVE":
        raise AudioFormatError(f"{path}: RIFF form type is not WAVE")

    fmt_off, fmt_size = _find_chunk(buf, b"fmt ", 12)
    if fmt_size < 16:
        raise AudioFormatError(f"{path}: fmt chunk truncated ({fmt_size} bytes)")
    audio_format, channels, rate, _, block_align, bits = struct.unpack_from(
        "<HHIIHH", buf, fmt_off
    )
    if audio_format != 1:
        raise AudioFormatError(
            f"{path}: audio_format: expected 1 (PCM), got {audio_format}"
        )
    if bits != 16:
        raise AudioFormatError(f"{path}: bits_per_sample: expected 16, got {bits}")
    if rate != SAMPLE_RATE:
        raise AudioFormatError(
            f"{path}: sample_rate: expected {SAMPLE_RATE}, got {rate}"
        )
    if not 1 <= channels <= MAX_CHANNELS:
        raise AudioFormatError(
            f"{path}: channels: expected 1-{MAX_CHANNELS}, got {channels}"
        )
    if block_align != 2 * channels:
        raise AudioFormatError(
            f"{path}: block_align: expected {2 * channels}, got {block_align}"
        )

    data_off, data_size = _find_chunk(buf, b"data", 12)
    data_size = min(data_size, len(buf) - data_off)
    num_samples = data_size // (2 * channels)
    if num_samples == 0:
        raise AudioFormatError(f"{path}: data chunk contains no samples")
    pcm = np.frombuffer(
        buf, dtype="<i2", count=num_samples * channels, offset=data_off
    )
    samples = pcm.reshape(num_samples, channels).astype(np.float64) / PCM_SCALE
    return AudioSignal(samples=samples, sample_rate=rate)


def write_wav(path: str | Path, signal: AudioSignal) -> None:
    """Write an AudioSignal as 16-bit PCM WAV."""
    pcm = np.clip(
        np.round(signal.samples * PCM_SCALE), -32768, 32767
    ).astype("<i2")
    data = pcm.tobytes()
    channels = signal.channels
    header = b"".join(
        [
            b"RIFF",
            struct.pack("<I", 36 + len(data)),
            b"WAVE",
            b"fmt ",
            struct.pack(
                "<IHHIIHH",
                16,
                1,
                channels,
                signal.sample_rate,
                signal.sample_rate * 2 * channels,
                2 * channels,
                16,
            ),
            b"data",
            struct.pack("<I", len(data)),
        ]
    )
    Path(path).write_bytes(header + data)


def from_pcm16(pcm: np.ndarray, channels: int = 1) -> AudioSignal:
    """Wrap int16 samples (num_samples,) or (num_samples, channels)."""
    arr = np.asarray(pcm)
    if arr.ndim == 1:
        arr = arr[:, None]
    return AudioSignal(samples=arr.astype(np.float64) / PCM_SCALE)


def from_float(samples: np.ndarray) -> AudioSignal:
    """Wrap float samples in [-1, 1), 1-D (mono) or (num_samples, channels)."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    return AudioSignal(samples=arr)
