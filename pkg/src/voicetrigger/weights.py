"""PVTW binary weight bundles: the boundary between trainer and engine.

Layout (all little-endian):
    magic "PVTW" | u32 version=1 | u32 config_len | UTF-8 JSON config
    u32 tensor_count | per tensor:
        u16 name_len | name | u8 rank | rank * u32 dims | prod(dims) * f32

The JSON config declares the architecture ("kws" or "embedding") plus its
sizes; every tensor that architecture requires must be present with the
declared shape, checked at load time.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"PVTW"
VERSION = 1


class WeightFormatError(ValueError):
    """Malformed, truncated, or inconsistent weight file."""


@dataclass
class WeightBundle:
    config: dict
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = VERSION

    def tensor(self, name: str) -> np.ndarray:
        try:
            return self.tensors[name]
        except KeyError:
            raise WeightFormatError(f"missing tensor {name!r}") from None


def kws_tensor_shapes(config: dict) -> dict[str, tuple[int, ...]]:
    """Required tensors for the two-layer LSTM keyword spotter."""
    d = config["input_dim"]
    h = config["hidden_dim"]
    c = config["num_classes"]
    return {
        "lstm1.input_weights": (4 * h, d),
        "lstm1.recurrent_weights": (4 * h, h),
        "lstm1.bias": (4 * h,),
        "lstm2.input_weights": (4 * h, h),
        "lstm2.recurrent_weights": (4 * h, h),
        "lstm2.bias": (4 * h,),
        "fc.weight": (c, h),
        "fc.bias": (c,),
    }


def embedding_tensor_shapes(config: dict) -> dict[str, tuple[int, ...]]:
    """Required tensors for the residual-SE embedding extractor."""
    channels = list(config["channels"])
    freq_dim = config["input_dim"]
    att = config["attention_dim"]
    emb = config["embedding_dim"]
    shapes: dict[str, tuple[int, ...]] = {
        "stem.conv.weight": (channels[0], 1, 3, 3),
        "stem.conv.bias": (channels[0],),
    }
    c_in = channels[0]
    freq = freq_dim
    for s, c_out in enumerate(channels, start=1):
        stride = 1 if s == 1 else 2
        prefix = f"stage{s}"
        shapes[f"{prefix}.conv1.weight"] = (c_out, c_in, 3, 3)
        shapes[f"{prefix}.conv1.bias"] = (c_out,)
        shapes[f"{prefix}.conv2.weight"] = (c_out, c_out, 3, 3)
        shapes[f"{prefix}.conv2.bias"] = (c_out,)
        reduced = max(c_out // 4, 1)
        shapes[f"{prefix}.se.fc1.weight"] = (reduced, c_out)
        shapes[f"{prefix}.se.fc1.bias"] = (reduced,)
        shapes[f"{prefix}.se.fc2.weight"] = (c_out, reduced)
        shapes[f"{prefix}.se.fc2.bias"] = (c_out,)
        if stride != 1 or c_in != c_out:
            shapes[f"{prefix}.downsample.weight"] = (c_out, c_in, 1, 1)
            shapes[f"{prefix}.downsample.bias"] = (c_out,)
        c_in = c_out
        if stride == 2:
            freq = (freq + 1) // 2
    flat = channels[-1] * freq
    shapes["asp.proj.weight"] = (att, flat)
    shapes["asp.proj.bias"] = (att,)
    shapes["asp.context"] = (att,)
    shapes["fc.weight"] = (emb, 2 * flat)
    shapes["fc.bias"] = (emb,)
    return shapes


_ARCH_SHAPES = {"kws": kws_tensor_shapes, "embedding": embedding_tensor_shapes}


def validate_bundle(bundle: WeightBundle) -> None:
    arch = bundle.config.get("arch")
    if arch not in _ARCH_SHAPES:
        raise WeightFormatError(f"unknown architecture {arch!r}")
    expected = _ARCH_SHAPES[arch](bundle.config)
    for name, shape in expected.items():
        if name not in bundle.tensors:
            raise WeightFormatError(f"missing tensor {name!r} for arch {arch!r}")
        got = bundle.tensors[name].shape
        if got != shape:
            raise WeightFormatError(
                f"tensor {name!r}: expected shape {shape}, got {tuple(got)}"
            )


def save_weights(path: str | Path, bundle: WeightBundle) -> None:
    validate_bundle(bundle)
    cfg = json.dumps(bundle.config, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", bundle.version, len(cfg)), cfg]
    parts.append(struct.pack("<I", len(bundle.tensors)))
    for name, tensor in bundle.tensors.items():
        nb = name.encode("utf-8")
        arr = np.ascontiguousarray(tensor, dtype="<f4")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, buf: bytes, label: str):
        self.buf = buf
        self.pos = 0
        self.label = label

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise WeightFormatError(
                f"{self.label}: truncated file (wanted {n} bytes at offset {self.pos})"
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_weights(path: str | Path) -> WeightBundle:
    r = _Reader(Path(path).read_bytes(), str(path))
    if r.take(4) != MAGIC:
        raise WeightFormatError(f"{path}: bad magic bytes (not a PVTW file)")
    version = r.u32()
    if version != VERSION:
        raise WeightFormatError(f"{path}: unsupported version {version}")
    try:
        config = json.loads(r.take(r.u32()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise WeightFormatError(f"{path}: invalid config JSON: {e}") from None
    tensors: dict[str, np.ndarray] = {}
    for _ in range(r.u32()):
        name = r.take(r.u16()).decode("utf-8")
        if name in tensors:
            raise WeightFormatError(f"{path}: duplicate tensor name {name!r}")
        rank = r.u8()
        shape = tuple(r.u32() for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        data = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape)
        if not np.all(np.isfinite(data)):
            raise WeightFormatError(f"{path}: tensor {name!r} has non-finite values")
        tensors[name] = data.astype(np.float64)
    bundle = WeightBundle(config=config, tensors=tensors, version=version)
    validate_bundle(bundle)
    return bundle
