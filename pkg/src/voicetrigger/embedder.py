"""Speaker-embedding network: residual-SE conv trunk, attentive stats pooling.

Desk-scale variant of a ResNet-SE speaker encoder: one block per stage,
channels 8/16/32/64, stride-2 downsampling from stage 2 on. The feature
matrix is treated as a 1-channel time x frequency image; the trunk output
is flattened over (channels, frequency) per time step, pooled with
attentive statistics, and projected to a unit-norm 128-dim embedding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import dsp
from .kws import _sigmoid, softmax
from .weights import WeightBundle, embedding_tensor_shapes, validate_bundle

EMBEDDING_DIM = 128
CHANNELS = (8, 16, 32, 64)
ATTENTION_DIM = 64
VAR_EPS = 1e-9


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray,
           stride: int = 1, pad: int = 1) -> np.ndarray:
    """2-D convolution, x: (C_in, H, W), weight: (C_out, C_in, kh, kw)."""
    c_out, c_in, kh, kw = weight.shape
    if x.shape[0] != c_in:
        raise ValueError(f"input channels {x.shape[0]} != weight channels {c_in}")
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    patches = sliding_window_view(x, (kh, kw), axis=(1, 2))  # (C_in, Ho', Wo', kh, kw)
    patches = patches[:, ::stride, :: stride]
    out = np.tensordot(weight, patches, axes=([1, 2, 3], [0, 3, 4]))
    return out + bias[:, None, None]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


@dataclass(frozen=True)
class SeBlock:
    fc1_weight: np.ndarray
    fc1_bias: np.ndarray
    fc2_weight: np.ndarray
    fc2_bias: np.ndarray

    def gates(self, x: np.ndarray) -> np.ndarray:
        """Channel gates in (0, 1) from global average pooling."""
        squeezed = x.mean(axis=(1, 2))
        hidden = relu(self.fc1_weight @ squeezed + self.fc1_bias)
        return _sigmoid(self.fc2_weight @ hidden + self.fc2_bias)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x * self.gates(x)[:, None, None]


@dataclass(frozen=True)
class ResidualSeStage:
    conv1_weight: np.ndarray
    conv1_bias: np.ndarray
    conv2_weight: np.ndarray
    conv2_bias: np.ndarray
    se: SeBlock
    stride: int
    downsample_weight: np.ndarray | None = None
    downsample_bias: np.ndarray | None = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        y = relu(conv2d(x, self.conv1_weight, self.conv1_bias, stride=self.stride))
        y = conv2d(y, self.conv2_weight, self.conv2_bias)
        y = self.se(y)
        if self.downsample_weight is not None:
            skip = conv2d(x, self.downsample_weight, self.downsample_bias,
                          stride=self.stride, pad=0)
        else:
            skip = x
        return relu(y + skip)


def asp_pool(h: np.ndarray, proj_weight: np.ndarray, proj_bias: np.ndarray,
             context: np.ndarray) -> np.ndarray:
    """Attentive statistics pooling, h: (T, D) -> (2D,) as [mean; std].

    Attention logits e_t = v . tanh(W h_t + b); weights are their softmax.
    The variance is clamped at 0 before the sqrt so rounding can never
    produce a NaN, with a small epsilon keeping the std differentiable.
    """
    if h.shape[0] < 1:
        raise ValueError("cannot pool an empty sequence")
    e = np.tanh(h @ proj_weight.T + proj_bias) @ context
    alpha = softmax(e)
    mean = alpha @ h
    second = alpha @ (h * h)
    std = np.sqrt(np.maximum(second - mean * mean, 0.0) + VAR_EPS)
    return np.concatenate([mean, std])


@dataclass(frozen=True)
class EmbeddingNetwork:
    stem_weight: np.ndarray
    stem_bias: np.ndarray
    stages: tuple[ResidualSeStage, ...]
    asp_proj_weight: np.ndarray
    asp_proj_bias: np.ndarray
    asp_context: np.ndarray
    fc_weight: np.ndarray
    fc_bias: np.ndarray

    @property
    def embedding_dim(self) -> int:
        return self.fc_weight.shape[0]

    @classmethod
    def from_bundle(cls, bundle: WeightBundle) -> "EmbeddingNetwork":
        if bundle.config.get("arch") != "embedding":
            raise ValueError(f"not an embedding bundle: {bundle.config.get('arch')!r}")
        validate_bundle(bundle)
        t = bundle.tensors
        stages = []
        for s in range(1, len(bundle.config["channels"]) + 1):
            p = f"stage{s}"
            has_down = f"{p}.downsample.weight" in t
            stages.append(
                ResidualSeStage(
                    conv1_weight=t[f"{p}.conv1.weight"],
                    conv1_bias=t[f"{p}.conv1.bias"],
                    conv2_weight=t[f"{p}.conv2.weight"],
                    conv2_bias=t[f"{p}.conv2.bias"],
                    se=SeBlock(
                        t[f"{p}.se.fc1.weight"], t[f"{p}.se.fc1.bias"],
                        t[f"{p}.se.fc2.weight"], t[f"{p}.se.fc2.bias"],
                    ),
                    stride=1 if s == 1 else 2,
                    downsample_weight=t.get(f"{p}.downsample.weight"),
                    downsample_bias=t.get(f"{p}.downsample.bias"),
                )
            )
        return cls(
            stem_weight=t["stem.conv.weight"],
            stem_bias=t["stem.conv.bias"],
            stages=tuple(stages),
            asp_proj_weight=t["asp.proj.weight"],
            asp_proj_bias=t["asp.proj.bias"],
            asp_context=t["asp.context"],
            fc_weight=t["fc.weight"],
            fc_bias=t["fc.bias"],
        )

    def frame_map(self, features: np.ndarray) -> np.ndarray:
        """Trunk output flattened per time step, (T, 80) -> (T', C*F)."""
        if features.shape[0] < dsp.WINDOW_FRAMES:
            raise ValueError(
                f"need at least {dsp.WINDOW_FRAMES} frames, got {features.shape[0]}"
            )
        x = relu(conv2d(features[None], self.stem_weight, self.stem_bias))
        for stage in self.stages:
            x = stage(x)
        c, t, f = x.shape
        return x.transpose(1, 0, 2).reshape(t, c * f)


def embed(net: EmbeddingNetwork, features: np.ndarray) -> np.ndarray:
    """L2-normalized speaker embedding for a feature matrix."""
    frames = net.frame_map(features)
    pooled = asp_pool(frames, net.asp_proj_weight, net.asp_proj_bias,
                      net.asp_context)
    raw = net.fc_weight @ pooled + net.fc_bias
    norm = np.linalg.norm(raw)
    if norm == 0.0:
        raise ValueError("degenerate zero embedding")
    return raw / norm


def random_embedding_bundle(seed: int, channels=CHANNELS,
                            attention_dim: int = ATTENTION_DIM,
                            embedding_dim: int = EMBEDDING_DIM) -> WeightBundle:
    """Seeded random weights; used for plumbing tests before training exists."""
    rng = np.random.default_rng(seed)
    config = {
        "arch": "embedding",
        "input_dim": dsp.NUM_MEL,
        "channels": list(channels),
        "attention_dim": attention_dim,
        "embedding_dim": embedding_dim,
    }
    tensors = {
        name: rng.standard_normal(shape) * np.sqrt(2.0 / np.prod(shape[1:]))
        for name, shape in embedding_tensor_shapes(config).items()
    }
    return WeightBundle(config=config, tensors=tensors)
