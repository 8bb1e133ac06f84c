"""Keyword-spotting network: stacked LSTM, average pooling, softmax head.

Gate order in the packed 4H tensors is [input, forget, cell-candidate,
output]; this is part of the PVTW contract.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsp
from .weights import WeightBundle, kws_tensor_shapes, validate_bundle

HIDDEN_DIM = 128
NUM_CLASSES = 4  # 3 keyword subwords + filler
FILLER_CLASS = 3
SUBWORD_CLASSES = (0, 1, 2)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


@dataclass(frozen=True)
class LstmLayerParams:
    input_weights: np.ndarray  # (4H, D)
    recurrent_weights: np.ndarray  # (4H, H)
    bias: np.ndarray  # (4H,)

    def __post_init__(self):
        h4, d = self.input_weights.shape
        if h4 % 4 != 0:
            raise ValueError("input_weights first dim must be 4*H")
        h = h4 // 4
        if self.recurrent_weights.shape != (h4, h):
            raise ValueError(
                f"recurrent_weights shape {self.recurrent_weights.shape}, "
                f"expected {(h4, h)}"
            )
        if self.bias.shape != (h4,):
            raise ValueError(f"bias shape {self.bias.shape}, expected {(h4,)}")

    @property
    def hidden_dim(self) -> int:
        return self.input_weights.shape[0] // 4

    @property
    def input_dim(self) -> int:
        return self.input_weights.shape[1]


def lstm_forward_batched(params: LstmLayerParams, x: np.ndarray) -> np.ndarray:
    """Run the LSTM recurrence over a batch, x: (B, T, D) -> (B, T, H).

    Zero initial hidden and cell state. The recurrence is sequential in T
    but vectorized over the batch, which is what makes sliding-window
    posteriors cheap.
    """
    b, t, d = x.shape
    if d != params.input_dim:
        raise ValueError(f"input dim {d} != param dim {params.input_dim}")
    h_dim = params.hidden_dim
    # Input contributions for all timesteps at once.
    pre_x = x @ params.input_weights.T + params.bias  # (B, T, 4H)
    h = np.zeros((b, h_dim))
    c = np.zeros((b, h_dim))
    out = np.empty((b, t, h_dim))
    w_h_t = params.recurrent_weights.T
    for step in range(t):
        gates = pre_x[:, step, :] + h @ w_h_t
        i = _sigmoid(gates[:, 0 * h_dim : 1 * h_dim])
        f = _sigmoid(gates[:, 1 * h_dim : 2 * h_dim])
        g = np.tanh(gates[:, 2 * h_dim : 3 * h_dim])
        o = _sigmoid(gates[:, 3 * h_dim : 4 * h_dim])
        c = f * c + i * g
        h = o * np.tanh(c)
        out[:, step, :] = h
    return out


def lstm_forward(params: LstmLayerParams, x: np.ndarray) -> np.ndarray:
    """Single-sequence LSTM forward, x: (T, D) -> (T, H)."""
    return lstm_forward_batched(params, x[None])[0]


def average_pool(h: np.ndarray) -> np.ndarray:
    """Mean over the time axis; (T, H) -> (H,) or (B, T, H) -> (B, H)."""
    if h.shape[-2] == 0:
        raise ValueError("cannot pool an empty sequence")
    return h.mean(axis=-2)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax along the last axis."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class KwsNetwork:
    lstm1: LstmLayerParams
    lstm2: LstmLayerParams
    fc_weight: np.ndarray  # (C, H)
    fc_bias: np.ndarray  # (C,)

    @property
    def num_classes(self) -> int:
        return self.fc_weight.shape[0]

    @classmethod
    def from_bundle(cls, bundle: WeightBundle) -> "KwsNetwork":
        if bundle.config.get("arch") != "kws":
            raise ValueError(f"not a kws bundle: {bundle.config.get('arch')!r}")
        validate_bundle(bundle)
        t = bundle.tensors
        return cls(
            lstm1=LstmLayerParams(
                t["lstm1.input_weights"], t["lstm1.recurrent_weights"], t["lstm1.bias"]
            ),
            lstm2=LstmLayerParams(
                t["lstm2.input_weights"], t["lstm2.recurrent_weights"], t["lstm2.bias"]
            ),
            fc_weight=t["fc.weight"],
            fc_bias=t["fc.bias"],
        )


def classify_window(net: KwsNetwork, window: np.ndarray) -> np.ndarray:
    """Posterior over the C classes for one (40, 80) feature window."""
    if window.shape != (dsp.WINDOW_FRAMES, dsp.NUM_MEL):
        raise ValueError(
            f"window shape {window.shape}, expected "
            f"({dsp.WINDOW_FRAMES}, {dsp.NUM_MEL})"
        )
    return classify_windows(net, window[None])[0]


def classify_windows(net: KwsNetwork, windows: np.ndarray) -> np.ndarray:
    """Batched posteriors, windows: (N, 40, 80) -> (N, C)."""
    h1 = lstm_forward_batched(net.lstm1, windows)
    h2 = lstm_forward_batched(net.lstm2, h1)
    context = average_pool(h2)
    logits = context @ net.fc_weight.T + net.fc_bias
    return softmax(logits)


def kws_posteriors(net: KwsNetwork, features: np.ndarray) -> np.ndarray:
    """Posterior sequence over hop-1 sliding windows, (T, 80) -> (T-39, C)."""
    windows = dsp.segment_windows(features)
    return classify_windows(net, windows)


def random_kws_bundle(seed: int, hidden_dim: int = HIDDEN_DIM,
                      num_classes: int = NUM_CLASSES) -> WeightBundle:
    """Seeded random weights; used for plumbing tests before training exists."""
    rng = np.random.default_rng(seed)
    config = {
        "arch": "kws",
        "input_dim": dsp.NUM_MEL,
        "hidden_dim": hidden_dim,
        "num_classes": num_classes,
    }
    tensors = {
        name: rng.standard_normal(shape) * 0.1
        for name, shape in kws_tensor_shapes(config).items()
    }
    return WeightBundle(config=config, tensors=tensors)
