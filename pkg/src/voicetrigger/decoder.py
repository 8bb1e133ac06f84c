"""Order-constrained confidence decoding on posterior streams.

The keyword confidence over a decision window is the max over strictly
increasing frame indices t_1 < ... < t_M of the product of the subword
posteriors at those frames, taken to the 1/M power. Computed with a DP in
the log domain so large windows cannot underflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_FLOOR = np.log(1e-12)
DECISION_WINDOW = 150
DECISION_HOP = 10
REFRACTORY = 100


@dataclass(frozen=True)
class ConfidenceScore:
    value: float
    start: int  # window start frame index in the posterior stream
    end: int  # exclusive end index
    alignment: tuple[int, ...]  # absolute indices of the best t_1 < ... < t_M


@dataclass(frozen=True)
class TriggerEvent:
    end_frame: int  # posterior index at which the decision window ends
    confidence: float
    alignment: tuple[int, ...]


def confidence(posteriors: np.ndarray, subwords, start: int = 0) -> ConfidenceScore:
    """Best order-constrained subword score over one decision window.

    posteriors: (T, C) rows of class probabilities; subwords: the M class
    indices that must fire in order. Returns the M-th root of the best
    product and one argmax alignment (indices offset by `start`).
    """
    subwords = list(subwords)
    t_len, m = posteriors.shape[0], len(subwords)
    if m < 1:
        raise ValueError("need at least one subword")
    if t_len < m:
        raise ValueError(f"window of {t_len} rows cannot fit {m} ordered subwords")
    with np.errstate(divide="ignore"):
        logp = np.maximum(
            np.log(np.maximum(posteriors[:, subwords], 0.0)), LOG_FLOOR
        )
    # f[i][t]: best log-product placing the first i subwords within rows <= t.
    # Recurrence f[i][t] = max(f[i][t-1], f[i-1][t-1] + logp[t-1, i]),
    # vectorized over t via a running maximum.
    neg_inf = -np.inf
    prev = np.zeros(t_len + 1)  # f[0][t] = log 1
    choice = np.zeros((m, t_len + 1), dtype=bool)  # True: subword i placed at t-1
    for i in range(m):
        take = prev[:-1] + logp[:, i]  # candidate f[i+1][t] placing subword at t-1
        acc = np.maximum.accumulate(take)
        choice[i, 1:] = take >= np.concatenate(([neg_inf], acc[:-1]))
        prev = np.concatenate(([neg_inf], acc))
    best_log = prev[t_len]
    alignment = []
    t = t_len
    for i in range(m - 1, -1, -1):
        while not choice[i, t]:
            t -= 1
        alignment.append(start + t - 1)
        t -= 1
    alignment.reverse()
    value = float(np.exp(best_log / m))
    return ConfidenceScore(
        value=min(value, 1.0),
        start=start,
        end=start + t_len,
        alignment=tuple(alignment),
    )


def window_scores(
    posteriors: np.ndarray,
    subwords,
    window: int = DECISION_WINDOW,
    hop: int = DECISION_HOP,
) -> list[ConfidenceScore]:
    """Confidence of every decision window sliding over a posterior stream.

    Streams shorter than the decision window are scored as one window over
    all available rows.
    """
    n = posteriors.shape[0]
    m = len(list(subwords))
    if n < m:
        raise ValueError(f"stream of {n} rows cannot fit {m} ordered subwords")
    starts = [0] if n < window else range(0, n - window + 1, hop)
    return [
        confidence(posteriors[s : s + window], subwords, start=s) for s in starts
    ]


def detect_stream(
    posteriors: np.ndarray,
    subwords,
    threshold: float,
    window: int = DECISION_WINDOW,
    hop: int = DECISION_HOP,
    refractory: int = REFRACTORY,
) -> list[TriggerEvent]:
    """Slide the decision window over a posterior stream and emit triggers.

    After a trigger, windows ending within `refractory` rows of the
    triggering window's end are suppressed so one utterance cannot fire
    twice.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    events: list[TriggerEvent] = []
    suppressed_until = -1
    for score in window_scores(posteriors, subwords, window=window, hop=hop):
        if score.end <= suppressed_until:
            continue
        if score.value > threshold:
            events.append(
                TriggerEvent(end_frame=score.end, confidence=score.value,
                             alignment=score.alignment)
            )
            suppressed_until = score.end + refractory
    return events
