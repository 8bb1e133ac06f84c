"""Detection metrics: wake-up score, EER, minDCF, FR at a false-alarm budget.

Threshold sweeps share one candidate grid: midpoints between adjacent
distinct sorted scores plus sentinels beyond both extremes. At a threshold
theta, FRR = fraction of positive scores < theta and FAR = fraction of
negative scores >= theta. Plateaus of equally good thresholds resolve to
the plateau midpoint so results are deterministic.
"""

from __future__ import annotations

import numpy as np

ALPHA = 19.0  # (1 - 0.05) / 0.05: positives assumed 5% of traffic
DCF_P_TARGET = 0.01
DCF_C_MISS = 1.0
DCF_C_FA = 1.0


def compute_score(miss: float, fa: float, alpha: float = ALPHA) -> float:
    """Wake-up score: miss + alpha * fa."""
    if not 0.0 <= miss <= 1.0:
        raise ValueError(f"miss rate {miss} outside [0, 1]")
    if not 0.0 <= fa <= 1.0:
        raise ValueError(f"fa rate {fa} outside [0, 1]")
    return miss + alpha * fa


def threshold_candidates(pos_scores, neg_scores) -> np.ndarray:
    """Midpoints of adjacent distinct scores, plus below-min and above-max."""
    scores = np.unique(np.concatenate([pos_scores, neg_scores]))
    mids = (scores[:-1] + scores[1:]) / 2.0
    return np.concatenate([[scores[0] - 1.0], mids, [scores[-1] + 1.0]])


def _error_rates(pos: np.ndarray, neg: np.ndarray, thresholds: np.ndarray):
    frr = (pos[None, :] < thresholds[:, None]).mean(axis=1)
    far = (neg[None, :] >= thresholds[:, None]).mean(axis=1)
    return frr, far


def _plateau_midpoint(thresholds: np.ndarray, optimal: np.ndarray) -> float:
    sel = thresholds[optimal]
    return float((sel.min() + sel.max()) / 2.0)


def compute_eer(pos_scores, neg_scores) -> tuple[float, float]:
    """Equal error rate and its threshold.

    Picks the candidate minimizing |FAR - FRR|, breaking ties by smaller
    FAR + FRR and then by plateau midpoint; EER is (FAR + FRR) / 2 there.
    """
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("need at least one positive and one negative score")
    thresholds = threshold_candidates(pos, neg)
    frr, far = _error_rates(pos, neg, thresholds)
    gap = np.abs(far - frr)
    best_gap = gap.min()
    at_gap = gap == best_gap
    total = far + frr
    best_total = total[at_gap].min()
    optimal = at_gap & (total == best_total)
    eer = float(best_total / 2.0)
    return eer, _plateau_midpoint(thresholds, optimal)


def compute_mindcf(
    pos_scores,
    neg_scores,
    p_target: float = DCF_P_TARGET,
    c_miss: float = DCF_C_MISS,
    c_fa: float = DCF_C_FA,
) -> tuple[float, float]:
    """Minimum normalized detection cost and its threshold.

    DCF(theta) = c_miss * p_target * FRR + c_fa * (1 - p_target) * FAR,
    normalized by the cost of the better trivial system.
    """
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("need at least one positive and one negative score")
    thresholds = threshold_candidates(pos, neg)
    frr, far = _error_rates(pos, neg, thresholds)
    dcf = c_miss * p_target * frr + c_fa * (1.0 - p_target) * far
    norm = min(c_miss * p_target, c_fa * (1.0 - p_target))
    best = dcf.min()
    optimal = dcf == best
    return float(best / norm), _plateau_midpoint(thresholds, optimal)


def fr_at_fa_per_hour(
    pos_confidences,
    neg_confidences,
    negative_hours: float,
    target_fa_per_hour: float = 1.0,
) -> tuple[float, float]:
    """False-rejection percentage at a false-alarm rate budget.

    Finds the smallest threshold whose false alarms per hour of negative
    audio do not exceed the target (a trigger is confidence > threshold),
    then reports the percentage of positives whose confidence falls below
    that threshold.
    """
    if negative_hours <= 0.0:
        raise ValueError("need a positive amount of negative audio")
    pos = np.asarray(pos_confidences, dtype=np.float64)
    neg = np.sort(np.asarray(neg_confidences, dtype=np.float64))
    allowed = target_fa_per_hour * negative_hours
    if neg.size <= allowed:
        threshold = -np.inf
    else:
        # Candidates are the negative confidences themselves: at threshold
        # neg[k], alarms = count of scores strictly above it.
        k = neg.size - 1 - int(np.floor(allowed))
        threshold = float(neg[k])
    fr = float((pos < threshold).mean() * 100.0) if pos.size else 0.0
    return fr, threshold
