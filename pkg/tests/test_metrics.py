import numpy as np
import pytest

from voicetrigger.metrics import (
    compute_eer,
    compute_mindcf,
    compute_score,
    fr_at_fa_per_hour,
    threshold_candidates,
)


def exhaustive_eer_oracle(pos, neg):
    """O(n^2) sweep over the same candidate grid, no vectorization."""
    best = None
    for th in threshold_candidates(pos, neg):
        frr = sum(1 for s in pos if s < th) / len(pos)
        far = sum(1 for s in neg if s >= th) / len(neg)
        key = (abs(far - frr), far + frr)
        if best is None or key < best[0]:
            best = (key, (far + frr) / 2)
    return best[1]


def exhaustive_mindcf_oracle(pos, neg, p_target=0.01, c_miss=1.0, c_fa=1.0):
    best = None
    for th in threshold_candidates(pos, neg):
        frr = sum(1 for s in pos if s < th) / len(pos)
        far = sum(1 for s in neg if s >= th) / len(neg)
        dcf = c_miss * p_target * frr + c_fa * (1 - p_target) * far
        if best is None or dcf < best:
            best = dcf
    return best / min(c_miss * p_target, c_fa * (1 - p_target))


class TestComputeScore:
    def test_zero(self):
        assert compute_score(0.0, 0.0) == 0.0

    def test_example(self):
        assert compute_score(0.10, 0.05) == pytest.approx(1.05)

    def test_alpha_matches_positive_prior(self):
        assert (1 - 0.05) / 0.05 == pytest.approx(19.0)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            compute_score(1.2, 0.0)
        with pytest.raises(ValueError):
            compute_score(0.0, -0.1)

    def test_monotone_in_both_rates(self):
        base = compute_score(0.3, 0.02)
        assert compute_score(0.4, 0.02) > base
        assert compute_score(0.3, 0.03) > base


class TestComputeEer:
    def test_perfectly_separated(self):
        eer, th = compute_eer([0.9, 0.8], [0.1, 0.2])
        assert eer == 0.0
        assert th == pytest.approx(0.5)

    def test_three_v_three(self):
        eer, th = compute_eer([0.8, 0.6, 0.4], [0.5, 0.3, 0.1])
        assert eer == pytest.approx(1 / 3)
        assert 0.4 < th <= 0.5

    def test_identical_distributions(self):
        scores = [0.2, 0.5, 0.8]
        eer, _ = compute_eer(scores, scores)
        assert eer == pytest.approx(0.5)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            compute_eer([], [0.1])

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            pos = rng.uniform(-1, 1, size=int(rng.integers(1, 51)))
            neg = rng.uniform(-1, 1, size=int(rng.integers(1, 51)))
            eer, _ = compute_eer(pos, neg)
            assert eer == exhaustive_eer_oracle(list(pos), list(neg))

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(4)
        pos = rng.uniform(-1, 1, size=30)
        neg = rng.uniform(-1, 1, size=40)
        eer, _ = compute_eer(pos, neg)
        for f in (lambda x: 3 * x + 2, np.tanh, lambda x: np.exp(0.5 * x)):
            eer2, _ = compute_eer(f(pos), f(neg))
            assert eer2 == pytest.approx(eer, abs=1e-12)

    def test_balance_at_threshold(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            pos = rng.normal(0.5, 0.3, size=int(rng.integers(5, 40)))
            neg = rng.normal(-0.2, 0.3, size=int(rng.integers(5, 40)))
            _, th = compute_eer(pos, neg)
            frr = np.mean(pos < th)
            far = np.mean(neg >= th)
            assert abs(far - frr) <= 1.0 / min(len(pos), len(neg)) + 1e-12


class TestComputeMindcf:
    def test_perfectly_separated(self):
        dcf, _ = compute_mindcf([0.9, 0.8], [0.1, 0.2])
        assert dcf == 0.0

    def test_accept_all_bound(self):
        # With FAR forced to 1, normalized DCF is (1-p)/p * FAR = 99.
        far = 1.0
        p = 0.01
        assert far * (1 - p) / min(p, 1 - p) == pytest.approx(99.0)

    def test_example_matches_oracle(self):
        pos = [0.8, 0.6, 0.4]
        neg = [0.5, 0.3, 0.1]
        dcf, _ = compute_mindcf(pos, neg)
        assert dcf == exhaustive_mindcf_oracle(pos, neg)

    def test_matches_exhaustive_oracle_random(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            pos = rng.uniform(-1, 1, size=int(rng.integers(1, 51)))
            neg = rng.uniform(-1, 1, size=int(rng.integers(1, 51)))
            dcf, _ = compute_mindcf(pos, neg)
            assert dcf == exhaustive_mindcf_oracle(list(pos), list(neg))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            compute_mindcf([0.5], [])


class TestFrAtFaPerHour:
    def test_all_positives_above(self):
        fr, _ = fr_at_fa_per_hour([0.9, 0.8], [0.1, 0.2, 0.3], 1.0)
        assert fr == 0.0

    def test_boundary_included(self):
        # 10 negatives over 5 hours: threshold passing exactly 5 gives
        # 1.0 FA/hour, which is allowed.
        neg = [i / 10 for i in range(10)]
        pos = [0.35, 0.46]
        fr, th = fr_at_fa_per_hour(pos, neg, negative_hours=5.0)
        above = sum(1 for s in neg if s > th)
        assert above / 5.0 <= 1.0
        assert th == pytest.approx(0.4)
        assert fr == pytest.approx(50.0)

    def test_infinite_target(self):
        fr, th = fr_at_fa_per_hour([0.1], [0.9] * 5, 1.0, target_fa_per_hour=float("inf"))
        assert fr == 0.0
        assert th == -np.inf

    def test_no_negative_audio_rejected(self):
        with pytest.raises(ValueError):
            fr_at_fa_per_hour([0.5], [0.5], 0.0)
