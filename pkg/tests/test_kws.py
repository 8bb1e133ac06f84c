import math

import numpy as np
import pytest

from voicetrigger.kws import (
    KwsNetwork,
    LstmLayerParams,
    average_pool,
    classify_window,
    classify_windows,
    kws_posteriors,
    lstm_forward,
    random_kws_bundle,
    softmax,
)


def scalar_lstm_oracle(w_x, w_h, bias, x):
    """Naive per-timestep, per-unit gate recurrence; no vectorization."""

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    h4, d = w_x.shape
    hdim = h4 // 4
    t_len = x.shape[0]
    h = [0.0] * hdim
    c = [0.0] * hdim
    out = np.zeros((t_len, hdim))
    for t in range(t_len):
        pre = [0.0] * h4
        for r in range(h4):
            acc = bias[r]
            for k in range(d):
                acc += w_x[r, k] * x[t, k]
            for k in range(hdim):
                acc += w_h[r, k] * h[k]
            pre[r] = acc
        new_h, new_c = [], []
        for u in range(hdim):
            i = sig(pre[u])
            f = sig(pre[hdim + u])
            g = math.tanh(pre[2 * hdim + u])
            o = sig(pre[3 * hdim + u])
            cu = f * c[u] + i * g
            new_c.append(cu)
            new_h.append(o * math.tanh(cu))
        h, c = new_h, new_c
        out[t] = h
    return out


def random_params(rng, d, hdim):
    return LstmLayerParams(
        input_weights=rng.standard_normal((4 * hdim, d)),
        recurrent_weights=rng.standard_normal((4 * hdim, hdim)),
        bias=rng.standard_normal(4 * hdim),
    )


class TestLstmForward:
    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            d = int(rng.integers(1, 5))
            hdim = int(rng.integers(1, 5))
            t_len = int(rng.integers(1, 6))
            params = random_params(rng, d, hdim)
            x = rng.standard_normal((t_len, d))
            got = lstm_forward(params, x)
            want = scalar_lstm_oracle(
                params.input_weights, params.recurrent_weights, params.bias, x
            )
            np.testing.assert_allclose(got, want, atol=1e-9)

    def test_zero_params_give_zero_output(self):
        params = LstmLayerParams(
            input_weights=np.zeros((8, 3)),
            recurrent_weights=np.zeros((8, 2)),
            bias=np.zeros(8),
        )
        out = lstm_forward(params, np.random.default_rng(0).standard_normal((4, 3)))
        assert np.all(out == 0.0)

    def test_output_shape(self):
        rng = np.random.default_rng(1)
        params = random_params(rng, 80, 128)
        assert lstm_forward(params, rng.standard_normal((7, 80))).shape == (7, 128)

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(2)
        params = random_params(rng, 3, 2)
        with pytest.raises(ValueError):
            lstm_forward(params, rng.standard_normal((4, 5)))


class TestAveragePool:
    def test_constant_rows(self):
        v = np.array([1.0, -2.0, 3.0])
        np.testing.assert_allclose(average_pool(np.tile(v, (5, 1))), v)

    def test_opposite_rows_cancel(self):
        v = np.array([0.5, 0.25])
        np.testing.assert_allclose(average_pool(np.stack([v, -v])), 0.0)

    def test_matches_mean_oracle(self):
        rng = np.random.default_rng(5)
        h = rng.standard_normal((5, 3))
        want = np.array([sum(h[t, j] for t in range(5)) / 5 for j in range(3)])
        np.testing.assert_allclose(average_pool(h), want, atol=1e-12)

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            average_pool(np.zeros((0, 3)))


class TestClassifyWindow:
    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(9)
        net = KwsNetwork.from_bundle(random_kws_bundle(seed=9))
        probs = classify_window(net, rng.standard_normal((40, 80)))
        assert probs.shape == (4,)
        assert abs(probs.sum() - 1.0) < 1e-6
        assert np.all(probs >= 0.0)

    def test_zero_head_gives_uniform(self):
        bundle = random_kws_bundle(seed=10)
        bundle.tensors["fc.weight"] = np.zeros_like(bundle.tensors["fc.weight"])
        bundle.tensors["fc.bias"] = np.zeros_like(bundle.tensors["fc.bias"])
        net = KwsNetwork.from_bundle(bundle)
        probs = classify_window(net, np.random.default_rng(0).standard_normal((40, 80)))
        np.testing.assert_allclose(probs, 0.25, atol=1e-12)

    def test_softmax_huge_logits_stable(self):
        probs = softmax(np.array([1000.0, 1000.0, 1000.0, 1000.0]))
        np.testing.assert_allclose(probs, 0.25)

    def test_wrong_shape_rejected(self):
        net = KwsNetwork.from_bundle(random_kws_bundle(seed=11))
        with pytest.raises(ValueError):
            classify_window(net, np.zeros((39, 80)))

    def test_batched_matches_single(self):
        rng = np.random.default_rng(12)
        net = KwsNetwork.from_bundle(random_kws_bundle(seed=12))
        windows = rng.standard_normal((3, 40, 80))
        batched = classify_windows(net, windows)
        for k in range(3):
            np.testing.assert_allclose(
                batched[k], classify_window(net, windows[k]), atol=1e-12
            )


class TestKwsPosteriors:
    @pytest.mark.parametrize("t,n", [(40, 1), (190, 151), (98, 59)])
    def test_window_counts(self, t, n):
        net = KwsNetwork.from_bundle(random_kws_bundle(seed=13))
        feats = np.random.default_rng(t).standard_normal((t, 80))
        posteriors = kws_posteriors(net, feats)
        assert posteriors.shape == (n, 4)
        np.testing.assert_allclose(posteriors.sum(axis=1), 1.0, atol=1e-5)

    def test_too_short_errors(self):
        net = KwsNetwork.from_bundle(random_kws_bundle(seed=13))
        with pytest.raises(Exception):
            kws_posteriors(net, np.zeros((20, 80)))


def test_forward_after_round_trip_bit_identical(tmp_path):
    from voicetrigger.weights import load_weights, save_weights

    window = np.random.default_rng(21).standard_normal((40, 80))
    path1 = tmp_path / "w1.pvtw"
    path2 = tmp_path / "w2.pvtw"
    save_weights(path1, random_kws_bundle(seed=21))
    loaded = load_weights(path1)
    before = classify_window(KwsNetwork.from_bundle(loaded), window)
    save_weights(path2, loaded)
    after = classify_window(KwsNetwork.from_bundle(load_weights(path2)), window)
    assert np.array_equal(before, after)
