import numpy as np
import pytest

from voicetrigger.embedder import (
    EmbeddingNetwork,
    asp_pool,
    conv2d,
    embed,
    random_embedding_bundle,
)


def weighted_moments_oracle(h, w, b, v):
    """Brute-force attention weights and moments, element by element."""
    t_len, d = h.shape
    logits = []
    for t in range(t_len):
        z = np.tanh(w @ h[t] + b)
        logits.append(float(np.dot(v, z)))
    logits = np.array(logits)
    weights = np.exp(logits - logits.max())
    weights /= weights.sum()
    mean = np.zeros(d)
    second = np.zeros(d)
    for t in range(t_len):
        mean += weights[t] * h[t]
        second += weights[t] * h[t] ** 2
    std = np.sqrt(np.maximum(second - mean**2, 0.0) + 1e-9)
    return np.concatenate([mean, std])


class TestAspPool:
    def test_matches_weighted_moment_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            t_len = int(rng.integers(1, 8))
            d = int(rng.integers(1, 6))
            a = int(rng.integers(1, 5))
            h = rng.standard_normal((t_len, d))
            w = rng.standard_normal((a, d))
            b = rng.standard_normal(a)
            v = rng.standard_normal(a)
            np.testing.assert_allclose(
                asp_pool(h, w, b, v), weighted_moments_oracle(h, w, b, v),
                atol=1e-9,
            )

    def test_zero_context_reduces_to_plain_stats(self):
        rng = np.random.default_rng(1)
        h = rng.standard_normal((12, 4))
        w = rng.standard_normal((3, 4))
        b = rng.standard_normal(3)
        out = asp_pool(h, w, b, np.zeros(3))
        np.testing.assert_allclose(out[:4], h.mean(axis=0), atol=1e-6)
        np.testing.assert_allclose(out[4:], h.std(axis=0), atol=1e-6)

    def test_single_frame(self):
        h = np.array([[1.0, -2.0]])
        out = asp_pool(h, np.zeros((2, 2)), np.zeros(2), np.zeros(2))
        np.testing.assert_allclose(out[:2], h[0])
        np.testing.assert_allclose(out[2:], np.sqrt(1e-9), atol=1e-12)

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            asp_pool(np.zeros((0, 2)), np.zeros((2, 2)), np.zeros(2), np.zeros(2))


class TestConv2d:
    def test_identity_kernel(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((1, 6, 6))
        w = np.zeros((1, 1, 3, 3))
        w[0, 0, 1, 1] = 1.0
        np.testing.assert_allclose(conv2d(x, w, np.zeros(1)), x, atol=1e-12)

    def test_stride_two_halves_dims(self):
        x = np.zeros((2, 9, 11))
        w = np.zeros((4, 2, 3, 3))
        out = conv2d(x, w, np.zeros(4), stride=2)
        assert out.shape == (4, 5, 6)

    def test_matches_naive_loop(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((2, 5, 4))
        w = rng.standard_normal((3, 2, 3, 3))
        bias = rng.standard_normal(3)
        got = conv2d(x, w, bias)
        padded = np.pad(x, ((0, 0), (1, 1), (1, 1)))
        want = np.zeros((3, 5, 4))
        for co in range(3):
            for i in range(5):
                for j in range(4):
                    acc = bias[co]
                    for ci in range(2):
                        for di in range(3):
                            for dj in range(3):
                                acc += w[co, ci, di, dj] * padded[ci, i + di, j + dj]
                    want[co, i, j] = acc
        np.testing.assert_allclose(got, want, atol=1e-9)


@pytest.fixture(scope="module")
def net():
    return EmbeddingNetwork.from_bundle(random_embedding_bundle(seed=5))


class TestEmbed:
    def test_unit_norm(self, net):
        feats = np.random.default_rng(6).standard_normal((60, 80))
        emb = embed(net, feats)
        assert emb.shape == (128,)
        assert abs(np.linalg.norm(emb) - 1.0) < 1e-6

    def test_deterministic(self, net):
        feats = np.random.default_rng(7).standard_normal((45, 80))
        assert np.array_equal(embed(net, feats), embed(net, feats))

    def test_se_gates_in_unit_interval(self, net):
        feats = np.random.default_rng(8).standard_normal((40, 80))
        x = np.maximum(
            conv2d(feats[None], net.stem_weight, net.stem_bias), 0.0
        )
        for stage in net.stages:
            y = np.maximum(
                conv2d(x, stage.conv1_weight, stage.conv1_bias,
                       stride=stage.stride), 0.0,
            )
            y = conv2d(y, stage.conv2_weight, stage.conv2_bias)
            gates = stage.se.gates(y)
            assert np.all(gates > 0.0) and np.all(gates < 1.0)
            x = stage(x)

    def test_lipschitz_smoke(self, net):
        rng = np.random.default_rng(9)
        feats = rng.standard_normal((50, 80))
        base = embed(net, feats)
        wobble = embed(net, feats + 1e-6 * rng.standard_normal((50, 80)))
        assert np.linalg.norm(base - wobble) < 1e-2

    def test_too_short_rejected(self, net):
        with pytest.raises(ValueError):
            embed(net, np.zeros((30, 80)))
