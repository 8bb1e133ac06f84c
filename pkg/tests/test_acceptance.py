"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (emitted past output capture so plain `pytest -v` shows
them)."""

import itertools
import json
import time
from contextlib import contextmanager

import numpy as np
import pytest

from voicetrigger import dsp
from voicetrigger.audio import from_float
from voicetrigger.cli import main as cli_main
from voicetrigger.decoder import confidence
from voicetrigger.embedder import (
    EmbeddingNetwork,
    asp_pool,
    random_embedding_bundle,
)
from voicetrigger.kws import (
    KwsNetwork,
    LstmLayerParams,
    lstm_forward,
    random_kws_bundle,
)
from voicetrigger.metrics import compute_eer, compute_mindcf, compute_score
from voicetrigger.pipeline import Engine
from voicetrigger.weights import (
    WeightFormatError,
    load_weights,
    save_weights,
    validate_bundle,
)


_capman = None


@pytest.fixture(autouse=True)
def _expose_capture_manager(request):
    global _capman
    _capman = request.config.pluginmanager.getplugin("capturemanager")
    yield


def emit(line):
    """Print straight to the terminal even while pytest captures output."""
    if _capman is not None:
        with _capman.global_and_fixture_disabled():
            print(line, flush=True)
    else:
        print(line, flush=True)


@contextmanager
def criterion(name):
    try:
        yield
    except Exception:
        emit(f"[ACCEPTANCE] FAIL  {name}")
        raise
    emit(f"[ACCEPTANCE] PASS  {name}")


def test_confidence_dp_equals_brute_force():
    with criterion("confidence DP vs brute force, 1000 instances, <5s"):
        rng = np.random.default_rng(2024)
        t0 = time.perf_counter()
        for _ in range(1000):
            t_len = int(rng.integers(1, 9))
            m = int(rng.integers(1, min(t_len, 4) + 1))
            probs = rng.uniform(0.0, 1.0, size=(t_len, m))
            post = np.zeros((t_len, m + 1))
            post[:, :m] = probs
            got = confidence(post, list(range(m))).value
            best = 0.0
            for combo in itertools.combinations(range(t_len), m):
                prod = 1.0
                for i, t in enumerate(combo):
                    prod *= max(probs[t, i], 1e-12)
                best = max(best, prod)
            want = best ** (1.0 / m)
            assert abs(got - want) < 1e-9
        elapsed = time.perf_counter() - t0
        assert elapsed < 5.0, f"oracle sweep took {elapsed:.2f}s"


def test_lstm_matches_scalar_recurrence():
    with criterion("LSTM oracle: 100 random small instances, |delta| < 1e-9"):
        from test_kws import scalar_lstm_oracle

        rng = np.random.default_rng(7)
        for _ in range(100):
            d = int(rng.integers(1, 5))
            h = int(rng.integers(1, 5))
            t_len = int(rng.integers(1, 6))
            params = LstmLayerParams(
                input_weights=rng.standard_normal((4 * h, d)),
                recurrent_weights=rng.standard_normal((4 * h, h)),
                bias=rng.standard_normal(4 * h),
            )
            x = rng.standard_normal((t_len, d))
            want = scalar_lstm_oracle(
                params.input_weights, params.recurrent_weights, params.bias, x
            )
            assert np.max(np.abs(lstm_forward(params, x) - want)) < 1e-9


def test_asp_matches_weighted_moments():
    with criterion("ASP oracle: weighted moments < 1e-9; v=0 plain stats < 1e-6"):
        from test_embedder import weighted_moments_oracle

        rng = np.random.default_rng(8)
        for _ in range(100):
            t_len = int(rng.integers(1, 10))
            d = int(rng.integers(1, 6))
            a = int(rng.integers(1, 5))
            h = rng.standard_normal((t_len, d))
            w = rng.standard_normal((a, d))
            b = rng.standard_normal(a)
            v = rng.standard_normal(a)
            got = asp_pool(h, w, b, v)
            assert np.max(np.abs(got - weighted_moments_oracle(h, w, b, v))) < 1e-9
        h = rng.standard_normal((20, 5))
        out = asp_pool(h, rng.standard_normal((3, 5)), rng.standard_normal(3),
                       np.zeros(3))
        assert np.max(np.abs(out[:5] - h.mean(axis=0))) < 1e-6
        assert np.max(np.abs(out[5:] - h.std(axis=0))) < 1e-6


def test_metric_sweeps_match_exhaustive_oracles():
    with criterion("Metric oracles: EER/minDCF exact on 200 sets; "
                   "EER monotone-invariant"):
        from test_metrics import exhaustive_eer_oracle, exhaustive_mindcf_oracle

        rng = np.random.default_rng(9)
        for _ in range(200):
            pos = rng.uniform(-1, 1, size=int(rng.integers(1, 51)))
            neg = rng.uniform(-1, 1, size=int(rng.integers(1, 51)))
            eer, _ = compute_eer(pos, neg)
            dcf, _ = compute_mindcf(pos, neg)
            assert eer == exhaustive_eer_oracle(list(pos), list(neg))
            assert dcf == exhaustive_mindcf_oracle(list(pos), list(neg))
        pos = rng.uniform(-1, 1, size=25)
        neg = rng.uniform(-1, 1, size=35)
        base, _ = compute_eer(pos, neg)
        for f in (lambda x: 5 * x - 1, np.tanh, lambda x: x**3):
            got, _ = compute_eer(f(pos), f(neg))
            assert got == pytest.approx(base, abs=1e-12)


def test_wakeup_score_contract():
    with criterion("wakeup score: 0.10 + 19*0.05 == 1.05; report identity"):
        assert compute_score(0.10, 0.05) == 1.05
        rng = np.random.default_rng(10)
        for _ in range(100):
            miss = round(float(rng.uniform(0, 1)), 6)
            fa = round(float(rng.uniform(0, 1)), 6)
            stored = round(compute_score(miss, fa), 6)
            assert stored == round(miss + 19.0 * fa, 6)


def test_gate_logic_decision_table():
    with criterion("Gate logic: exhaustive stubbed decision table; "
                   "sv never runs on kws rejection"):
        from voicetrigger import decoder as dec
        from voicetrigger.verifier import enroll

        engine = Engine(
            kws_net=KwsNetwork.from_bundle(random_kws_bundle(seed=0)),
            emb_net=EmbeddingNetwork.from_bundle(random_embedding_bundle(seed=1)),
        )
        audio = from_float(np.random.default_rng(0).uniform(-0.1, 0.1, 8000))
        base = np.zeros(128)
        base[0] = 1.0
        profile = enroll("p", [base])
        rng = np.random.default_rng(11)
        for _ in range(300):
            kws_conf = float(rng.uniform(0, 1))
            kws_thr = float(rng.uniform(0, 1))
            sv_thr = float(rng.uniform(-1, 1))
            cosine = float(rng.uniform(-1, 1))
            vec = np.zeros(128)
            vec[0] = cosine
            vec[1] = np.sqrt(1.0 - cosine**2)
            engine._channel_scores = lambda f, c=kws_conf: [
                dec.ConfidenceScore(c, 0, 50, (10, 20, 30))
            ]
            engine.sv_runs = 0

            def stub_embed(feats, v=vec):
                engine.sv_runs += 1
                return v

            engine.extract_embedding = stub_embed
            d = engine.process_utterance(audio, profile, kws_thr, sv_thr)
            triggered = kws_conf > kws_thr
            assert d.kws_triggered == triggered
            assert d.accepted == (triggered and cosine > sv_thr)
            assert not d.accepted or d.kws_triggered
            assert engine.sv_runs == (1 if triggered else 0), \
                "sv stage ran without a kws trigger"


def test_frontend_contracts():
    with criterion("Frontend: Parseval 1e-6; closed-form counts x1000; "
                   "silence == ln(1e-10)"):
        rng = np.random.default_rng(12)
        for _ in range(50):
            frame = rng.standard_normal(400)
            spec = np.fft.rfft(frame, n=512)
            freq_energy = (
                np.abs(spec[0]) ** 2
                + 2 * np.sum(np.abs(spec[1:-1]) ** 2)
                + np.abs(spec[-1]) ** 2
            ) / 512.0
            time_energy = np.sum(frame**2)
            assert abs(freq_energy - time_energy) / time_energy < 1e-6
        for n in rng.integers(400, 40000, size=1000):
            n = int(n)
            sig = from_float(np.zeros(n) + 0.01)
            frames = dsp.frame_signal(sig)
            assert frames.shape[0] == 1 + (n - 400) // 160
            t = frames.shape[0]
            if t >= 40:
                assert dsp.segment_windows(
                    dsp.extract_features(sig)
                ).shape[0] == 1 + (t - 40)
        silence = dsp.extract_features(from_float(np.zeros(16000)))
        assert np.all(silence == np.log(1e-10))


@pytest.mark.slow
def test_end_to_end_plumbing_and_rtf(tmp_path):
    with criterion("End-to-end: synth 200/1800 -> evaluate, well-formed "
                   "report.json, single-threaded RTF < 1.0"):
        corpus = tmp_path / "corpus"
        assert cli_main([
            "synth", "--seed", "42", "--out", str(corpus),
            "--pos", "200", "--neg", "1800",
            "--speakers", "10", "--imposters", "10",
        ]) == 0
        models = tmp_path / "models"
        assert cli_main(["init-weights", "--seed", "0", "--out", str(models)]) == 0
        results = tmp_path / "results"
        assert cli_main([
            "evaluate",
            "--kws-weights", str(models / "kws.pvtw"),
            "--emb-weights", str(models / "emb.pvtw"),
            "--trials", str(corpus / "trials.txt"),
            "--sv-threshold", "0.5", "--out", str(results),
            "--jobs", "1",
        ]) == 0
        doc = json.loads((results / "report.json").read_text())
        assert doc["num_pos"] == 200 and doc["num_neg"] == 1800
        for key in ("miss_rate", "fa_rate", "score_wakeup", "rtf",
                    "fr_at_1fa_per_hour"):
            assert isinstance(doc[key], (int, float))
        assert doc["score_wakeup"] == round(
            round(doc["miss_rate"], 6) + 19 * round(doc["fa_rate"], 6), 6
        )
        assert 0.0 < doc["rtf"] < 1.0, f"real-time factor {doc['rtf']}"
        emit(f"[ACCEPTANCE] measured RTF {doc['rtf']}")


def test_weight_format_contract(tmp_path):
    with criterion("PVTW format: bit-identical round trip; corrupted files "
                   "rejected with named diagnostics"):
        for bundle in (random_kws_bundle(3), random_embedding_bundle(4)):
            p1 = tmp_path / "a.pvtw"
            p2 = tmp_path / "b.pvtw"
            save_weights(p1, bundle)
            save_weights(p2, load_weights(p1))
            assert p1.read_bytes() == p2.read_bytes()
        good = tmp_path / "a.pvtw"
        data = bytearray(good.read_bytes())
        bad = tmp_path / "bad.pvtw"

        bad.write_bytes(b"WRNG" + bytes(data[4:]))
        with pytest.raises(WeightFormatError, match="magic"):
            load_weights(bad)

        import struct

        bad.write_bytes(bytes(data[:4]) + struct.pack("<I", 9) + bytes(data[8:]))
        with pytest.raises(WeightFormatError, match="version"):
            load_weights(bad)

        bad.write_bytes(bytes(data[: len(data) - 40]))
        with pytest.raises(WeightFormatError, match="truncated"):
            load_weights(bad)

        broken = random_kws_bundle(5)
        broken.tensors["lstm2.bias"] = np.zeros(3)
        with pytest.raises(WeightFormatError, match="lstm2.bias"):
            validate_bundle(broken)
