import json

import numpy as np
import pytest

from voicetrigger import dsp
from voicetrigger.audio import from_float, read_wav
from voicetrigger.synth import (
    NO_NOISE,
    TrialsetConfig,
    build_training_corpus,
    build_trialset,
    mix_noise,
    synth_speaker,
    synth_unit,
    synth_utterance,
    UNIT_BASE_FREQS,
)


class TestSpeakers:
    def test_deterministic(self):
        a = synth_speaker(7, 3)
        b = synth_speaker(7, 3)
        assert a == b

    def test_distinct_ids_differ(self):
        a = synth_speaker(7, 0)
        b = synth_speaker(7, 1)
        assert a.f0 != b.f0
        assert a.formant_freqs != b.formant_freqs

    def test_f0_range_over_many_draws(self):
        for i in range(1000):
            spk = synth_speaker(123, i)
            assert 90.0 <= spk.f0 <= 280.0


class TestUtterances:
    def test_keyword_alignments_at_end(self):
        spk = synth_speaker(1, 0)
        rng = np.random.default_rng(0)
        utt = synth_utterance(spk, "keyword", 3.0, NO_NOISE, rng)
        assert utt.subword_end_ms == (2600.0, 2800.0, 3000.0)

    def test_keyword_too_short_rejected(self):
        spk = synth_speaker(1, 0)
        with pytest.raises(ValueError):
            synth_utterance(spk, "keyword", 1.0, NO_NOISE,
                            np.random.default_rng(0))

    def test_confusable_has_no_alignments(self):
        spk = synth_speaker(1, 0)
        utt = synth_utterance(spk, "confusable", 2.0, NO_NOISE,
                              np.random.default_rng(0))
        assert utt.subword_end_ms is None

    def test_snr_zero_balances_powers(self):
        spk = synth_speaker(2, 0)
        rng = np.random.default_rng(1)
        clean = synth_utterance(spk, "keyword", 2.0, NO_NOISE, rng)
        noise = from_float(rng.standard_normal(clean.audio.num_samples))
        mixed = mix_noise(clean.audio, noise, snr_db=0.0)
        added = mixed.samples - clean.audio.samples
        p_sig = np.mean(clean.audio.samples**2)
        p_noise = np.mean(added**2)
        measured_db = 10 * np.log10(p_sig / p_noise)
        assert abs(measured_db) < 0.1

    def test_requested_snr_accurate(self):
        spk = synth_speaker(3, 0)
        rng = np.random.default_rng(2)
        clean = synth_utterance(spk, "filler", 1.5, NO_NOISE, rng)
        for snr in (5.0, 12.0, 20.0):
            noise = from_float(rng.standard_normal(clean.audio.num_samples))
            mixed = mix_noise(clean.audio, noise, snr)
            added = mixed.samples - clean.audio.samples
            measured = 10 * np.log10(
                np.mean(clean.audio.samples**2) / np.mean(added**2)
            )
            assert abs(measured - snr) < 0.1

    def test_no_noise_sentinel_is_identity(self):
        spk = synth_speaker(3, 1)
        rng = np.random.default_rng(3)
        utt = synth_utterance(spk, "filler", 1.0, NO_NOISE, rng)
        noise = from_float(rng.standard_normal(utt.audio.num_samples))
        same = mix_noise(utt.audio, noise, NO_NOISE)
        assert same is utt.audio

    def test_zero_power_noise_rejected(self):
        spk = synth_speaker(3, 2)
        utt = synth_utterance(spk, "filler", 1.0, NO_NOISE,
                              np.random.default_rng(4))
        with pytest.raises(ValueError, match="noise"):
            mix_noise(utt.audio, from_float(np.zeros(utt.audio.num_samples)), 10.0)

    def test_alignments_match_energy_peaks(self):
        # each unit's band energy must peak within +-1 frame of where the
        # manifest says the unit lives
        spk = synth_speaker(5, 0)
        utt = synth_utterance(spk, "keyword", 2.0, NO_NOISE,
                              np.random.default_rng(5))
        feats = dsp.extract_features(utt.audio)
        energy = feats.sum(axis=1)
        n_frames = feats.shape[0]
        for end_ms in utt.subword_end_ms:
            start_frame = int((end_ms - 200.0) / 10.0)
            end_frame = min(int(end_ms / 10.0), n_frames)
            inside = energy[max(start_frame, 0):end_frame].mean()
            outside = energy[: max(start_frame - 20, 1)].mean()
            assert inside > outside + 1.0


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    config = TrialsetConfig.from_totals(
        6, 10, num_target_speakers=3, num_imposter_speakers=3
    )
    trials_path, manifest_path = build_trialset(config, seed=11, out_dir=out)
    return out, trials_path, json.loads(manifest_path.read_text())


class TestTrialset:

    def test_row_counts_match_config(self, built):
        _, _, manifest = built
        assert manifest["config"]["row_counts"] == {
            "1": 2, "2": 2, "3": 2, "4": 2, "5": 2, "6": 2, "7": 2, "8": 2
        }
        tests = [u for u in manifest["utterances"] if u["role"] == "test"]
        assert len(tests) == 16

    def test_labels_follow_taxonomy(self, built):
        _, trials_path, _ = built
        labels = [line.split(" ")[4] for line in
                  trials_path.read_text().splitlines()]
        assert labels.count("positive") == 6
        assert labels.count("negative") == 10

    def test_enrollment_is_three_clean_keywords(self, built):
        _, _, manifest = built
        enrolls = [u for u in manifest["utterances"] if u["role"] == "enroll"]
        assert len(enrolls) == 9  # 3 speakers x 3 utterances
        assert all(u["content"] == "keyword" for u in enrolls)
        assert all(u["snr_db"] is None for u in enrolls)

    def test_wavs_parse_and_match_duration(self, built):
        out, _, manifest = built
        utt = manifest["utterances"][0]
        sig = read_wav(out / utt["path"])
        assert abs(sig.duration_seconds - utt["duration_s"]) < 1e-3

    def test_generation_is_deterministic(self, tmp_path):
        config = TrialsetConfig.from_totals(2, 3, num_target_speakers=2,
                                            num_imposter_speakers=2)
        t1, m1 = build_trialset(config, seed=5, out_dir=tmp_path / "a")
        t2, m2 = build_trialset(config, seed=5, out_dir=tmp_path / "b")
        assert t1.read_text() == t2.read_text()
        doc1 = json.loads(m1.read_text())
        doc2 = json.loads(m2.read_text())
        assert doc1["utterances"] == doc2["utterances"]
        utt = doc1["utterances"][0]["path"]
        assert (tmp_path / "a" / utt).read_bytes() == (
            tmp_path / "b" / utt
        ).read_bytes()


def test_training_corpus(tmp_path):
    manifest_path = build_training_corpus(5, seed=3, out_dir=tmp_path,
                                          keyword_utts=2, filler_utts=1)
    doc = json.loads(manifest_path.read_text())
    utts = doc["utterances"]
    assert len(utts) == 15
    keywords = [u for u in utts if u["content"] == "keyword"]
    assert len(keywords) == 10
    assert all(len(u["subword_end_ms"]) == 3 for u in keywords)
    assert all(
        a < b for u in keywords
        for a, b in zip(u["subword_end_ms"], u["subword_end_ms"][1:])
    )
    subsets = {u["subset"] for u in utts}
    assert subsets == {"open", "target"}


def test_training_corpus_confusables(tmp_path):
    manifest_path = build_training_corpus(
        4, seed=7, out_dir=tmp_path,
        keyword_utts=2, filler_utts=1, confusable_utts=2, open_fraction=0.75,
    )
    doc = json.loads(manifest_path.read_text())
    utts = doc["utterances"]
    assert len(utts) == 20
    confusables = [u for u in utts if u["content"] == "confusable"]
    assert len(confusables) == 8
    assert all(u["subword_end_ms"] is None for u in confusables)
    assert doc["config"]["confusable_utts"] == 2
    open_speakers = {u["speaker_id"] for u in utts if u["subset"] == "open"}
    target_speakers = {u["speaker_id"] for u in utts if u["subset"] == "target"}
    assert len(open_speakers) == 3 and len(target_speakers) == 1


def test_unit_base_frequencies_are_canonical_order():
    assert list(UNIT_BASE_FREQS) == sorted(UNIT_BASE_FREQS)
    spk = synth_speaker(0, 0)
    unit = synth_unit(spk, UNIT_BASE_FREQS[0])
    assert len(unit) == 3200
    assert np.max(np.abs(unit)) <= 0.5 + 1e-9
