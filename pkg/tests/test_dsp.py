import numpy as np
import pytest

from voicetrigger import dsp
from voicetrigger.audio import from_float
from voicetrigger.dsp import (
    EmptyFeatureError,
    TooShortError,
    extract_features,
    frame_signal,
    hz_to_mel,
    make_mel_filterbank,
    power_spectrum,
    read_feature_dump,
    segment_windows,
    write_feature_dump,
)


def _tone(freq, seconds=1.0, amp=0.3):
    t = np.arange(int(seconds * 16000)) / 16000.0
    return from_float(amp * np.sin(2 * np.pi * freq * t))


class TestFraming:
    def test_one_second_gives_98_frames(self):
        assert frame_signal(_tone(440)).shape == (98, 400)

    def test_exactly_one_window(self):
        sig = from_float(np.ones(400) * 0.1)
        assert frame_signal(sig).shape == (1, 400)

    def test_below_one_window_errors(self):
        with pytest.raises(EmptyFeatureError):
            frame_signal(from_float(np.ones(399) * 0.1))

    def test_frame_count_matches_closed_form(self):
        rng = np.random.default_rng(7)
        for n in rng.integers(400, 50000, size=1000):
            sig = from_float(np.zeros(int(n)) + 0.01)
            expected = 1 + (int(n) - 400) // 160
            assert frame_signal(sig).shape[0] == expected

    def test_hann_window_applied(self):
        sig = from_float(np.ones(400) * 0.5)
        frame = frame_signal(sig)[0]
        np.testing.assert_allclose(frame, 0.5 * dsp.hann_window())


class TestPowerSpectrum:
    def test_zero_frame_gives_zero_bins(self):
        assert np.all(power_spectrum(np.zeros(400)) == 0.0)

    def test_tone_peaks_at_expected_bin(self):
        frame = frame_signal(_tone(1000))[5]
        assert np.argmax(power_spectrum(frame)) == round(1000 * 512 / 16000)

    def test_parseval(self):
        rng = np.random.default_rng(3)
        frame = rng.standard_normal(400)
        spec = np.fft.rfft(frame, n=512)
        full_energy = (
            np.abs(spec[0]) ** 2
            + 2 * np.sum(np.abs(spec[1:-1]) ** 2)
            + np.abs(spec[-1]) ** 2
        ) / 512.0
        time_energy = np.sum(frame**2)
        assert abs(full_energy - time_energy) / time_energy < 1e-6
        # power_spectrum returns the same |.|^2 bins used above
        np.testing.assert_allclose(power_spectrum(frame), np.abs(spec) ** 2)


class TestMelFilterbank:
    def test_htk_mel_reference_points(self):
        assert hz_to_mel(0) == 0.0
        assert abs(hz_to_mel(700) - 2595 * np.log10(2)) < 1e-9

    def test_shape_and_nonnegative(self):
        fb = make_mel_filterbank()
        assert fb.weights.shape == (80, 257)
        assert np.all(fb.weights >= 0.0)
        assert np.all(fb.weights <= 1.0)

    def test_centers_strictly_increasing(self):
        fb = make_mel_filterbank()
        assert np.all(np.diff(fb.center_freqs) > 0)

    def test_interior_bin_coverage(self):
        fb = make_mel_filterbank()
        bin_freqs = np.arange(257) * (16000 / 512)
        interior = (bin_freqs > fb.center_freqs[0]) & (
            bin_freqs < fb.center_freqs[-1]
        )
        sums = fb.weights.sum(axis=0)
        assert np.all(sums[interior] > 0.0)
        assert np.all(sums[interior] <= 2.0)

    def test_invalid_range_rejected(self):
        with pytest.raises(ValueError):
            make_mel_filterbank(fmin=5000, fmax=100)
        with pytest.raises(ValueError):
            make_mel_filterbank(fmax=9000)


class TestExtractFeatures:
    def test_silence_hits_log_floor(self):
        sig = from_float(np.zeros(16000))
        feats = extract_features(sig)
        assert np.all(feats == np.log(1e-10))

    def test_one_second_shape(self):
        assert extract_features(_tone(500)).shape == (98, 80)

    def test_scaling_shifts_by_log(self):
        sig = _tone(1000, amp=0.2)
        doubled = from_float(sig.samples[:, 0] * 2.0)
        f1 = extract_features(sig)
        f2 = extract_features(doubled)
        above = f1 > np.log(1e-10) + 1.0  # stay clear of the floor
        np.testing.assert_allclose(
            (f2 - f1)[above], 2.0 * np.log(2.0), atol=1e-9
        )

    def test_deterministic(self):
        sig = _tone(432)
        a = extract_features(sig)
        b = extract_features(sig)
        assert np.array_equal(a, b)


class TestSegmentWindows:
    def test_exact_length_gives_one_window(self):
        feats = np.zeros((40, 80))
        assert segment_windows(feats).shape == (1, 40, 80)

    def test_98_frames_give_59_windows(self):
        assert segment_windows(np.zeros((98, 80))).shape == (59, 40, 80)

    def test_too_short_errors(self):
        with pytest.raises(TooShortError):
            segment_windows(np.zeros((39, 80)))

    def test_window_count_matches_closed_form(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            t = int(rng.integers(40, 500))
            hop = int(rng.integers(1, 10))
            count = segment_windows(np.zeros((t, 80)), hop=hop).shape[0]
            assert count == 1 + (t - 40) // hop

    def test_window_content(self):
        feats = np.arange(50 * 80, dtype=float).reshape(50, 80)
        win = segment_windows(feats)
        np.testing.assert_array_equal(win[3], feats[3:43])


def test_feature_dump_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    feats = rng.standard_normal((17, 80))
    path = tmp_path / "f.bin"
    write_feature_dump(path, feats)
    back = read_feature_dump(path)
    np.testing.assert_allclose(back, feats, atol=1e-6)
    assert path.stat().st_size == 8 + 4 * 17 * 80
