"""Deterministic synthetic corpus: speakers, utterances, noise, trial files.

Stand-in for a real wake-word corpus. Speaker identity is a spectral
envelope (tilt + three resonances tied to a per-speaker f0); content is a
sequence of harmonic-complex units at fixed base frequencies. The keyword
is 3 consecutive 200 ms units in canonical order placed at the utterance
end; a "confusable" uses the same units in permuted order. Ground-truth
subword end times come for free from construction, which replaces
forced-alignment labeling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import SAMPLE_RATE, AudioSignal, from_float, write_wav

UNIT_SECONDS = 0.2
UNIT_BASE_FREQS = (180.0, 260.0, 350.0)  # canonical subword order
CONFUSABLE_ORDER = (2, 0, 1)
KEYWORD_SECONDS = UNIT_SECONDS * len(UNIT_BASE_FREQS)
MIN_KEYWORD_UTTERANCE = 1.2
DEFAULT_DURATION = 3.8  # mean utterance length, seconds
F0_RANGE = (90.0, 280.0)
NO_NOISE = float("inf")  # snr sentinel: skip mixing entirely

# Table-style trial taxonomy: (has keyword, keyword by target,
# non-target prefix speech, target prefix speech, label)
TRIAL_ROWS = {
    1: (True, True, False, False, "positive"),
    2: (True, True, False, True, "positive"),
    3: (True, True, True, False, "positive"),
    4: (True, False, False, False, "negative"),
    5: (True, False, False, True, "negative"),
    6: (True, False, True, False, "negative"),
    7: (False, None, None, True, "negative"),
    8: (False, None, None, False, "negative"),
}
POSITIVE_ROWS = (1, 2, 3)
NEGATIVE_ROWS = (4, 5, 6, 7, 8)


@dataclass(frozen=True)
class SyntheticSpeaker:
    speaker_id: str
    f0: float
    tilt: float
    formant_freqs: tuple[float, float, float]
    formant_gains: tuple[float, float, float]


def synth_speaker(corpus_seed: int, index: int) -> SyntheticSpeaker:
    """Deterministic speaker signature from (corpus_seed, index)."""
    rng = np.random.default_rng([corpus_seed, index])
    f0 = rng.uniform(*F0_RANGE)
    tilt = rng.uniform(0.4, 1.4)
    ratios = (rng.uniform(4.0, 7.0), rng.uniform(9.0, 14.0), rng.uniform(16.0, 24.0))
    gains = tuple(rng.uniform(1.0, 4.0, size=3))
    return SyntheticSpeaker(
        speaker_id=f"spk{index:05d}",
        f0=f0,
        tilt=tilt,
        formant_freqs=tuple(f0 * r for r in ratios),
        formant_gains=gains,
    )


def speaker_envelope(speaker: SyntheticSpeaker, freqs: np.ndarray) -> np.ndarray:
    """Spectral envelope gain at the given frequencies (Hz)."""
    f = np.maximum(np.asarray(freqs, dtype=np.float64), 1.0)
    env = (f / 1000.0) ** (-speaker.tilt)
    for center, gain in zip(speaker.formant_freqs, speaker.formant_gains):
        bw = 0.25 * center
        env = env * (1.0 + gain * np.exp(-((f - center) ** 2) / (2.0 * bw**2)))
    return env


@dataclass(frozen=True)
class SynthUtterance:
    audio: AudioSignal
    speaker_id: str
    content: str  # keyword | confusable | filler | mixed
    subword_end_ms: tuple[float, float, float] | None
    snr_db: float


def _ramped(samples: np.ndarray, ramp_s: float = 0.01) -> np.ndarray:
    n = min(int(ramp_s * SAMPLE_RATE), len(samples) // 2)
    if n:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(n) / n)
        samples[:n] *= ramp
        samples[-n:] *= ramp[::-1]
    return samples


def synth_unit(speaker: SyntheticSpeaker, base_freq: float,
               duration_s: float = UNIT_SECONDS) -> np.ndarray:
    """One subword: a harmonic complex colored by the speaker envelope."""
    n = int(round(duration_s * SAMPLE_RATE))
    t = np.arange(n) / SAMPLE_RATE
    harmonics = np.arange(1, int(7600.0 / base_freq) + 1)
    amps = speaker_envelope(speaker, harmonics * base_freq) / harmonics
    # Slow vibrato at a speaker-dependent rate keeps units from being
    # perfectly stationary tones.
    vib = 1.0 + 0.01 * np.sin(2.0 * np.pi * (speaker.f0 / 40.0) * t)
    phase = 2.0 * np.pi * base_freq * np.cumsum(vib) / SAMPLE_RATE
    wave = (amps[:, None] * np.sin(harmonics[:, None] * phase[None, :])).sum(axis=0)
    wave = wave / (np.max(np.abs(wave)) + 1e-12) * 0.5
    return _ramped(wave)


def synth_babble(speaker: SyntheticSpeaker, duration_s: float,
                 rng: np.random.Generator) -> np.ndarray:
    """Text-independent speech stand-in: envelope-colored modulated noise."""
    n = int(round(duration_s * SAMPLE_RATE))
    noise = rng.standard_normal(n)
    spec = np.fft.rfft(noise)
    freqs = np.fft.rfftfreq(n, d=1.0 / SAMPLE_RATE)
    spec *= speaker_envelope(speaker, freqs)
    colored = np.fft.irfft(spec, n=n)
    rate = rng.uniform(2.0, 6.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    t = np.arange(n) / SAMPLE_RATE
    modulation = 0.15 + 0.85 * (0.5 + 0.5 * np.sin(2.0 * np.pi * rate * t + phase))
    out = colored * modulation
    out = out / (np.max(np.abs(out)) + 1e-12) * 0.35
    return _ramped(out)


def _signal_power(x: np.ndarray) -> float:
    return float(np.mean(x**2))


def mix_noise(signal: AudioSignal, noise: AudioSignal, snr_db: float) -> AudioSignal:
    """Add noise scaled to the requested SNR; output clipped to [-1, 1)."""
    if snr_db == NO_NOISE:
        return signal
    sig = signal.samples
    nz = noise.samples
    if nz.shape[0] < sig.shape[0]:
        raise ValueError("noise must be at least as long as the signal")
    nz = nz[: sig.shape[0], : sig.shape[1]]
    p_sig = _signal_power(sig)
    p_nz = _signal_power(nz)
    if p_sig <= 0.0:
        raise ValueError("zero-power signal cannot be mixed at a target SNR")
    if p_nz <= 0.0:
        raise ValueError("zero-power noise cannot be scaled to a target SNR")
    scale = np.sqrt(p_sig / (p_nz * 10.0 ** (snr_db / 10.0)))
    mixed = np.clip(sig + scale * nz, -1.0, 1.0 - 1.0 / 32768.0)
    return AudioSignal(samples=mixed, sample_rate=signal.sample_rate)


def synth_utterance(
    speaker: SyntheticSpeaker,
    content: str,
    duration_s: float,
    snr_db: float,
    rng: np.random.Generator,
    prefix_speaker: SyntheticSpeaker | None = None,
) -> SynthUtterance:
    """Build one utterance; keyword/confusable units always sit at the end.

    `prefix_speaker` adds text-independent babble before the unit block
    (rows 2/3/5/6 of the trial taxonomy). content "filler" fills the whole
    utterance with babble by `speaker` instead.
    """
    if content in ("keyword", "confusable") and duration_s < MIN_KEYWORD_UTTERANCE:
        raise ValueError(
            f"keyword utterances need at least {MIN_KEYWORD_UTTERANCE} s, "
            f"got {duration_s}"
        )
    n = int(round(duration_s * SAMPLE_RATE))
    samples = rng.standard_normal(n) * 1e-4  # low ambience so power is never zero
    subword_end_ms = None

    if content in ("keyword", "confusable"):
        order = range(len(UNIT_BASE_FREQS)) if content == "keyword" else CONFUSABLE_ORDER
        units = np.concatenate(
            [synth_unit(speaker, UNIT_BASE_FREQS[i]) for i in order]
        )
        samples[n - len(units):] += units
        if content == "keyword":
            end_ms = duration_s * 1000.0
            subword_end_ms = tuple(
                end_ms - (len(UNIT_BASE_FREQS) - 1 - i) * UNIT_SECONDS * 1000.0
                for i in range(len(UNIT_BASE_FREQS))
            )
        space = n - len(units) - int(0.2 * SAMPLE_RATE)
    elif content == "filler":
        babble = synth_babble(speaker, duration_s, rng)
        samples += babble
        space = 0
    else:
        raise ValueError(f"unknown content kind {content!r}")

    if prefix_speaker is not None and content != "filler":
        avail = space / SAMPLE_RATE
        if avail > 0.4:
            pre_dur = rng.uniform(0.4, min(avail, 2.5))
            babble = synth_babble(prefix_speaker, pre_dur, rng)
            start = rng.integers(0, space - len(babble) + 1) if space > len(babble) else 0
            samples[start : start + len(babble)] += babble

    clean = from_float(np.clip(samples, -1.0, 1.0 - 1.0 / 32768.0))
    if snr_db != NO_NOISE:
        noise = from_float(rng.standard_normal(n))
        clean = mix_noise(clean, noise, snr_db)
    return SynthUtterance(
        audio=clean,
        speaker_id=speaker.speaker_id,
        content=content,
        subword_end_ms=subword_end_ms,
        snr_db=snr_db,
    )


@dataclass
class TrialsetConfig:
    """Counts and knobs for one generated trial set."""

    num_target_speakers: int = 10
    num_imposter_speakers: int = 10
    row_counts: dict[int, int] = field(default_factory=dict)
    duration_mean_s: float = DEFAULT_DURATION
    duration_jitter_s: float = 0.8
    snr_range_db: tuple[float, float] = (8.0, 20.0)

    @classmethod
    def from_totals(cls, num_positive: int, num_negative: int, **kwargs):
        """Spread totals over the taxonomy rows (1-3 positive, 4-8 negative)."""
        counts: dict[int, int] = {}
        for i, row in enumerate(POSITIVE_ROWS):
            counts[row] = num_positive // 3 + (1 if i < num_positive % 3 else 0)
        for i, row in enumerate(NEGATIVE_ROWS):
            counts[row] = num_negative // 5 + (1 if i < num_negative % 5 else 0)
        return cls(row_counts=counts, **kwargs)


# Speaker index namespaces keep trial-set targets, imposters, and training
# speakers deterministic yet disjoint under one corpus seed.
TARGET_BASE = 10000
IMPOSTER_BASE = 20000


def _utt_record(utt_id: str, rel_path: str, utt: SynthUtterance, role: str,
                row: int | None = None) -> dict:
    return {
        "utt_id": utt_id,
        "path": rel_path,
        "speaker_id": utt.speaker_id,
        "content": utt.content,
        "subword_end_ms": list(utt.subword_end_ms) if utt.subword_end_ms else None,
        "snr_db": None if utt.snr_db == NO_NOISE else utt.snr_db,
        "duration_s": utt.audio.duration_seconds,
        "role": role,
        "trial_row": row,
    }


def _write_utt(out_dir: Path, utt_id: str, utt: SynthUtterance, role: str,
               row: int | None, records: list) -> str:
    rel = f"{utt.speaker_id}/{utt_id}.wav"
    path = out_dir / rel
    path.parent.mkdir(parents=True, exist_ok=True)
    write_wav(path, utt.audio)
    records.append(_utt_record(utt_id, rel, utt, role, row))
    return rel


def build_trialset(config: TrialsetConfig, seed: int, out_dir: str | Path):
    """Generate WAV tree + manifest.json + trials.txt under out_dir.

    Returns (trials_path, manifest_path). Enrollment is 3 clean keyword
    utterances per target speaker; test utterances follow the taxonomy row
    counts with noise drawn from the configured SNR range.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records: list[dict] = []

    targets = [
        synth_speaker(seed, TARGET_BASE + i)
        for i in range(config.num_target_speakers)
    ]
    imposters = [
        synth_speaker(seed, IMPOSTER_BASE + i)
        for i in range(config.num_imposter_speakers)
    ]

    enroll_paths: dict[str, list[str]] = {}
    for i, spk in enumerate(targets):
        paths = []
        for j in range(3):
            rng = np.random.default_rng([seed, 1, i, j])
            utt = synth_utterance(
                spk, "keyword", config.duration_mean_s, NO_NOISE, rng
            )
            paths.append(
                _write_utt(out_dir, f"enroll_{spk.speaker_id}_{j}", utt,
                           "enroll", None, records)
            )
        enroll_paths[spk.speaker_id] = paths

    trial_lines: list[str] = []
    trial_index = 0
    for row in sorted(config.row_counts):
        has_kw, kw_by_target, nt_prefix, t_prefix, label = TRIAL_ROWS[row]
        for k in range(config.row_counts[row]):
            rng = np.random.default_rng([seed, 2, row, k])
            target = targets[trial_index % len(targets)]
            imposter = imposters[int(rng.integers(len(imposters)))]
            duration = config.duration_mean_s + float(
                rng.uniform(-config.duration_jitter_s, config.duration_jitter_s)
            )
            snr = float(rng.uniform(*config.snr_range_db))
            if has_kw:
                speaker = target if kw_by_target else imposter
                prefix = None
                if nt_prefix:
                    prefix = imposters[int(rng.integers(len(imposters)))]
                elif t_prefix:
                    prefix = target
                utt = synth_utterance(speaker, "keyword", duration, snr, rng,
                                      prefix_speaker=prefix)
            elif t_prefix:
                utt = synth_utterance(target, "filler", duration, snr, rng)
            else:
                # Row 8: no keyword, nothing from the target; alternate
                # between imposter filler and the confusable unit order.
                content = "confusable" if k % 2 == 0 else "filler"
                utt = synth_utterance(imposter, content, duration, snr, rng)
            rel = _write_utt(out_dir, f"test_{trial_index:06d}", utt, "test",
                             row, records)
            e1, e2, e3 = enroll_paths[target.speaker_id]
            trial_lines.append(f"{e1} {e2} {e3} {rel} {label}")
            trial_index += 1

    manifest = {
        "seed": seed,
        "config": {
            "num_target_speakers": config.num_target_speakers,
            "num_imposter_speakers": config.num_imposter_speakers,
            "row_counts": {str(r): c for r, c in config.row_counts.items()},
            "duration_mean_s": config.duration_mean_s,
            "snr_range_db": list(config.snr_range_db),
        },
        "speakers": [
            {
                "speaker_id": s.speaker_id,
                "f0": s.f0,
                "tilt": s.tilt,
                "formant_freqs": list(s.formant_freqs),
                "formant_gains": list(s.formant_gains),
            }
            for s in targets + imposters
        ],
        "utterances": records,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2))
    trials_path = out_dir / "trials.txt"
    trials_path.write_text("\n".join(trial_lines) + "\n")
    return trials_path, manifest_path


def build_training_corpus(
    num_speakers: int,
    seed: int,
    out_dir: str | Path,
    keyword_utts: int = 6,
    filler_utts: int = 4,
    confusable_utts: int = 0,
    open_fraction: float = 0.6,
    duration_s: float = DEFAULT_DURATION,
):
    """Clean training corpus with ground-truth alignments in the manifest.

    Speakers are split into an "open" subset (embedding pretraining) and a
    "target" subset (fine-tuning); noise augmentation is the trainer's job,
    so everything here is clean. `confusable_utts` adds permuted-order unit
    utterances per speaker as hard negatives for spotter training.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records: list[dict] = []
    num_open = int(round(num_speakers * open_fraction))
    speakers = [synth_speaker(seed, i) for i in range(num_speakers)]
    for i, spk in enumerate(speakers):
        subset = "open" if i < num_open else "target"
        for j in range(keyword_utts + filler_utts + confusable_utts):
            rng = np.random.default_rng([seed, 3, i, j])
            if j < keyword_utts:
                content = "keyword"
            elif j < keyword_utts + filler_utts:
                content = "filler"
            else:
                content = "confusable"
            utt = synth_utterance(spk, content, duration_s, NO_NOISE, rng)
            rel = _write_utt(out_dir, f"train_{spk.speaker_id}_{j}", utt,
                             "train", None, records)
            records[-1]["subset"] = subset
    manifest = {
        "seed": seed,
        "config": {
            "num_speakers": num_speakers,
            "keyword_utts": keyword_utts,
            "filler_utts": filler_utts,
            "confusable_utts": confusable_utts,
            "open_fraction": open_fraction,
        },
        "speakers": [
            {"speaker_id": s.speaker_id, "f0": s.f0, "tilt": s.tilt}
            for s in speakers
        ],
        "utterances": records,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2))
    return manifest_path
