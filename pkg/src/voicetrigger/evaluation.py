"""Trial parsing, end-to-end evaluation, and the challenge report.

Trial file format: one trial per non-empty line, five space-separated
fields `enroll1 enroll2 enroll3 test label`, label in {positive,
negative}. Paths are resolved relative to the trial file's directory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from . import dsp
from .audio import read_wav
from .metrics import ALPHA, compute_eer, compute_mindcf, compute_score, fr_at_fa_per_hour
from .pipeline import Engine, TriggerDecision, decision_line, measure_rtf
from .verifier import SpeakerProfile, ThresholdSet, enroll

LABELS = ("positive", "negative")
DEFAULT_RESCORE_DURATION_S = 3.8


class TrialParseError(ValueError):
    """Malformed trial file; message cites the offending line number."""


@dataclass(frozen=True)
class Trial:
    enroll_paths: tuple[str, str, str]
    test_path: str
    label: str
    line_number: int


@dataclass(frozen=True)
class EvalReport:
    num_pos: int
    num_neg: int
    miss_rate: float
    fa_rate: float
    score_wakeup: float
    eer: float
    min_dcf: float
    fr_at_1fa_per_hour: float
    rtf: float
    hardware: str

    def to_dict(self) -> dict:
        def num(x):
            return None if math.isnan(x) else round(x, 6)

        return {
            "num_pos": self.num_pos,
            "num_neg": self.num_neg,
            "miss_rate": round(self.miss_rate, 6),
            "fa_rate": round(self.fa_rate, 6),
            "score_wakeup": round(self.score_wakeup, 6),
            "eer": num(self.eer),
            "min_dcf": num(self.min_dcf),
            "fr_at_1fa_per_hour": round(self.fr_at_1fa_per_hour, 6),
            "rtf": round(self.rtf, 6),
            "hardware": self.hardware,
        }


def parse_trials(path: str | Path) -> list[Trial]:
    trials = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split(" ")
        if len(fields) != 5:
            raise TrialParseError(
                f"{path}:{lineno}: expected 5 fields, got {len(fields)}"
            )
        *enrolls, test, label = fields
        if label not in LABELS:
            raise TrialParseError(
                f"{path}:{lineno}: bad label {label!r} (expected positive/negative)"
            )
        if any(not f for f in fields):
            raise TrialParseError(f"{path}:{lineno}: empty field")
        trials.append(
            Trial(
                enroll_paths=tuple(enrolls),
                test_path=test,
                label=label,
                line_number=lineno,
            )
        )
    return trials


def keyword_presence(trials: list[Trial], base_dir: str | Path = ".") -> list[bool] | None:
    """Per-trial flag: does the test utterance contain the keyword?

    Looked up from the trial set's manifest.json (content field of each
    utterance). Returns None when the manifest is missing or does not cover
    every test utterance; callers then fall back to treating every negative
    trial as keyword-free for the KWS false-alarm pool.
    """
    path = Path(base_dir) / "manifest.json"
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError):
        return None
    content: dict[str, str] = {}
    for utt in doc.get("utterances", []):
        if isinstance(utt, dict) and "path" in utt and "content" in utt:
            content[utt["path"]] = utt["content"]
    flags = []
    for trial in trials:
        kind = content.get(trial.test_path)
        if kind is None:
            return None
        flags.append(kind == "keyword")
    return flags


def _build_report(labels, decisions, durations, hardware=None,
                  keyword_present=None) -> EvalReport:
    num_pos = sum(1 for lb in labels if lb == "positive")
    num_neg = len(labels) - num_pos
    if num_pos == 0 or num_neg == 0:
        raise ValueError("need at least one positive and one negative trial")
    missed = sum(
        1 for lb, d in zip(labels, decisions) if lb == "positive" and not d.accepted
    )
    false_accept = sum(
        1 for lb, d in zip(labels, decisions) if lb == "negative" and d.accepted
    )
    miss = missed / num_pos
    fa = false_accept / num_neg

    sv_pos = [
        d.sv_score for lb, d in zip(labels, decisions)
        if lb == "positive" and d.kws_triggered and d.sv_score is not None
    ]
    sv_neg = [
        d.sv_score for lb, d in zip(labels, decisions)
        if lb == "negative" and d.kws_triggered and d.sv_score is not None
    ]
    if sv_pos and sv_neg:
        eer, _ = compute_eer(sv_pos, sv_neg)
        min_dcf, _ = compute_mindcf(sv_pos, sv_neg)
    else:
        eer, min_dcf = float("nan"), float("nan")

    kws_pos = [d.kws_confidence for lb, d in zip(labels, decisions) if lb == "positive"]
    # A KWS-level false alarm is a trigger on audio without the keyword.
    # Negative trials where an imposter speaks the keyword are true keyword
    # events for the spotter (rejecting them is the verifier's job), so they
    # are excluded from the false-alarm pool when the trial set says which
    # utterances carry the keyword.
    if keyword_present is None:
        keyword_present = [False] * len(labels)
    kws_neg = [
        d.kws_confidence
        for lb, d, kw in zip(labels, decisions, keyword_present)
        if lb == "negative" and not kw
    ]
    neg_hours = (
        sum(
            dur
            for lb, dur, kw in zip(labels, durations, keyword_present)
            if lb == "negative" and not kw
        )
        / 3600.0
    )
    if not kws_neg:
        kws_neg = [
            d.kws_confidence for lb, d in zip(labels, decisions) if lb == "negative"
        ]
        neg_hours = (
            sum(dur for lb, dur in zip(labels, durations) if lb == "negative") / 3600.0
        )
    fr, _ = fr_at_fa_per_hour(kws_pos, kws_neg, neg_hours)

    rtf_report = measure_rtf(decisions, durations, hardware=hardware)
    return EvalReport(
        num_pos=num_pos,
        num_neg=num_neg,
        miss_rate=miss,
        fa_rate=fa,
        score_wakeup=compute_score(miss, fa, ALPHA),
        eer=eer,
        min_dcf=min_dcf,
        fr_at_1fa_per_hour=fr,
        rtf=rtf_report.factor,
        hardware=rtf_report.hardware,
    )


def evaluate(
    trials: list[Trial],
    engine: Engine,
    kws_threshold: float,
    sv_threshold: float,
    base_dir: str | Path = ".",
) -> tuple[EvalReport, list[TriggerDecision]]:
    """Run the full pipeline over all trials and aggregate the metrics.

    Enrollment embeddings are cached per unique enrollment triple and are
    never counted in the RTF timing.
    """
    if not trials:
        raise ValueError("empty trial list")
    base_dir = Path(base_dir)
    profiles: dict[tuple[str, ...], SpeakerProfile] = {}
    labels, decisions, durations = [], [], []
    for trial in trials:
        key = trial.enroll_paths
        if key not in profiles:
            embeddings = []
            for p in trial.enroll_paths:
                try:
                    sig = read_wav(base_dir / p)
                except FileNotFoundError:
                    raise FileNotFoundError(
                        f"trial line {trial.line_number}: missing audio {p}"
                    ) from None
                embeddings.append(
                    engine.enrollment_embedding(dsp.extract_features(sig, 0))
                )
            profiles[key] = enroll(f"trial{trial.line_number}", embeddings)
        try:
            test_audio = read_wav(base_dir / trial.test_path)
        except FileNotFoundError:
            raise FileNotFoundError(
                f"trial line {trial.line_number}: missing audio {trial.test_path}"
            ) from None
        decisions.append(
            engine.process_utterance(
                test_audio, profiles[key], kws_threshold, sv_threshold
            )
        )
        labels.append(trial.label)
        durations.append(test_audio.duration_seconds)
    report = _build_report(
        labels, decisions, durations,
        keyword_present=keyword_presence(trials, base_dir),
    )
    return report, decisions


def write_report(path: str | Path, report: EvalReport) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2) + "\n")


def write_trial_tsv(path: str | Path, decisions) -> None:
    lines = [decision_line(i, d) for i, d in enumerate(decisions)]
    Path(path).write_text("\n".join(lines) + "\n")


def rescore_tsv(path: str | Path, kws_threshold: float, sv_threshold: float,
                assumed_duration_s: float = DEFAULT_RESCORE_DURATION_S):
    """Re-score a (label, kws_confidence, sv_score) TSV without audio.

    Used to re-derive miss/fa/score under new thresholds from stored
    scores. RTF and FR@1FA/h need audio durations, so each trial assumes
    a fixed nominal duration.
    """
    labels, decisions, durations = [], [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise TrialParseError(f"{path}:{lineno}: expected 3 tab fields")
        label, kws_conf, sv_score = fields
        if label not in LABELS:
            raise TrialParseError(f"{path}:{lineno}: bad label {label!r}")
        conf = float(kws_conf)
        triggered = conf > kws_threshold
        sv = None if (sv_score == "NA" or not triggered) else float(sv_score)
        decisions.append(
            TriggerDecision(
                kws_confidence=conf,
                kws_triggered=triggered,
                sv_score=sv,
                accepted=bool(triggered and sv is not None and sv > sv_threshold),
                segment=None,
                processing_seconds=0.0,
            )
        )
        labels.append(label)
        durations.append(assumed_duration_s)
    if not labels:
        raise ValueError(f"{path}: no trials to rescore")
    return _build_report(labels, decisions, durations)


def sv_threshold_from(thresholds: ThresholdSet, method: str) -> float:
    return thresholds.operating_threshold(method)
