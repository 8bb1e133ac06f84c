"""Speaker enrollment, cosine scoring, and threshold calibration.

Scores are cosine similarities (higher = more similar); since embeddings
are unit-normalized everywhere, scoring is a plain dot product.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .metrics import compute_eer, compute_mindcf

MAX_ENROLLMENTS = 3
NORM_TOLERANCE = 1e-3


@dataclass(frozen=True)
class SpeakerProfile:
    speaker_id: str
    embedding: np.ndarray  # unit norm
    num_enroll: int


@dataclass(frozen=True)
class ThresholdSet:
    thr_eer: float
    thr_mindcf: float

    @property
    def thr_mean(self) -> float:
        return (self.thr_eer + self.thr_mindcf) / 2.0

    def operating_threshold(self, method: str) -> float:
        """V1 uses the EER threshold, V2 the EER/minDCF mean."""
        if method == "v1":
            return self.thr_eer
        if method == "v2":
            return self.thr_mean
        raise ValueError(f"unknown threshold method {method!r} (use 'v1' or 'v2')")


def _check_unit(v: np.ndarray, what: str) -> None:
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > NORM_TOLERANCE:
        raise ValueError(f"{what} is not unit-normalized (norm {norm:.6f})")


def enroll(speaker_id: str, embeddings) -> SpeakerProfile:
    """Average 1-3 unit embeddings and re-normalize into a profile."""
    embeddings = [np.asarray(e, dtype=np.float64) for e in embeddings]
    if not 1 <= len(embeddings) <= MAX_ENROLLMENTS:
        raise ValueError(
            f"enrollment needs 1-{MAX_ENROLLMENTS} embeddings, got {len(embeddings)}"
        )
    for e in embeddings:
        _check_unit(e, "enrollment embedding")
    mean = np.mean(embeddings, axis=0)
    norm = np.linalg.norm(mean)
    if norm < 1e-8:
        raise ValueError("enrollment embeddings cancel out (zero-norm mean)")
    return SpeakerProfile(
        speaker_id=speaker_id, embedding=mean / norm, num_enroll=len(embeddings)
    )


def score(profile: SpeakerProfile, test_embedding: np.ndarray) -> float:
    """Cosine similarity between a profile and a test embedding."""
    test_embedding = np.asarray(test_embedding, dtype=np.float64)
    _check_unit(profile.embedding, "profile embedding")
    _check_unit(test_embedding, "test embedding")
    return float(np.clip(profile.embedding @ test_embedding, -1.0, 1.0))


def calibrate(dev_positive_scores, dev_negative_scores,
              p_target: float = 0.01, c_miss: float = 1.0,
              c_fa: float = 1.0) -> ThresholdSet:
    """Derive the V1/V2 operating thresholds from development scores."""
    _, thr_eer = compute_eer(dev_positive_scores, dev_negative_scores)
    _, thr_mindcf = compute_mindcf(
        dev_positive_scores, dev_negative_scores,
        p_target=p_target, c_miss=c_miss, c_fa=c_fa,
    )
    return ThresholdSet(thr_eer=thr_eer, thr_mindcf=thr_mindcf)


def save_profile(profile_dir: str | Path, profile: SpeakerProfile) -> Path:
    """Write profiles/<speaker_id>.json; returns the written path."""
    profile_dir = Path(profile_dir)
    profile_dir.mkdir(parents=True, exist_ok=True)
    path = profile_dir / f"{profile.speaker_id}.json"
    path.write_text(
        json.dumps(
            {
                "speaker_id": profile.speaker_id,
                "embedding": [float(x) for x in profile.embedding],
                "num_enroll": profile.num_enroll,
                "engine_version": __version__,
            },
            indent=2,
        )
    )
    return path


def load_profile(path: str | Path) -> SpeakerProfile:
    doc = json.loads(Path(path).read_text())
    embedding = np.asarray(doc["embedding"], dtype=np.float64)
    _check_unit(embedding, f"profile {path}")
    return SpeakerProfile(
        speaker_id=doc["speaker_id"],
        embedding=embedding,
        num_enroll=int(doc["num_enroll"]),
    )


def save_thresholds(path: str | Path, thresholds: ThresholdSet) -> None:
    Path(path).write_text(
        json.dumps(
            {
                "thr_eer": thresholds.thr_eer,
                "thr_mindcf": thresholds.thr_mindcf,
                "thr_mean": thresholds.thr_mean,
            },
            indent=2,
        )
    )


def load_thresholds(path: str | Path) -> ThresholdSet:
    doc = json.loads(Path(path).read_text())
    ts = ThresholdSet(thr_eer=float(doc["thr_eer"]),
                      thr_mindcf=float(doc["thr_mindcf"]))
    if "thr_mean" in doc and abs(float(doc["thr_mean"]) - ts.thr_mean) > 1e-9:
        raise ValueError(f"{path}: thr_mean is not the mean of thr_eer and thr_mindcf")
    return ts
