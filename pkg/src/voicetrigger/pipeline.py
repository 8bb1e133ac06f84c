"""Two-stage trigger pipeline: KWS gate first, speaker check only on trigger.

The speaker stage never runs when the keyword stage does not trigger; the
stage counters make that observable so tests (and RTF accounting) can
prove it.
"""

from __future__ import annotations

import platform
import time
from dataclasses import dataclass, field

import numpy as np

from . import decoder, dsp, kws as kws_mod
from .audio import AudioSignal
from .embedder import EmbeddingNetwork, embed
from .kws import KwsNetwork
from .verifier import SpeakerProfile, enroll
from .weights import load_weights

SEGMENT_MARGIN = 20  # frames of context kept on each side of the alignment span


@dataclass(frozen=True)
class TriggerDecision:
    kws_confidence: float
    kws_triggered: bool
    sv_score: float | None
    accepted: bool
    segment: tuple[int, int] | None  # feature-frame range used for embedding
    processing_seconds: float


@dataclass(frozen=True)
class RtfReport:
    t_process: float
    t_total_test: float
    num_utterances: int
    hardware: str

    @property
    def factor(self) -> float:
        return self.t_process / self.t_total_test


def trim_silence(features: np.ndarray) -> np.ndarray:
    """Drop frames below the midpoint of the per-frame mean-energy range.

    For speech surrounded by ambience the per-frame mean log-mel energy is
    bimodal, and the midpoint between the loudest and quietest frame
    separates the modes. Recordings with no dynamic range come back
    unchanged, as does anything where the cut would leave nothing.
    """
    frame_energy = features.mean(axis=1)
    lo, hi = float(frame_energy.min()), float(frame_energy.max())
    if hi - lo < 1e-6:
        return features
    voiced = features[frame_energy >= (lo + hi) / 2.0]
    return voiced if len(voiced) else features


@dataclass
class Engine:
    kws_net: KwsNetwork
    emb_net: EmbeddingNetwork
    decision_window: int = decoder.DECISION_WINDOW
    decision_hop: int = decoder.DECISION_HOP
    refractory: int = decoder.REFRACTORY
    subwords: tuple[int, ...] = kws_mod.SUBWORD_CLASSES
    kws_runs: int = field(default=0, init=False)
    sv_runs: int = field(default=0, init=False)

    @classmethod
    def from_files(cls, kws_path, emb_path, **kwargs) -> "Engine":
        return cls(
            kws_net=KwsNetwork.from_bundle(load_weights(kws_path)),
            emb_net=EmbeddingNetwork.from_bundle(load_weights(emb_path)),
            **kwargs,
        )

    def _channel_scores(self, features: np.ndarray) -> list[decoder.ConfidenceScore]:
        posteriors = kws_mod.kws_posteriors(self.kws_net, features)
        return decoder.window_scores(
            posteriors, self.subwords,
            window=self.decision_window, hop=self.decision_hop,
        )

    def extract_embedding(self, features: np.ndarray) -> np.ndarray:
        self.sv_runs += 1
        return embed(self.emb_net, features)

    def enrollment_embedding(self, features: np.ndarray) -> np.ndarray:
        """Embedding of one enrollment utterance: voiced frames only.

        At test time the verifier embeds the detected keyword segment, which
        is speech throughout; enrollment audio carries long stretches of
        ambience around the keyword, so embedding it whole would compare
        mismatched inputs. Trimming by frame energy restores the match
        without touching the kws stage.
        """
        return self.extract_embedding(trim_silence(features))

    def enroll_speaker(self, speaker_id: str, signals) -> SpeakerProfile:
        """Enrollment from 1-3 clean utterances; not counted in RTF."""
        embeddings = [
            self.enrollment_embedding(dsp.extract_features(sig, channel=0))
            for sig in signals
        ]
        return enroll(speaker_id, embeddings)

    def process_utterance(
        self,
        audio: AudioSignal,
        profile: SpeakerProfile,
        kws_threshold: float,
        sv_threshold: float,
    ) -> TriggerDecision:
        """Run both stages on one utterance and return the gate decision.

        Multi-channel audio is scored per channel; the keyword confidence
        is the max across channels and the embedding comes from the argmax
        channel.
        """
        t0 = time.perf_counter()
        self.kws_runs += 1
        best_conf = 0.0
        best_channel_feats: np.ndarray | None = None
        best_score: decoder.ConfidenceScore | None = None
        for ch in range(audio.channels):
            features = dsp.extract_features(audio, channel=ch)
            scores = self._channel_scores(features)
            top = max(scores, key=lambda s: s.value)
            if best_score is None or top.value > best_conf:
                best_conf = top.value
                best_score = top
                best_channel_feats = features
        triggered = best_conf > kws_threshold
        sv_score: float | None = None
        accepted = False
        segment = None
        if triggered:
            t_first, t_last = best_score.alignment[0], best_score.alignment[-1]
            # Posterior row t covers feature frames [t, t + 40).
            lo = max(t_first - SEGMENT_MARGIN, 0)
            hi = min(
                t_last + dsp.WINDOW_FRAMES + SEGMENT_MARGIN,
                best_channel_feats.shape[0],
            )
            segment = (lo, hi)
            embedding = self.extract_embedding(best_channel_feats[lo:hi])
            sv_score = float(np.clip(profile.embedding @ embedding, -1.0, 1.0))
            accepted = sv_score > sv_threshold
        return TriggerDecision(
            kws_confidence=best_conf,
            kws_triggered=triggered,
            sv_score=sv_score,
            accepted=accepted,
            segment=segment,
            processing_seconds=time.perf_counter() - t0,
        )


def hardware_description() -> str:
    return f"{platform.processor() or platform.machine()} / {platform.system()}"


def measure_rtf(decisions, durations, hardware: str | None = None) -> RtfReport:
    """Aggregate per-utterance timings into a real-time factor.

    `durations` are per-file audio durations counting multi-channel files
    once; enrollment work must not be included in `decisions`.
    """
    decisions = list(decisions)
    durations = list(durations)
    if not decisions:
        raise ValueError("cannot measure RTF on an empty trial set")
    return RtfReport(
        t_process=sum(d.processing_seconds for d in decisions),
        t_total_test=float(sum(durations)),
        num_utterances=len(decisions),
        hardware=hardware or hardware_description(),
    )


def decision_line(index: int, decision: TriggerDecision) -> str:
    """Per-trial TSV line: index, kws conf, sv score or NA, decision, ms."""
    sv = "NA" if decision.sv_score is None else f"{decision.sv_score:.6f}"
    verdict = "accept" if decision.accepted else "reject"
    ms = decision.processing_seconds * 1000.0
    return f"{index}\t{decision.kws_confidence:.6f}\t{sv}\t{verdict}\t{ms:.3f}"
