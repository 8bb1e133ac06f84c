/** Training data assembly from a synthetic corpus manifest + WAV tree. */

import * as fs from "fs";
import * as path from "path";

import { extractFeatures, NUM_MEL, FRAME_SHIFT, FRAME_LENGTH, WINDOW_FRAMES } from "./features";
import { readWav } from "./wav";
import { Rng } from "./rng";

export const FILLER_CLASS = 3;
export const FILLER_RATIO = 3; // filler:keyword windows by count
export const CONFUSABLE_WINDOWS = 6; // hard-negative windows per confusable utterance

export interface Utterance {
  uttId: string;
  path: string;
  speakerId: string;
  content: string;
  subwordEndMs: number[] | null;
  subset: string | null;
  durationS: number;
}

export interface Corpus {
  dir: string;
  utterances: Utterance[];
  speakers: string[];
}

export function loadCorpus(dir: string): Corpus {
  const manifest = JSON.parse(fs.readFileSync(path.join(dir, "manifest.json"), "utf-8"));
  const utterances: Utterance[] = manifest.utterances.map((u: any) => ({
    uttId: u.utt_id,
    path: u.path,
    speakerId: u.speaker_id,
    content: u.content,
    subwordEndMs: u.subword_end_ms ?? null,
    subset: u.subset ?? null,
    durationS: u.duration_s,
  }));
  const speakers = [...new Set(utterances.map((u) => u.speakerId))];
  return { dir, utterances, speakers };
}

/** Training-time white-noise SNR range (dB), mirroring the trial sets. */
export const KWS_SNR_LO = 8.0;
export const KWS_SNR_HI = 20.0;

function whiteNoise(rng: Rng, n: number): Float64Array {
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) out[i] = rng.gaussian();
  return out;
}

export interface WindowSet {
  /** Row-major (N, 40*80) feature windows. */
  features: Float32Array;
  labels: Int32Array;
  count: number;
  /** Windows that needed left zero-padding at the stream edge. */
  paddedCount: number;
}

/**
 * One 40-frame window per ground-truth subword end per keyword utterance
 * (classes 0..2), plus FILLER_RATIO times as many windows sampled from
 * filler utterances (class 3), plus CONFUSABLE_WINDOWS class-3 windows from
 * the tail of each confusable utterance — permuted-order units are the
 * hardest negatives the decision stage faces, and the spotter must score
 * them low in context. Each keyword window ENDS at its subword-end
 * frame, matching the streaming engine where the posterior at index t
 * summarizes the 40 frames ending at t+39. Windows that would start before
 * frame 0 are left zero-padded and counted in paddedCount. White noise at
 * a random SNR in [KWS_SNR_LO, KWS_SNR_HI] dB is mixed into every
 * utterance before feature extraction, matching the noise floor of the
 * trial sets the spotter is scored on.
 */
export function makeKwsDataset(corpus: Corpus, seed: number): WindowSet {
  const rng = new Rng(seed);
  const windowLen = WINDOW_FRAMES * NUM_MEL;
  const rows: Float32Array[] = [];
  const labels: number[] = [];
  let paddedCount = 0;
  let keywordWindows = 0;

  const takeWindow = (feats: Float64Array, frames: number, start: number): Float32Array => {
    const out = new Float32Array(windowLen);
    for (let r = 0; r < WINDOW_FRAMES; r++) {
      const src = start + r;
      if (src < 0) continue; // left zero padding
      out.set(
        Float32Array.from(feats.subarray(src * NUM_MEL, (src + 1) * NUM_MEL)),
        r * NUM_MEL,
      );
    }
    return out;
  };

  const fillerFeatures: { feats: Float64Array; frames: number }[] = [];
  for (const utt of corpus.utterances) {
    const wav = readWav(path.join(corpus.dir, utt.path));
    const noisy = mixNoise(
      wav.samples[0], whiteNoise(rng, wav.samples[0].length),
      rng.uniform(KWS_SNR_LO, KWS_SNR_HI),
    );
    const { data: feats, frames } = extractFeatures(noisy);
    if (utt.content === "keyword" && utt.subwordEndMs) {
      utt.subwordEndMs.forEach((endMs, subword) => {
        const endFrame = Math.round(endMs / 10);
        let start = endFrame - WINDOW_FRAMES;
        if (start + WINDOW_FRAMES > frames) start = frames - WINDOW_FRAMES;
        if (start < 0) paddedCount++;
        rows.push(takeWindow(feats, frames, start));
        labels.push(subword);
        keywordWindows++;
      });
    } else if (utt.content === "filler") {
      fillerFeatures.push({ feats, frames });
    } else if (utt.content === "confusable") {
      // the unit block sits at the utterance tail; sample windows ending
      // inside it so every permuted transition shows up as a negative
      for (let k = 0; k < CONFUSABLE_WINDOWS; k++) {
        const end = frames - rng.int(70);
        rows.push(takeWindow(feats, frames, Math.max(end - WINDOW_FRAMES, 0)));
        labels.push(FILLER_CLASS);
      }
    }
  }
  if (keywordWindows === 0) throw new Error("corpus has no aligned keyword utterances");
  if (fillerFeatures.length === 0) throw new Error("corpus has no filler utterances");

  const fillerCount = FILLER_RATIO * keywordWindows;
  for (let i = 0; i < fillerCount; i++) {
    const src = fillerFeatures[i % fillerFeatures.length];
    const start = rng.int(Math.max(src.frames - WINDOW_FRAMES, 1));
    rows.push(takeWindow(src.feats, src.frames, start));
    labels.push(FILLER_CLASS);
  }

  const features = new Float32Array(rows.length * windowLen);
  rows.forEach((r, i) => features.set(r, i * windowLen));
  return {
    features,
    labels: Int32Array.from(labels),
    count: rows.length,
    paddedCount,
  };
}

export interface EmbeddingSet {
  /** Row-major (N, cropFrames*80) feature crops. */
  features: Float32Array;
  speakerIndex: Int32Array;
  count: number;
  cropFrames: number;
  speakers: string[];
}

/** Scale `noise` to sit `snrDb` below `signal` and add it, like the corpus mixer. */
export function mixNoise(signal: Float64Array, noise: Float64Array, snrDb: number): Float64Array {
  let pSig = 0.0;
  let pNoise = 0.0;
  for (let i = 0; i < signal.length; i++) {
    pSig += signal[i] * signal[i];
    pNoise += noise[i % noise.length] * noise[i % noise.length];
  }
  pSig /= signal.length;
  pNoise /= signal.length;
  if (pSig === 0.0) throw new Error("signal has zero power");
  if (pNoise === 0.0) throw new Error("noise has zero power");
  const scale = Math.sqrt(pSig / (pNoise * Math.pow(10.0, snrDb / 10.0)));
  const out = new Float64Array(signal.length);
  for (let i = 0; i < signal.length; i++) {
    out[i] = Math.max(-1.0, Math.min(signal[i] + scale * noise[i % noise.length], 32767 / 32768));
  }
  return out;
}

/**
 * Fixed-length feature crops labeled by speaker, from the given subset
 * ("open" or "target"). Each utterance yields cropsPerUtt crops; the first
 * stays clean (enrollment audio is clean), the rest get white noise mixed
 * in at a random SNR inside [snrLo, snrHi] dB like the trial-set test
 * utterances. Keyword and confusable utterances are cropped from their
 * tail (with a little jitter), where the units sit — the verifier embeds
 * the detected keyword segment, so mid-utterance ambience crops would train
 * on the wrong signal. Filler utterances are speech throughout and crop
 * anywhere.
 */
export function makeEmbeddingDataset(
  corpus: Corpus, subset: string, seed: number,
  snrLo: number, snrHi: number,
  cropFrames = 60, cropsPerUtt = 3,
): EmbeddingSet {
  const rng = new Rng(seed);
  const utts = corpus.utterances.filter((u) => u.subset === subset);
  if (utts.length === 0) throw new Error(`no utterances in subset ${subset}`);
  const speakers = [...new Set(utts.map((u) => u.speakerId))].sort();
  const speakerToIndex = new Map(speakers.map((s, i) => [s, i]));
  const cropSamples = FRAME_LENGTH + (cropFrames - 1) * FRAME_SHIFT;

  const waves = utts.map((u) => readWav(path.join(corpus.dir, u.path)).samples[0]);
  const rows: Float32Array[] = [];
  const labels: number[] = [];
  for (let i = 0; i < utts.length; i++) {
    for (let k = 0; k < cropsPerUtt; k++) {
      const maxStart = Math.max(waves[i].length - cropSamples, 1);
      let start: number;
      if (utts[i].content !== "filler") {
        const jitter = Math.min(rng.int(Math.floor(0.15 * 16000)), maxStart - 1);
        start = maxStart - 1 - jitter;
      } else {
        start = rng.int(maxStart);
      }
      let crop: Float64Array = new Float64Array(cropSamples);
      crop.set(waves[i].subarray(start, start + cropSamples));
      if (k > 0) {
        crop = mixNoise(crop, whiteNoise(rng, cropSamples), rng.uniform(snrLo, snrHi));
      }
      const { data, frames } = extractFeatures(crop);
      rows.push(Float32Array.from(data.subarray(0, frames * NUM_MEL)));
      labels.push(speakerToIndex.get(utts[i].speakerId)!);
    }
  }
  const dim = cropFrames * NUM_MEL;
  const features = new Float32Array(rows.length * dim);
  rows.forEach((r, i) => features.set(r.subarray(0, dim), i * dim));
  return {
    features,
    speakerIndex: Int32Array.from(labels),
    count: rows.length,
    cropFrames,
    speakers,
  };
}
