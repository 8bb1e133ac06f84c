/** Log-mel frontend, numerically identical to the engine's.
 *
 * 25 ms periodic-Hann frames, 10 ms shift, 512-point FFT, 80 HTK-mel
 * triangular filters over 20-7600 Hz with peak weight 1, natural log with
 * a 1e-10 floor, no pre-emphasis and no normalization. Exported models are
 * only valid if train-time features match inference-time features, so any
 * change here must be mirrored against the engine's `features` command.
 */

import * as fs from "fs";

export const FRAME_LENGTH = 400;
export const FRAME_SHIFT = 160;
export const NUM_FFT = 512;
export const NUM_BINS = NUM_FFT / 2 + 1;
export const NUM_MEL = 80;
export const MEL_FMIN = 20.0;
export const MEL_FMAX = 7600.0;
export const LOG_FLOOR = 1e-10;
export const WINDOW_FRAMES = 40;

export function hannWindow(length: number = FRAME_LENGTH): Float64Array {
  const w = new Float64Array(length);
  for (let n = 0; n < length; n++) {
    w[n] = 0.5 - 0.5 * Math.cos((2.0 * Math.PI * n) / length);
  }
  return w;
}

export function hzToMel(f: number): number {
  return 2595.0 * Math.log10(1.0 + f / 700.0);
}

export function melToHz(m: number): number {
  return 700.0 * (Math.pow(10.0, m / 2595.0) - 1.0);
}

/** Triangular mel filters as a dense (NUM_MEL, NUM_BINS) matrix. */
export function makeMelFilterbank(
  numFilters: number = NUM_MEL,
  fmin: number = MEL_FMIN,
  fmax: number = MEL_FMAX,
  nfft: number = NUM_FFT,
  sampleRate: number = 16000,
): { weights: Float64Array; centerFreqs: Float64Array } {
  const numBins = nfft / 2 + 1;
  const melLo = hzToMel(fmin);
  const melHi = hzToMel(fmax);
  const edges = new Float64Array(numFilters + 2);
  for (let i = 0; i < numFilters + 2; i++) {
    edges[i] = melToHz(melLo + ((melHi - melLo) * i) / (numFilters + 1));
  }
  const weights = new Float64Array(numFilters * numBins);
  for (let i = 0; i < numFilters; i++) {
    const left = edges[i];
    const center = edges[i + 1];
    const right = edges[i + 2];
    for (let k = 0; k < numBins; k++) {
      const f = (k * sampleRate) / nfft;
      const rising = (f - left) / (center - left);
      const falling = (right - f) / (right - center);
      weights[i * numBins + k] = Math.max(Math.min(rising, falling), 0.0);
    }
  }
  return { weights, centerFreqs: edges.subarray(1, numFilters + 1) };
}

// Precomputed twiddles and bit-reversal for the fixed 512-point FFT.
const REV = (() => {
  const rev = new Uint32Array(NUM_FFT);
  const bits = Math.log2(NUM_FFT);
  for (let i = 0; i < NUM_FFT; i++) {
    let r = 0;
    for (let b = 0; b < bits; b++) r |= ((i >> b) & 1) << (bits - 1 - b);
    rev[i] = r;
  }
  return rev;
})();
const TW_COS = new Float64Array(NUM_FFT / 2);
const TW_SIN = new Float64Array(NUM_FFT / 2);
for (let i = 0; i < NUM_FFT / 2; i++) {
  TW_COS[i] = Math.cos((-2.0 * Math.PI * i) / NUM_FFT);
  TW_SIN[i] = Math.sin((-2.0 * Math.PI * i) / NUM_FFT);
}

/**
 * Power spectrum |FFT_512|^2 of one windowed frame over the 257
 * non-redundant bins. In-place iterative radix-2 FFT in doubles.
 */
export function powerSpectrum(frame: Float64Array): Float64Array {
  const re = new Float64Array(NUM_FFT);
  const im = new Float64Array(NUM_FFT);
  const n = Math.min(frame.length, NUM_FFT);
  for (let i = 0; i < n; i++) re[REV[i]] = frame[i];
  for (let size = 2; size <= NUM_FFT; size <<= 1) {
    const half = size >> 1;
    const step = NUM_FFT / size;
    for (let start = 0; start < NUM_FFT; start += size) {
      for (let j = 0; j < half; j++) {
        const wRe = TW_COS[j * step];
        const wIm = TW_SIN[j * step];
        const a = start + j;
        const b = a + half;
        const tRe = re[b] * wRe - im[b] * wIm;
        const tIm = re[b] * wIm + im[b] * wRe;
        re[b] = re[a] - tRe;
        im[b] = im[a] - tIm;
        re[a] += tRe;
        im[a] += tIm;
      }
    }
  }
  const power = new Float64Array(NUM_BINS);
  for (let k = 0; k < NUM_BINS; k++) power[k] = re[k] * re[k] + im[k] * im[k];
  return power;
}

let defaultFbank: { weights: Float64Array; centerFreqs: Float64Array } | null = null;

export function numFrames(numSamples: number): number {
  if (numSamples < FRAME_LENGTH) {
    throw new Error(`audio has ${numSamples} samples, need at least ${FRAME_LENGTH}`);
  }
  return 1 + Math.floor((numSamples - FRAME_LENGTH) / FRAME_SHIFT);
}

/** Log-mel feature matrix, row-major (T, 80). */
export function extractFeatures(samples: Float64Array): { data: Float64Array; frames: number } {
  if (defaultFbank === null) defaultFbank = makeMelFilterbank();
  const fbank = defaultFbank.weights;
  const hann = hannWindow();
  const t = numFrames(samples.length);
  const out = new Float64Array(t * NUM_MEL);
  const frame = new Float64Array(FRAME_LENGTH);
  for (let i = 0; i < t; i++) {
    const off = i * FRAME_SHIFT;
    for (let n = 0; n < FRAME_LENGTH; n++) frame[n] = samples[off + n] * hann[n];
    const power = powerSpectrum(frame);
    for (let m = 0; m < NUM_MEL; m++) {
      let acc = 0.0;
      const row = m * NUM_BINS;
      for (let k = 0; k < NUM_BINS; k++) acc += power[k] * fbank[row + k];
      out[i * NUM_MEL + m] = Math.log(Math.max(acc, LOG_FLOOR));
    }
  }
  return { data: out, frames: t };
}

/** Binary feature dump: u32 T, u32 80, then T*80 little-endian f32. */
export function writeFeatureDump(path: string, data: Float64Array, frames: number): void {
  const dim = data.length / frames;
  const buf = Buffer.alloc(8 + 4 * data.length);
  buf.writeUInt32LE(frames, 0);
  buf.writeUInt32LE(dim, 4);
  for (let i = 0; i < data.length; i++) buf.writeFloatLE(Math.fround(data[i]), 8 + 4 * i);
  fs.writeFileSync(path, buf);
}

export function readFeatureDump(path: string): { data: Float64Array; frames: number } {
  const buf = fs.readFileSync(path);
  if (buf.length < 8) throw new Error(`${path}: feature dump truncated`);
  const t = buf.readUInt32LE(0);
  const d = buf.readUInt32LE(4);
  if (buf.length < 8 + 4 * t * d) throw new Error(`${path}: feature dump truncated`);
  const data = new Float64Array(t * d);
  for (let i = 0; i < t * d; i++) data[i] = buf.readFloatLE(8 + 4 * i);
  return { data, frames: t };
}
