/** Trainer-side network forward passes in plain float64 arithmetic.
 *
 * This is deliberately independent of the tf.js training graph: after
 * export, these functions and the engine's `forward` command must agree
 * within 1e-4 on the same PVTW file, which is the single contract across
 * the language boundary.
 */

import { Bundle, tensor } from "./pvtw";
import { NUM_MEL, WINDOW_FRAMES } from "./features";

export type Matrix = { rows: number; cols: number; data: Float64Array };

export function matrix(rows: number, cols: number): Matrix {
  return { rows, cols, data: new Float64Array(rows * cols) };
}

function toF64(t: { data: Float32Array }): Float64Array {
  return Float64Array.from(t.data);
}

function sigmoid(x: number): number {
  return 1.0 / (1.0 + Math.exp(-x));
}

/**
 * LSTM over x (T, D) with packed (4H, D)/(4H, H)/(4H,) parameters, gate
 * order [input, forget, cell-candidate, output], zero initial state.
 */
export function lstmForward(
  wx: Float64Array, wh: Float64Array, bias: Float64Array,
  x: Float64Array, t: number, d: number,
): { data: Float64Array; hidden: number } {
  const h4 = bias.length;
  const hDim = h4 / 4;
  const out = new Float64Array(t * hDim);
  const h = new Float64Array(hDim);
  const c = new Float64Array(hDim);
  const gates = new Float64Array(h4);
  for (let step = 0; step < t; step++) {
    for (let g = 0; g < h4; g++) {
      let acc = bias[g];
      const rowX = g * d;
      for (let j = 0; j < d; j++) acc += wx[rowX + j] * x[step * d + j];
      const rowH = g * hDim;
      for (let j = 0; j < hDim; j++) acc += wh[rowH + j] * h[j];
      gates[g] = acc;
    }
    for (let j = 0; j < hDim; j++) {
      const i = sigmoid(gates[j]);
      const f = sigmoid(gates[hDim + j]);
      const g = Math.tanh(gates[2 * hDim + j]);
      const o = sigmoid(gates[3 * hDim + j]);
      c[j] = f * c[j] + i * g;
      h[j] = o * Math.tanh(c[j]);
      out[step * hDim + j] = h[j];
    }
  }
  return { data: out, hidden: hDim };
}

function softmaxInPlace(row: Float64Array): void {
  let max = -Infinity;
  for (const v of row) max = Math.max(max, v);
  let sum = 0.0;
  for (let i = 0; i < row.length; i++) {
    row[i] = Math.exp(row[i] - max);
    sum += row[i];
  }
  for (let i = 0; i < row.length; i++) row[i] /= sum;
}

/** Posterior rows over hop-1 sliding 40-frame windows, (T, 80) -> (T-39, C). */
export function kwsPosteriors(bundle: Bundle, features: Float64Array, t: number): Matrix {
  if (t < WINDOW_FRAMES) throw new Error(`need at least ${WINDOW_FRAMES} frames, got ${t}`);
  const w1x = toF64(tensor(bundle, "lstm1.input_weights"));
  const w1h = toF64(tensor(bundle, "lstm1.recurrent_weights"));
  const b1 = toF64(tensor(bundle, "lstm1.bias"));
  const w2x = toF64(tensor(bundle, "lstm2.input_weights"));
  const w2h = toF64(tensor(bundle, "lstm2.recurrent_weights"));
  const b2 = toF64(tensor(bundle, "lstm2.bias"));
  const fcw = toF64(tensor(bundle, "fc.weight"));
  const fcb = toF64(tensor(bundle, "fc.bias"));
  const numClasses = fcb.length;
  const hDim = b1.length / 4;
  const numWindows = t - WINDOW_FRAMES + 1;
  const out = matrix(numWindows, numClasses);
  for (let w = 0; w < numWindows; w++) {
    const win = features.subarray(w * NUM_MEL, (w + WINDOW_FRAMES) * NUM_MEL);
    const h1 = lstmForward(w1x, w1h, b1, win, WINDOW_FRAMES, NUM_MEL);
    const h2 = lstmForward(w2x, w2h, b2, h1.data, WINDOW_FRAMES, hDim);
    const pooled = new Float64Array(hDim);
    for (let step = 0; step < WINDOW_FRAMES; step++) {
      for (let j = 0; j < hDim; j++) pooled[j] += h2.data[step * hDim + j];
    }
    for (let j = 0; j < hDim; j++) pooled[j] /= WINDOW_FRAMES;
    const row = out.data.subarray(w * numClasses, (w + 1) * numClasses);
    for (let cIdx = 0; cIdx < numClasses; cIdx++) {
      let acc = fcb[cIdx];
      for (let j = 0; j < hDim; j++) acc += fcw[cIdx * hDim + j] * pooled[j];
      row[cIdx] = acc;
    }
    softmaxInPlace(row);
  }
  return out;
}

/** (C, H, W) tensor stored as one flat Float64Array. */
type Image = { c: number; h: number; w: number; data: Float64Array };

function conv2d(
  x: Image, weight: Float64Array, bias: Float64Array,
  cOut: number, kh: number, kw: number, stride: number, pad: number,
): Image {
  const hOut = Math.floor((x.h + 2 * pad - kh) / stride) + 1;
  const wOut = Math.floor((x.w + 2 * pad - kw) / stride) + 1;
  const out: Image = { c: cOut, h: hOut, w: wOut, data: new Float64Array(cOut * hOut * wOut) };
  for (let oc = 0; oc < cOut; oc++) {
    for (let oy = 0; oy < hOut; oy++) {
      for (let ox = 0; ox < wOut; ox++) {
        let acc = bias[oc];
        for (let ic = 0; ic < x.c; ic++) {
          for (let ky = 0; ky < kh; ky++) {
            const iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= x.h) continue;
            for (let kx = 0; kx < kw; kx++) {
              const ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= x.w) continue;
              acc += weight[((oc * x.c + ic) * kh + ky) * kw + kx] *
                     x.data[(ic * x.h + iy) * x.w + ix];
            }
          }
        }
        out.data[(oc * hOut + oy) * wOut + ox] = acc;
      }
    }
  }
  return out;
}

function reluInPlace(img: Image): Image {
  for (let i = 0; i < img.data.length; i++) img.data[i] = Math.max(img.data[i], 0.0);
  return img;
}

function seScale(img: Image, bundle: Bundle, prefix: string): void {
  const fc1w = toF64(tensor(bundle, `${prefix}.se.fc1.weight`));
  const fc1b = toF64(tensor(bundle, `${prefix}.se.fc1.bias`));
  const fc2w = toF64(tensor(bundle, `${prefix}.se.fc2.weight`));
  const fc2b = toF64(tensor(bundle, `${prefix}.se.fc2.bias`));
  const reduced = fc1b.length;
  const squeezed = new Float64Array(img.c);
  const area = img.h * img.w;
  for (let c = 0; c < img.c; c++) {
    let acc = 0.0;
    for (let i = 0; i < area; i++) acc += img.data[c * area + i];
    squeezed[c] = acc / area;
  }
  const hidden = new Float64Array(reduced);
  for (let r = 0; r < reduced; r++) {
    let acc = fc1b[r];
    for (let c = 0; c < img.c; c++) acc += fc1w[r * img.c + c] * squeezed[c];
    hidden[r] = Math.max(acc, 0.0);
  }
  for (let c = 0; c < img.c; c++) {
    let acc = fc2b[c];
    for (let r = 0; r < reduced; r++) acc += fc2w[c * reduced + r] * hidden[r];
    const gate = sigmoid(acc);
    for (let i = 0; i < area; i++) img.data[c * area + i] *= gate;
  }
}

/** L2-normalized speaker embedding for a (T, 80) feature matrix. */
export function embedForward(bundle: Bundle, features: Float64Array, t: number): Float64Array {
  if (t < WINDOW_FRAMES) throw new Error(`need at least ${WINDOW_FRAMES} frames, got ${t}`);
  const channels = bundle.config["channels"] as number[];
  let x: Image = { c: 1, h: t, w: NUM_MEL, data: Float64Array.from(features.subarray(0, t * NUM_MEL)) };
  const stemW = tensor(bundle, "stem.conv.weight");
  x = reluInPlace(conv2d(x, toF64(stemW), toF64(tensor(bundle, "stem.conv.bias")),
                         channels[0], 3, 3, 1, 1));
  for (let s = 1; s <= channels.length; s++) {
    const prefix = `stage${s}`;
    const stride = s === 1 ? 1 : 2;
    const cOut = channels[s - 1];
    let y = reluInPlace(conv2d(x, toF64(tensor(bundle, `${prefix}.conv1.weight`)),
                               toF64(tensor(bundle, `${prefix}.conv1.bias`)), cOut, 3, 3, stride, 1));
    y = conv2d(y, toF64(tensor(bundle, `${prefix}.conv2.weight`)),
               toF64(tensor(bundle, `${prefix}.conv2.bias`)), cOut, 3, 3, 1, 1);
    seScale(y, bundle, prefix);
    let skip: Image;
    if (bundle.tensors.has(`${prefix}.downsample.weight`)) {
      skip = conv2d(x, toF64(tensor(bundle, `${prefix}.downsample.weight`)),
                    toF64(tensor(bundle, `${prefix}.downsample.bias`)), cOut, 1, 1, stride, 0);
    } else {
      skip = x;
    }
    for (let i = 0; i < y.data.length; i++) y.data[i] = Math.max(y.data[i] + skip.data[i], 0.0);
    x = y;
  }
  // flatten per time step in (channel, freq) order, then attentive stats
  const tOut = x.h;
  const flat = x.c * x.w;
  const frames = new Float64Array(tOut * flat);
  for (let step = 0; step < tOut; step++) {
    for (let c = 0; c < x.c; c++) {
      for (let f = 0; f < x.w; f++) {
        frames[step * flat + c * x.w + f] = x.data[(c * x.h + step) * x.w + f];
      }
    }
  }
  const projW = toF64(tensor(bundle, "asp.proj.weight"));
  const projB = toF64(tensor(bundle, "asp.proj.bias"));
  const context = toF64(tensor(bundle, "asp.context"));
  const att = projB.length;
  const logits = new Float64Array(tOut);
  for (let step = 0; step < tOut; step++) {
    let e = 0.0;
    for (let a = 0; a < att; a++) {
      let acc = projB[a];
      for (let j = 0; j < flat; j++) acc += projW[a * flat + j] * frames[step * flat + j];
      e += context[a] * Math.tanh(acc);
    }
    logits[step] = e;
  }
  softmaxInPlace(logits);
  const mean = new Float64Array(flat);
  const second = new Float64Array(flat);
  for (let step = 0; step < tOut; step++) {
    const alpha = logits[step];
    for (let j = 0; j < flat; j++) {
      const v = frames[step * flat + j];
      mean[j] += alpha * v;
      second[j] += alpha * v * v;
    }
  }
  const pooled = new Float64Array(2 * flat);
  for (let j = 0; j < flat; j++) {
    pooled[j] = mean[j];
    pooled[flat + j] = Math.sqrt(Math.max(second[j] - mean[j] * mean[j], 0.0) + 1e-9);
  }
  const fcw = toF64(tensor(bundle, "fc.weight"));
  const fcb = toF64(tensor(bundle, "fc.bias"));
  const embDim = fcb.length;
  const raw = new Float64Array(embDim);
  let norm = 0.0;
  for (let k = 0; k < embDim; k++) {
    let acc = fcb[k];
    for (let j = 0; j < 2 * flat; j++) acc += fcw[k * 2 * flat + j] * pooled[j];
    raw[k] = acc;
    norm += acc * acc;
  }
  norm = Math.sqrt(norm);
  if (norm === 0.0) throw new Error("degenerate zero embedding");
  for (let k = 0; k < embDim; k++) raw[k] /= norm;
  return raw;
}
