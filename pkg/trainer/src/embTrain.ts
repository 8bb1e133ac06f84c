/** Speaker-embedding training: residual-SE trunk + attentive stats pooling,
 * additive-margin softmax over speaker identities, two phases.
 *
 * Phase 1 pretrains on the "open" speaker subset with noise mixed at 0-20
 * dB SNR, Adam at lr 0.01 stepping down by 0.1 every stepEvery epochs.
 * Phase 2 fine-tunes on the "target" subset at 0-15 dB SNR with lr 0.001
 * and a fresh classifier head. The trunk layout mirrors the engine exactly:
 * symmetric padding before every 3x3 conv, stride 2 from stage 2, SE
 * reduction 4, per-timestep (channel, freq) flattening before pooling.
 */

import * as tf from "@tensorflow/tfjs";

import { Bundle, Tensor } from "./pvtw";
import { Corpus, EmbeddingSet, makeEmbeddingDataset } from "./dataset";
import { Rng } from "./rng";
import { featureStats } from "./kwsTrain";
import { NUM_MEL } from "./features";

export const CHANNELS = [8, 16, 32, 64];
export const ATTENTION_DIM = 64;
export const EMBEDDING_DIM = 128;
const SE_REDUCTION = 4;
const VAR_EPS = 1e-9;

export interface EmbTrainConfig {
  pretrainLr: number;
  pretrainEpochs: number;
  stepEvery: number;
  stepFactor: number;
  finetuneLr: number;
  finetuneEpochs: number;
  batchSize: number;
  margin: number;
  scale: number;
  cropFrames: number;
  cropsPerUtt: number;
  pretrainSnr: [number, number];
  finetuneSnr: [number, number];
}

export const EMB_DEFAULTS: EmbTrainConfig = {
  pretrainLr: 0.01,
  pretrainEpochs: 50,
  stepEvery: 20,
  stepFactor: 0.1,
  finetuneLr: 0.001,
  finetuneEpochs: 20,
  batchSize: 32,
  margin: 0.2,
  scale: 30,
  cropFrames: 60,
  cropsPerUtt: 3,
  pretrainSnr: [0, 20],
  finetuneSnr: [0, 15],
};

interface StageVars {
  conv1: tf.Variable; // (3, 3, cIn, cOut)
  conv1b: tf.Variable;
  conv2: tf.Variable; // (3, 3, cOut, cOut)
  conv2b: tf.Variable;
  seFc1: tf.Variable; // (cOut, reduced)
  seFc1b: tf.Variable;
  seFc2: tf.Variable; // (reduced, cOut)
  seFc2b: tf.Variable;
  down: tf.Variable | null; // (1, 1, cIn, cOut)
  downB: tf.Variable | null;
  stride: number;
}

export interface EmbModelVars {
  stem: tf.Variable; // (3, 3, 1, c0)
  stemB: tf.Variable;
  stages: StageVars[];
  aspProj: tf.Variable; // (flat, att)
  aspProjB: tf.Variable;
  aspContext: tf.Variable; // (att, 1)
  fcW: tf.Variable; // (2*flat, emb)
  fcB: tf.Variable;
  flat: number;
  /** Input standardization constants; folded into the stem at export so
   * the engine (which sees raw features) computes the identical function. */
  inputMean: number;
  inputStd: number;
}

function heKernel(rng: Rng, shape: number[]): tf.Tensor {
  const fanIn = shape.slice(0, -1).reduce((a, b) => a * b, 1);
  const std = Math.sqrt(2.0 / fanIn);
  const data = new Float32Array(shape.reduce((a, b) => a * b, 1));
  for (let i = 0; i < data.length; i++) data[i] = rng.gaussian() * std;
  return tf.tensor(data, shape);
}

export function makeEmbVars(seed: number, inputMean = 0.0, inputStd = 1.0): EmbModelVars {
  const rng = new Rng(seed);
  const stages: StageVars[] = [];
  let cIn = CHANNELS[0];
  let freq = NUM_MEL;
  CHANNELS.forEach((cOut, idx) => {
    const stride = idx === 0 ? 1 : 2;
    const reduced = Math.max(Math.floor(cOut / SE_REDUCTION), 1);
    const needsDown = stride !== 1 || cIn !== cOut;
    stages.push({
      conv1: tf.variable(heKernel(rng, [3, 3, cIn, cOut])),
      conv1b: tf.variable(tf.zeros([cOut])),
      conv2: tf.variable(heKernel(rng, [3, 3, cOut, cOut])),
      conv2b: tf.variable(tf.zeros([cOut])),
      seFc1: tf.variable(heKernel(rng, [cOut, reduced])),
      seFc1b: tf.variable(tf.zeros([reduced])),
      seFc2: tf.variable(heKernel(rng, [reduced, cOut])),
      seFc2b: tf.variable(tf.zeros([cOut])),
      down: needsDown ? tf.variable(heKernel(rng, [1, 1, cIn, cOut])) : null,
      downB: needsDown ? tf.variable(tf.zeros([cOut])) : null,
      stride,
    });
    cIn = cOut;
    if (stride === 2) freq = Math.floor((freq + 1) / 2);
  });
  const flat = CHANNELS[CHANNELS.length - 1] * freq;
  return {
    stem: tf.variable(heKernel(rng, [3, 3, 1, CHANNELS[0]])),
    stemB: tf.variable(tf.zeros([CHANNELS[0]])),
    stages,
    aspProj: tf.variable(heKernel(rng, [flat, ATTENTION_DIM])),
    aspProjB: tf.variable(tf.zeros([ATTENTION_DIM])),
    aspContext: tf.variable(heKernel(rng, [ATTENTION_DIM, 1])),
    fcW: tf.variable(heKernel(rng, [2 * flat, EMBEDDING_DIM])),
    fcB: tf.variable(tf.zeros([EMBEDDING_DIM])),
    flat,
    inputMean,
    inputStd,
  };
}

/** Keep every other row along `axis` (even indices) via a reshape trick. */
function subsample2(x: tf.Tensor4D, axis: 1 | 2): tf.Tensor4D {
  const [b, h, w, c] = x.shape;
  const len = axis === 1 ? h : w;
  const out = Math.ceil(len / 2);
  let y = x;
  if (len < 2 * out) {
    const padding: Array<[number, number]> = [[0, 0], [0, 0], [0, 0], [0, 0]];
    padding[axis] = [0, 2 * out - len];
    y = tf.pad(y, padding) as tf.Tensor4D;
  }
  if (axis === 1) {
    return y
      .reshape([b, out, 2, w, c])
      .slice([0, 0, 0, 0, 0], [b, out, 1, w, c])
      .reshape([b, out, w, c]) as tf.Tensor4D;
  }
  return y
    .reshape([b, h, out, 2, c])
    .slice([0, 0, 0, 0, 0], [b, h, out, 1, c])
    .reshape([b, h, out, c]) as tf.Tensor4D;
}

/**
 * Symmetric padding then a valid conv, the engine's convolution semantics.
 * Routed through conv3d with a depth of 1: the wasm backend registers both
 * backprop kernels for conv3d but lacks the filter gradient for conv2d, and
 * slice-based im2col is an order of magnitude slower there.
 */
function paddedConv(x: tf.Tensor4D, kernel: tf.Variable, bias: tf.Variable,
                    stride: number, pad: number, padValue = 0.0): tf.Tensor4D {
  const [kh, kw, cIn, cOut] = kernel.shape as [number, number, number, number];
  if (stride !== 1 && stride !== 2) throw new Error(`unsupported stride ${stride}`);
  let inp = x;
  if (pad > 0) {
    inp = tf.pad(x, [[0, 0], [pad, pad], [pad, pad], [0, 0]], padValue) as tf.Tensor4D;
  }
  const [b, hPad, wPad] = inp.shape;
  const inp5 = inp.reshape([b, 1, hPad, wPad, cIn]) as tf.Tensor5D;
  const k5 = kernel.reshape([1, kh, kw, cIn, cOut]) as tf.Tensor5D;
  const out = tf.conv3d(inp5, k5, [1, stride, stride], "valid");
  const [, , hOut, wOut] = out.shape;
  return out.reshape([b, hOut, wOut, cOut]).add(bias) as tf.Tensor4D;
}

function seBlock(x: tf.Tensor4D, stage: StageVars): tf.Tensor4D {
  const squeezed = x.mean([1, 2]) as tf.Tensor2D; // (B, C)
  const hidden = tf.relu(tf.matMul(squeezed, stage.seFc1 as tf.Tensor2D).add(stage.seFc1b));
  const gates = tf.sigmoid(tf.matMul(hidden, stage.seFc2 as tf.Tensor2D).add(stage.seFc2b));
  const [b, , , c] = x.shape;
  return x.mul(gates.reshape([b, 1, 1, c])) as tf.Tensor4D;
}

/** L2-normalized embeddings for xs (B, T, 80, 1). */
export function embForward(model: EmbModelVars, xs: tf.Tensor4D): tf.Tensor2D {
  // Standardized input; the stem pad value mirrors the engine's zero pad
  // on raw features (raw 0 maps to -mean/std after standardization).
  let inp = xs;
  let stemPad = 0.0;
  if (model.inputMean !== 0.0 || model.inputStd !== 1.0) {
    inp = xs.sub(model.inputMean).div(model.inputStd) as tf.Tensor4D;
    stemPad = -model.inputMean / model.inputStd;
  }
  let x = tf.relu(paddedConv(inp, model.stem, model.stemB, 1, 1, stemPad)) as tf.Tensor4D;
  for (const stage of model.stages) {
    let y = tf.relu(paddedConv(x, stage.conv1, stage.conv1b, stage.stride, 1)) as tf.Tensor4D;
    y = paddedConv(y, stage.conv2, stage.conv2b, 1, 1);
    y = seBlock(y, stage);
    const skip = stage.down !== null
      ? paddedConv(x, stage.down, stage.downB!, stage.stride, 0)
      : x;
    x = tf.relu(y.add(skip)) as tf.Tensor4D;
  }
  const [b, t, f, c] = x.shape;
  const frames = x.transpose([0, 1, 3, 2]).reshape([b, t, c * f]) as tf.Tensor3D;
  const e = tf
    .matMul(
      tf.tanh(
        tf.matMul(frames.reshape([b * t, c * f]), model.aspProj as tf.Tensor2D)
          .add(model.aspProjB),
      ),
      model.aspContext as tf.Tensor2D,
    )
    .reshape([b, t]);
  const alpha = tf.softmax(e, -1).reshape([b, t, 1]);
  const mean = frames.mul(alpha).sum(1) as tf.Tensor2D;
  const second = frames.square().mul(alpha).sum(1) as tf.Tensor2D;
  const std = tf.sqrt(tf.maximum(second.sub(mean.square()), 0).add(VAR_EPS));
  const pooled = tf.concat([mean, std], 1) as tf.Tensor2D;
  const raw = tf.matMul(pooled, model.fcW as tf.Tensor2D).add(model.fcB) as tf.Tensor2D;
  return raw.div(raw.norm(2, 1, true)) as tf.Tensor2D;
}

/**
 * Additive-margin softmax loss over cosine logits. With margin 0 and
 * scale 1 this is plain softmax cross-entropy on the cosines.
 */
export function amSoftmaxLoss(
  embeddings: tf.Tensor2D, labels: tf.Tensor1D, classWeights: tf.Tensor2D,
  margin: number, scale: number,
): tf.Scalar {
  const wNorm = classWeights.div(classWeights.norm(2, 1, true)) as tf.Tensor2D;
  const cos = tf.matMul(embeddings, wNorm, false, true);
  const onehot = tf.oneHot(labels, classWeights.shape[0]);
  const logits = cos.sub(onehot.mul(margin)).mul(scale);
  return tf.losses.softmaxCrossEntropy(onehot, logits) as tf.Scalar;
}

function stageVarList(model: EmbModelVars): tf.Variable[] {
  const list: tf.Variable[] = [model.stem, model.stemB];
  for (const s of model.stages) {
    list.push(s.conv1, s.conv1b, s.conv2, s.conv2b,
              s.seFc1, s.seFc1b, s.seFc2, s.seFc2b);
    if (s.down !== null) list.push(s.down, s.downB!);
  }
  list.push(model.aspProj, model.aspProjB, model.aspContext, model.fcW, model.fcB);
  return list;
}

function embBatch(set: EmbeddingSet, indices: number[]): { xs: tf.Tensor4D; ys: tf.Tensor1D } {
  const dim = set.cropFrames * NUM_MEL;
  const xs = new Float32Array(indices.length * dim);
  const ys = new Int32Array(indices.length);
  indices.forEach((idx, i) => {
    xs.set(set.features.subarray(idx * dim, (idx + 1) * dim), i * dim);
    ys[i] = set.speakerIndex[idx];
  });
  return {
    xs: tf.tensor4d(xs, [indices.length, set.cropFrames, NUM_MEL, 1]),
    ys: tf.tensor1d(ys, "int32"),
  };
}

function runPhase(
  model: EmbModelVars, set: EmbeddingSet, config: EmbTrainConfig,
  lr0: number, epochs: number, stepEvery: number, seed: number,
  onEpoch?: (epoch: number, loss: number) => void,
): number[] {
  const classW = tf.variable(heKernel(new Rng(seed), [set.speakers.length, EMBEDDING_DIM]));
  const order = [...Array(set.count).keys()];
  const rng = new Rng(seed + 1);
  const losses: number[] = [];
  let lr = lr0;
  // Adam: the trunk has no batch norm, so plain SGD needs far more epochs
  // than the budget allows before the cosine logits separate
  let optimizer = tf.train.adam(lr);
  const vars = [...stageVarList(model), classW];
  for (let epoch = 0; epoch < epochs; epoch++) {
    if (epoch > 0 && stepEvery > 0 && epoch % stepEvery === 0) {
      lr *= config.stepFactor;
      optimizer.dispose();
      optimizer = tf.train.adam(lr);
    }
    rng.shuffle(order);
    let lossSum = 0.0;
    let seen = 0;
    for (let start = 0; start < order.length; start += config.batchSize) {
      const indices = order.slice(start, start + config.batchSize);
      const { xs, ys } = embBatch(set, indices);
      const cost = optimizer.minimize(
        () => amSoftmaxLoss(embForward(model, xs), ys, classW as tf.Tensor2D,
                            config.margin, config.scale),
        true,
        vars,
      )!;
      lossSum += cost.dataSync()[0] * indices.length;
      seen += indices.length;
      tf.dispose([xs, ys, cost]);
    }
    const epochLoss = lossSum / seen;
    losses.push(epochLoss);
    if (!Number.isFinite(epochLoss)) {
      throw new Error(`embedding training diverged at epoch ${epoch}`);
    }
    if (onEpoch) onEpoch(epoch, epochLoss);
  }
  optimizer.dispose();
  classW.dispose();
  return losses;
}

export function trainEmbeddingModel(
  corpus: Corpus, config: EmbTrainConfig, seed: number,
  onEpoch?: (phase: string, epoch: number, loss: number) => void,
): { model: EmbModelVars; pretrainLosses: number[]; finetuneLosses: number[] } {
  const pretrain = makeEmbeddingDataset(
    corpus, "open", seed + 10, config.pretrainSnr[0], config.pretrainSnr[1],
    config.cropFrames, config.cropsPerUtt,
  );
  const stats = featureStats(pretrain.features);
  const model = makeEmbVars(seed, stats.mean, stats.std);
  const pretrainLosses = runPhase(
    model, pretrain, config, config.pretrainLr, config.pretrainEpochs,
    config.stepEvery, seed + 20,
    onEpoch && ((e, l) => onEpoch("pretrain", e, l)),
  );
  const finetune = makeEmbeddingDataset(
    corpus, "target", seed + 11, config.finetuneSnr[0], config.finetuneSnr[1],
    config.cropFrames, config.cropsPerUtt,
  );
  const finetuneLosses = runPhase(
    model, finetune, config, config.finetuneLr, config.finetuneEpochs,
    0, seed + 21,
    onEpoch && ((e, l) => onEpoch("finetune", e, l)),
  );
  return { model, pretrainLosses, finetuneLosses };
}

function convToEngine(v: tf.Variable): Tensor {
  const [kh, kw, ic, oc] = v.shape as [number, number, number, number];
  const src = v.dataSync() as Float32Array;
  const out = new Float32Array(oc * ic * kh * kw);
  for (let ky = 0; ky < kh; ky++) {
    for (let kx = 0; kx < kw; kx++) {
      for (let i = 0; i < ic; i++) {
        for (let o = 0; o < oc; o++) {
          out[((o * ic + i) * kh + ky) * kw + kx] = src[((ky * kw + kx) * ic + i) * oc + o];
        }
      }
    }
  }
  return { dims: [oc, ic, kh, kw], data: out };
}

function denseToEngine(v: tf.Variable): Tensor {
  const [rows, cols] = v.shape as [number, number];
  const src = v.dataSync() as Float32Array;
  const out = new Float32Array(rows * cols);
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) out[c * rows + r] = src[r * cols + c];
  }
  return { dims: [cols, rows], data: out };
}

function vec(v: tf.Variable): Tensor {
  const data = v.dataSync() as Float32Array;
  return { dims: [data.length], data };
}

export function exportEmbBundle(model: EmbModelVars): Bundle {
  const tensors = new Map<string, Tensor>();
  // fold (x - mean) / std into the stem: W' = W/std,
  // b' = b - (mean/std) * sum over all taps; the stem pad value used in
  // training makes this exact even at image borders
  const stem = convToEngine(model.stem); // (c0, 1, 3, 3)
  const stemB = new Float32Array(model.stemB.dataSync() as Float32Array);
  const scale = 1.0 / model.inputStd;
  const shift = model.inputMean / model.inputStd;
  const tapCount = 9; // 3x3, one input channel
  for (let o = 0; o < stemB.length; o++) {
    let tapSum = 0.0;
    for (let k = 0; k < tapCount; k++) tapSum += stem.data[o * tapCount + k];
    stemB[o] -= shift * tapSum;
    for (let k = 0; k < tapCount; k++) stem.data[o * tapCount + k] *= scale;
  }
  tensors.set("stem.conv.weight", stem);
  tensors.set("stem.conv.bias", stemB.length === 0 ? vec(model.stemB) : { dims: [stemB.length], data: stemB });
  model.stages.forEach((stage, idx) => {
    const p = `stage${idx + 1}`;
    tensors.set(`${p}.conv1.weight`, convToEngine(stage.conv1));
    tensors.set(`${p}.conv1.bias`, vec(stage.conv1b));
    tensors.set(`${p}.conv2.weight`, convToEngine(stage.conv2));
    tensors.set(`${p}.conv2.bias`, vec(stage.conv2b));
    tensors.set(`${p}.se.fc1.weight`, denseToEngine(stage.seFc1));
    tensors.set(`${p}.se.fc1.bias`, vec(stage.seFc1b));
    tensors.set(`${p}.se.fc2.weight`, denseToEngine(stage.seFc2));
    tensors.set(`${p}.se.fc2.bias`, vec(stage.seFc2b));
    if (stage.down !== null) {
      tensors.set(`${p}.downsample.weight`, convToEngine(stage.down));
      tensors.set(`${p}.downsample.bias`, vec(stage.downB!));
    }
  });
  tensors.set("asp.proj.weight", denseToEngine(model.aspProj));
  tensors.set("asp.proj.bias", vec(model.aspProjB));
  const context = model.aspContext.dataSync() as Float32Array;
  tensors.set("asp.context", { dims: [ATTENTION_DIM], data: context });
  tensors.set("fc.weight", denseToEngine(model.fcW));
  tensors.set("fc.bias", vec(model.fcB));
  return {
    config: {
      arch: "embedding",
      input_dim: NUM_MEL,
      channels: CHANNELS,
      attention_dim: ATTENTION_DIM,
      embedding_dim: EMBEDDING_DIM,
    },
    tensors,
    version: 1,
  };
}
