/** Keyword-spotter training: 2-layer LSTM(128) + average pool + FC(4).
 *
 * SGD with Nesterov momentum, lr 0.01, cross-entropy; the lr drops by 0.1
 * on a training-loss plateau (no improvement > 1e-4 for plateauPatience
 * epochs) and training stops early after earlyStopPatience epochs without
 * improvement. Gate order in the packed kernels is [input, forget,
 * cell-candidate, output], matching the PVTW contract.
 */

import * as tf from "@tensorflow/tfjs";

import { Bundle, Tensor } from "./pvtw";
import { WindowSet } from "./dataset";
import { Rng } from "./rng";
import { NUM_MEL, WINDOW_FRAMES } from "./features";

export const HIDDEN_DIM = 128;
export const NUM_CLASSES = 4;

export interface KwsTrainConfig {
  learningRate: number;
  momentum: number;
  batchSize: number;
  maxEpochs: number;
  plateauFactor: number;
  plateauPatience: number;
  plateauEpsilon: number;
  earlyStopPatience: number;
}

export const KWS_DEFAULTS: KwsTrainConfig = {
  learningRate: 0.01,
  momentum: 0.9,
  batchSize: 128,
  maxEpochs: 100,
  plateauFactor: 0.1,
  plateauPatience: 3,
  plateauEpsilon: 1e-4,
  earlyStopPatience: 5,
};

interface LstmVars {
  wx: tf.Variable; // (D, 4H), column blocks [i|f|g|o]
  wh: tf.Variable; // (H, 4H)
  bias: tf.Variable; // (4H,)
}

function glorot(rng: Rng, rows: number, cols: number): tf.Tensor2D {
  const limit = Math.sqrt(6.0 / (rows + cols));
  const data = new Float32Array(rows * cols);
  for (let i = 0; i < data.length; i++) data[i] = rng.uniform(-limit, limit);
  return tf.tensor2d(data, [rows, cols]);
}

function makeLstmVars(rng: Rng, inputDim: number, hidden: number): LstmVars {
  const bias = new Float32Array(4 * hidden);
  bias.fill(1.0, hidden, 2 * hidden); // forget-gate bias starts open
  return {
    wx: tf.variable(glorot(rng, inputDim, 4 * hidden)),
    wh: tf.variable(glorot(rng, hidden, 4 * hidden)),
    bias: tf.variable(tf.tensor1d(bias)),
  };
}

/** LSTM over xs (B, T, D) -> (B, T, H); input projections done in one matmul. */
export function lstmLayer(vars: LstmVars, xs: tf.Tensor3D, hidden: number): tf.Tensor3D {
  const [b, t, d] = xs.shape;
  const preX = tf
    .matMul(xs.reshape([b * t, d]), vars.wx as tf.Tensor2D)
    .add(vars.bias)
    .reshape([b, t, 4 * hidden]);
  let h = tf.zeros([b, hidden]) as tf.Tensor2D;
  let c = tf.zeros([b, hidden]) as tf.Tensor2D;
  const outs: tf.Tensor2D[] = [];
  for (let step = 0; step < t; step++) {
    const gates = preX
      .slice([0, step, 0], [b, 1, 4 * hidden])
      .reshape([b, 4 * hidden])
      .add(tf.matMul(h, vars.wh as tf.Tensor2D)) as tf.Tensor2D;
    const i = tf.sigmoid(gates.slice([0, 0], [b, hidden]));
    const f = tf.sigmoid(gates.slice([0, hidden], [b, hidden]));
    const g = tf.tanh(gates.slice([0, 2 * hidden], [b, hidden]));
    const o = tf.sigmoid(gates.slice([0, 3 * hidden], [b, hidden]));
    c = f.mul(c).add(i.mul(g)) as tf.Tensor2D;
    h = o.mul(tf.tanh(c)) as tf.Tensor2D;
    outs.push(h);
  }
  return tf.stack(outs, 1) as tf.Tensor3D;
}

export interface KwsModelVars {
  lstm1: LstmVars;
  lstm2: LstmVars;
  fcW: tf.Variable; // (H, C)
  fcB: tf.Variable; // (C,)
  /** Input standardization constants; folded into lstm1 at export so the
   * engine (which sees raw features) computes the identical function. */
  inputMean: number;
  inputStd: number;
}

export function makeKwsVars(seed: number, inputMean = 0.0, inputStd = 1.0): KwsModelVars {
  const rng = new Rng(seed);
  return {
    lstm1: makeLstmVars(rng, NUM_MEL, HIDDEN_DIM),
    lstm2: makeLstmVars(rng, HIDDEN_DIM, HIDDEN_DIM),
    fcW: tf.variable(glorot(rng, HIDDEN_DIM, NUM_CLASSES)),
    fcB: tf.variable(tf.zeros([NUM_CLASSES])),
    inputMean,
    inputStd,
  };
}

/** Mean and standard deviation of a feature array, for input scaling. */
export function featureStats(features: Float32Array): { mean: number; std: number } {
  let sum = 0.0;
  for (let i = 0; i < features.length; i++) sum += features[i];
  const mean = sum / features.length;
  let varSum = 0.0;
  for (let i = 0; i < features.length; i++) {
    const d = features[i] - mean;
    varSum += d * d;
  }
  const std = Math.sqrt(varSum / features.length);
  return { mean, std: std > 1e-6 ? std : 1.0 };
}

export function kwsLogits(model: KwsModelVars, xs: tf.Tensor3D): tf.Tensor2D {
  if (model.inputMean !== 0.0 || model.inputStd !== 1.0) {
    xs = xs.sub(model.inputMean).div(model.inputStd) as tf.Tensor3D;
  }
  const h1 = lstmLayer(model.lstm1, xs, HIDDEN_DIM);
  const h2 = lstmLayer(model.lstm2, h1, HIDDEN_DIM);
  const pooled = h2.mean(1) as tf.Tensor2D;
  return tf.matMul(pooled, model.fcW as tf.Tensor2D).add(model.fcB) as tf.Tensor2D;
}

function varList(model: KwsModelVars): tf.Variable[] {
  return [
    model.lstm1.wx, model.lstm1.wh, model.lstm1.bias,
    model.lstm2.wx, model.lstm2.wh, model.lstm2.bias,
    model.fcW, model.fcB,
  ];
}

function batchTensor(set: WindowSet, indices: number[]): { xs: tf.Tensor3D; ys: tf.Tensor1D } {
  const dim = WINDOW_FRAMES * NUM_MEL;
  const xs = new Float32Array(indices.length * dim);
  const ys = new Int32Array(indices.length);
  indices.forEach((idx, i) => {
    xs.set(set.features.subarray(idx * dim, (idx + 1) * dim), i * dim);
    ys[i] = set.labels[idx];
  });
  return {
    xs: tf.tensor3d(xs, [indices.length, WINDOW_FRAMES, NUM_MEL]),
    ys: tf.tensor1d(ys, "int32"),
  };
}

export interface TrainLog {
  epochLosses: number[];
  finalLoss: number;
  finalLearningRate: number;
}

export function trainKwsModel(
  set: WindowSet, config: KwsTrainConfig, seed: number,
  onEpoch?: (epoch: number, loss: number) => void,
): { model: KwsModelVars; log: TrainLog } {
  const stats = featureStats(set.features);
  const model = makeKwsVars(seed, stats.mean, stats.std);
  const order = [...Array(set.count).keys()];
  const rng = new Rng(seed + 1);
  let lr = config.learningRate;
  let optimizer = tf.train.momentum(lr, config.momentum, true);
  let best = Infinity;
  let sinceImprovement = 0;
  let sincePlateauDrop = 0;
  const epochLosses: number[] = [];

  for (let epoch = 0; epoch < config.maxEpochs; epoch++) {
    rng.shuffle(order);
    let lossSum = 0.0;
    let seen = 0;
    for (let start = 0; start < order.length; start += config.batchSize) {
      const indices = order.slice(start, start + config.batchSize);
      const { xs, ys } = batchTensor(set, indices);
      const cost = optimizer.minimize(
        () => {
          const logits = kwsLogits(model, xs);
          const onehot = tf.oneHot(ys, NUM_CLASSES);
          return tf.losses.softmaxCrossEntropy(onehot, logits) as tf.Scalar;
        },
        true,
        varList(model),
      )!;
      lossSum += cost.dataSync()[0] * indices.length;
      seen += indices.length;
      tf.dispose([xs, ys, cost]);
    }
    const epochLoss = lossSum / seen;
    epochLosses.push(epochLoss);
    if (!Number.isFinite(epochLoss)) {
      throw new Error(`training diverged at epoch ${epoch}: loss ${epochLoss}`);
    }
    if (onEpoch) onEpoch(epoch, epochLoss);
    if (epochLoss < best - config.plateauEpsilon) {
      best = epochLoss;
      sinceImprovement = 0;
      sincePlateauDrop = 0;
    } else {
      sinceImprovement++;
      sincePlateauDrop++;
      if (sinceImprovement >= config.earlyStopPatience) break;
      if (sincePlateauDrop >= config.plateauPatience) {
        lr *= config.plateauFactor;
        optimizer.dispose();
        optimizer = tf.train.momentum(lr, config.momentum, true);
        sincePlateauDrop = 0;
      }
    }
  }
  optimizer.dispose();
  return {
    model,
    log: {
      epochLosses,
      finalLoss: epochLosses[epochLosses.length - 1],
      finalLearningRate: lr,
    },
  };
}

export function kwsAccuracy(model: KwsModelVars, set: WindowSet): number {
  let correct = 0;
  const batch = 256;
  for (let start = 0; start < set.count; start += batch) {
    const indices = [...Array(Math.min(batch, set.count - start)).keys()].map((i) => start + i);
    correct += tf.tidy(() => {
      const { xs, ys } = batchTensor(set, indices);
      return kwsLogits(model, xs).argMax(1).equal(ys).sum().dataSync()[0];
    });
  }
  return correct / set.count;
}

/** Transpose a (rows, cols) tf variable into engine row-major (cols, rows). */
function transposed(v: tf.Variable): Tensor {
  const [rows, cols] = v.shape as [number, number];
  const src = v.dataSync() as Float32Array;
  const out = new Float32Array(rows * cols);
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) out[c * rows + r] = src[r * cols + c];
  }
  return { dims: [cols, rows], data: out };
}

export function exportKwsBundle(model: KwsModelVars): Bundle {
  const tensors = new Map<string, Tensor>();
  // fold (x - mean) / std into the first layer: W' = W/std,
  // b' = b - (mean/std) * colsum(W); the engine then feeds raw features
  const wx1 = transposed(model.lstm1.wx); // (4H, D)
  const b1 = new Float32Array(model.lstm1.bias.dataSync() as Float32Array);
  const scale = 1.0 / model.inputStd;
  const shift = model.inputMean / model.inputStd;
  for (let j = 0; j < 4 * HIDDEN_DIM; j++) {
    let rowSum = 0.0;
    for (let d = 0; d < NUM_MEL; d++) rowSum += wx1.data[j * NUM_MEL + d];
    b1[j] -= shift * rowSum;
    for (let d = 0; d < NUM_MEL; d++) wx1.data[j * NUM_MEL + d] *= scale;
  }
  tensors.set("lstm1.input_weights", wx1);
  tensors.set("lstm1.recurrent_weights", transposed(model.lstm1.wh));
  tensors.set("lstm1.bias", { dims: [4 * HIDDEN_DIM], data: b1 });
  tensors.set("lstm2.input_weights", transposed(model.lstm2.wx));
  tensors.set("lstm2.recurrent_weights", transposed(model.lstm2.wh));
  tensors.set("lstm2.bias", { dims: [4 * HIDDEN_DIM], data: model.lstm2.bias.dataSync() as Float32Array });
  tensors.set("fc.weight", transposed(model.fcW));
  tensors.set("fc.bias", { dims: [NUM_CLASSES], data: model.fcB.dataSync() as Float32Array });
  return {
    config: {
      arch: "kws",
      input_dim: NUM_MEL,
      hidden_dim: HIDDEN_DIM,
      num_classes: NUM_CLASSES,
    },
    tensors,
    version: 1,
  };
}
