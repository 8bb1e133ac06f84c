/** Cross-language parity: trainer forward vs engine forward on one PVTW file. */

import * as fs from "fs";
import * as os from "os";
import * as path from "path";

import { readBundle } from "./pvtw";
import { writeFeatureDump, NUM_MEL } from "./features";
import { kwsPosteriors, embedForward } from "./forward";
import { engineForward } from "./engine";
import { Rng } from "./rng";

export interface ParityResult {
  maxAbsDeviation: number;
  worstInputSeed: number;
  inputs: number;
}

/**
 * Runs n seeded random feature matrices through the trainer-side forward
 * and the engine's `forward` command and reports the worst absolute
 * deviation. The exported model is only considered valid below 1e-4.
 */
export function exportParityCheck(
  weightsPath: string, kind: "kws" | "emb", n = 100, baseSeed = 0,
): ParityResult {
  const bundle = readBundle(weightsPath);
  const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "vt-parity-"));
  let worst = 0.0;
  let worstSeed = baseSeed;
  try {
    for (let k = 0; k < n; k++) {
      const seed = baseSeed + k;
      const rng = new Rng(seed);
      const t = 40 + rng.int(21);
      const features = new Float64Array(t * NUM_MEL);
      for (let i = 0; i < features.length; i++) features[i] = rng.gaussian();
      const dump = path.join(tmp, "features.bin");
      writeFeatureDump(dump, features, t);
      // The dump stores f32; evaluate both sides on the rounded values.
      const rounded = Float64Array.from(features, Math.fround);
      let dev = 0.0;
      if (kind === "kws") {
        const mine = kwsPosteriors(bundle, rounded, t);
        const theirs = engineForward(weightsPath, "kws", dump) as number[][];
        for (let r = 0; r < mine.rows; r++) {
          for (let c = 0; c < mine.cols; c++) {
            dev = Math.max(dev, Math.abs(mine.data[r * mine.cols + c] - theirs[r][c]));
          }
        }
      } else {
        const mine = embedForward(bundle, rounded, t);
        const theirs = engineForward(weightsPath, "emb", dump) as number[];
        for (let i = 0; i < mine.length; i++) {
          dev = Math.max(dev, Math.abs(mine[i] - theirs[i]));
        }
      }
      if (dev > worst) {
        worst = dev;
        worstSeed = seed;
      }
    }
  } finally {
    fs.rmSync(tmp, { recursive: true, force: true });
  }
  return { maxAbsDeviation: worst, worstInputSeed: worstSeed, inputs: n };
}
