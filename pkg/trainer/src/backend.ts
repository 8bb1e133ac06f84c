/** tf.js backend selection: wasm when available, plain JS otherwise. */

import * as path from "path";
import * as tf from "@tensorflow/tfjs";

let initialized = false;

export async function initBackend(): Promise<string> {
  if (initialized) return tf.getBackend();
  try {
    const wasm = require("@tensorflow/tfjs-backend-wasm");
    const distDir = path.dirname(require.resolve("@tensorflow/tfjs-backend-wasm"));
    wasm.setWasmPaths(distDir + path.sep);
    await tf.setBackend("wasm");
  } catch {
    await tf.setBackend("cpu");
  }
  await tf.ready();
  initialized = true;
  return tf.getBackend();
}
