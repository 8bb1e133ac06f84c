/** Helpers for invoking the engine CLI (the only way the trainer talks to it). */

import { spawnSync } from "child_process";

/** Engine executable; override with VT_ENGINE for non-PATH installs. */
export function engineBinary(): string {
  return process.env.VT_ENGINE || "voicetrigger";
}

export function runEngine(args: string[], maxBuffer = 64 * 1024 * 1024): string {
  const res = spawnSync(engineBinary(), args, { encoding: "utf-8", maxBuffer });
  if (res.error) throw res.error;
  if (res.status !== 0) {
    throw new Error(
      `${engineBinary()} ${args.join(" ")} exited ${res.status}: ${res.stderr}`,
    );
  }
  return res.stdout;
}

/** `forward` on a feature dump; returns posterior rows or the embedding. */
export function engineForward(
  weights: string, kind: "kws" | "emb", featuresPath: string,
): number[][] | number[] {
  const flag = kind === "kws" ? "--kws-weights" : "--emb-weights";
  const doc = JSON.parse(runEngine(["forward", flag, weights, "--features", featuresPath]));
  return kind === "kws" ? doc.posteriors : doc.embedding;
}
