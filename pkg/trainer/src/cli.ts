/** Trainer CLI: train-kws, train-emb, parity.
 *
 * Exit codes: 0 success, 1 runtime failure, 2 usage error. A JSON config
 * file (--config) can override any training default; explicit flags are
 * not merged since the config file covers everything.
 */

import * as fs from "fs";

import { initBackend } from "./backend";
import { loadCorpus, makeKwsDataset } from "./dataset";
import {
  KWS_DEFAULTS, KwsTrainConfig, exportKwsBundle, kwsAccuracy, trainKwsModel,
} from "./kwsTrain";
import {
  EMB_DEFAULTS, EmbTrainConfig, exportEmbBundle, trainEmbeddingModel,
} from "./embTrain";
import { writeBundle } from "./pvtw";
import { exportParityCheck } from "./parity";

interface Flags {
  [key: string]: string;
}

function parseFlags(argv: string[]): Flags {
  const flags: Flags = {};
  for (let i = 0; i < argv.length; i++) {
    if (!argv[i].startsWith("--")) throw new UsageError(`unexpected argument ${argv[i]}`);
    const key = argv[i].slice(2);
    if (i + 1 >= argv.length) throw new UsageError(`flag --${key} needs a value`);
    flags[key] = argv[++i];
  }
  return flags;
}

class UsageError extends Error {}

function loadConfig<T>(defaults: T, flags: Flags): T {
  const merged = { ...defaults } as Record<string, unknown>;
  if (flags["config"]) {
    const doc = JSON.parse(fs.readFileSync(flags["config"], "utf-8"));
    for (const [key, value] of Object.entries(doc)) {
      if (!(key in merged)) throw new UsageError(`unknown config key ${key}`);
      merged[key] = value;
    }
  }
  return merged as T;
}

function requireFlag(flags: Flags, name: string): string {
  const v = flags[name];
  if (v === undefined) throw new UsageError(`missing required flag --${name}`);
  return v;
}

async function cmdTrainKws(flags: Flags): Promise<number> {
  const config = loadConfig<KwsTrainConfig>(KWS_DEFAULTS, flags);
  const seed = parseInt(flags["seed"] ?? "0", 10);
  const out = requireFlag(flags, "out");
  const corpus = loadCorpus(requireFlag(flags, "corpus"));
  console.error(`backend: ${await initBackend()}`);
  const set = makeKwsDataset(corpus, seed);
  console.error(`windows: ${set.count} (${set.paddedCount} edge-padded)`);
  const { model, log } = trainKwsModel(set, config, seed, (epoch, loss) => {
    console.error(`epoch ${epoch}: loss ${loss.toFixed(5)}`);
  });
  const accuracy = kwsAccuracy(model, set);
  writeBundle(out, exportKwsBundle(model));
  console.log(JSON.stringify({
    out,
    epochs: log.epochLosses.length,
    final_loss: log.finalLoss,
    train_accuracy: accuracy,
  }));
  return 0;
}

async function cmdTrainEmb(flags: Flags): Promise<number> {
  const config = loadConfig<EmbTrainConfig>(EMB_DEFAULTS, flags);
  const seed = parseInt(flags["seed"] ?? "0", 10);
  const out = requireFlag(flags, "out");
  const corpus = loadCorpus(requireFlag(flags, "corpus"));
  console.error(`backend: ${await initBackend()}`);
  const { model, pretrainLosses, finetuneLosses } = trainEmbeddingModel(
    corpus, config, seed, (phase, epoch, loss) => {
      console.error(`${phase} epoch ${epoch}: loss ${loss.toFixed(5)}`);
    },
  );
  writeBundle(out, exportEmbBundle(model));
  console.log(JSON.stringify({
    out,
    pretrain_final_loss: pretrainLosses[pretrainLosses.length - 1],
    finetune_final_loss: finetuneLosses[finetuneLosses.length - 1],
  }));
  return 0;
}

async function cmdParity(flags: Flags): Promise<number> {
  const weights = requireFlag(flags, "weights");
  const kind = requireFlag(flags, "kind");
  if (kind !== "kws" && kind !== "emb") {
    throw new UsageError(`--kind must be kws or emb, got ${kind}`);
  }
  const n = parseInt(flags["n"] ?? "100", 10);
  const seed = parseInt(flags["seed"] ?? "0", 10);
  const result = exportParityCheck(weights, kind, n, seed);
  console.log(JSON.stringify(result));
  if (result.maxAbsDeviation >= 1e-4) {
    console.error(
      `parity failure: max deviation ${result.maxAbsDeviation} ` +
      `(worst input seed ${result.worstInputSeed})`,
    );
    return 1;
  }
  return 0;
}

const USAGE = `usage: vt-trainer <command> [flags]
  train-kws  --corpus DIR --out FILE [--seed N] [--config FILE]
  train-emb  --corpus DIR --out FILE [--seed N] [--config FILE]
  parity     --weights FILE --kind kws|emb [--n N] [--seed N]`;

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  try {
    const flags = parseFlags(rest);
    switch (command) {
      case "train-kws":
        return await cmdTrainKws(flags);
      case "train-emb":
        return await cmdTrainEmb(flags);
      case "parity":
        return await cmdParity(flags);
      default:
        console.error(USAGE);
        return 2;
    }
  } catch (err) {
    if (err instanceof UsageError) {
      console.error(`usage error: ${err.message}\n${USAGE}`);
      return 2;
    }
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

if (require.main === module) {
  main(process.argv.slice(2)).then((code) => process.exit(code));
}
