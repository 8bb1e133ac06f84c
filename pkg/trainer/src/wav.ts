/** Minimal RIFF/WAVE reader for the 16 kHz PCM16 files the corpus uses. */

import * as fs from "fs";

export interface WavData {
  sampleRate: number;
  channels: number;
  /** One Float64Array per channel, samples scaled by 1/32768. */
  samples: Float64Array[];
}

const PCM_SCALE = 32768;

export function parseWav(buf: Buffer, label: string): WavData {
  if (buf.length < 12 || buf.toString("ascii", 0, 4) !== "RIFF" ||
      buf.toString("ascii", 8, 12) !== "WAVE") {
    throw new Error(`${label}: not a RIFF/WAVE file`);
  }
  let pos = 12;
  let sampleRate = 0;
  let channels = 0;
  let bits = 0;
  let data: Buffer | null = null;
  while (pos + 8 <= buf.length) {
    const id = buf.toString("ascii", pos, pos + 4);
    const size = buf.readUInt32LE(pos + 4);
    const body = buf.subarray(pos + 8, pos + 8 + size);
    if (id === "fmt ") {
      const format = body.readUInt16LE(0);
      if (format !== 1) throw new Error(`${label}: audio_format ${format} is not PCM`);
      channels = body.readUInt16LE(2);
      sampleRate = body.readUInt32LE(4);
      bits = body.readUInt16LE(14);
    } else if (id === "data") {
      data = body;
    }
    pos += 8 + size + (size % 2); // chunks are word-aligned
  }
  if (data === null || channels === 0) throw new Error(`${label}: missing fmt or data chunk`);
  if (bits !== 16) throw new Error(`${label}: bits_per_sample ${bits}, need 16`);
  if (sampleRate !== 16000) throw new Error(`${label}: sample_rate ${sampleRate}, need 16000`);
  const frames = Math.floor(data.length / (2 * channels));
  const out: Float64Array[] = [];
  for (let c = 0; c < channels; c++) out.push(new Float64Array(frames));
  for (let i = 0; i < frames; i++) {
    for (let c = 0; c < channels; c++) {
      out[c][i] = data.readInt16LE(2 * (i * channels + c)) / PCM_SCALE;
    }
  }
  return { sampleRate, channels, samples: out };
}

export function readWav(path: string): WavData {
  return parseWav(fs.readFileSync(path), path);
}
