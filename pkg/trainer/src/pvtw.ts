/** PVTW weight bundles: the binary contract between trainer and engine.
 *
 * Layout (little-endian): magic "PVTW", u32 version=1, u32 config length,
 * UTF-8 JSON config, u32 tensor count, then per tensor u16 name length,
 * name, u8 rank, rank u32 dims, f32 data.
 */

import * as fs from "fs";

export const MAGIC = "PVTW";
export const VERSION = 1;

export interface Tensor {
  dims: number[];
  data: Float32Array;
}

export interface Bundle {
  config: Record<string, unknown>;
  tensors: Map<string, Tensor>;
  version: number;
}

function prod(dims: number[]): number {
  return dims.reduce((a, b) => a * b, 1);
}

/** JSON with recursively sorted object keys, matching the engine's writer. */
function sortedJson(value: unknown): string {
  if (Array.isArray(value)) {
    return "[" + value.map(sortedJson).join(", ") + "]";
  }
  if (value !== null && typeof value === "object") {
    const keys = Object.keys(value as object).sort();
    const body = keys.map(
      (k) => JSON.stringify(k) + ": " + sortedJson((value as Record<string, unknown>)[k]),
    );
    return "{" + body.join(", ") + "}";
  }
  return JSON.stringify(value);
}

export function writeBundle(path: string, bundle: Bundle): void {
  const cfg = Buffer.from(sortedJson(bundle.config), "utf-8");
  const parts: Buffer[] = [];
  const head = Buffer.alloc(12);
  head.write(MAGIC, 0, "ascii");
  head.writeUInt32LE(bundle.version, 4);
  head.writeUInt32LE(cfg.length, 8);
  parts.push(head, cfg);
  const count = Buffer.alloc(4);
  count.writeUInt32LE(bundle.tensors.size, 0);
  parts.push(count);
  for (const [name, tensor] of bundle.tensors) {
    if (tensor.data.length !== prod(tensor.dims)) {
      throw new Error(`tensor ${name}: ${tensor.data.length} values for dims ${tensor.dims}`);
    }
    const nb = Buffer.from(name, "utf-8");
    const header = Buffer.alloc(2 + nb.length + 1 + 4 * tensor.dims.length);
    header.writeUInt16LE(nb.length, 0);
    nb.copy(header, 2);
    header.writeUInt8(tensor.dims.length, 2 + nb.length);
    tensor.dims.forEach((d, i) => header.writeUInt32LE(d, 2 + nb.length + 1 + 4 * i));
    parts.push(header, Buffer.from(tensor.data.buffer, tensor.data.byteOffset, 4 * tensor.data.length));
  }
  fs.writeFileSync(path, Buffer.concat(parts));
}

export function readBundle(path: string): Bundle {
  const buf = fs.readFileSync(path);
  let pos = 0;
  const take = (n: number): Buffer => {
    if (pos + n > buf.length) {
      throw new Error(`${path}: truncated file (wanted ${n} bytes at offset ${pos})`);
    }
    const out = buf.subarray(pos, pos + n);
    pos += n;
    return out;
  };
  if (take(4).toString("ascii") !== MAGIC) {
    throw new Error(`${path}: bad magic bytes (not a PVTW file)`);
  }
  const version = take(4).readUInt32LE(0);
  if (version !== VERSION) throw new Error(`${path}: unsupported version ${version}`);
  const cfgLen = take(4).readUInt32LE(0);
  const config = JSON.parse(take(cfgLen).toString("utf-8"));
  const tensorCount = take(4).readUInt32LE(0);
  const tensors = new Map<string, Tensor>();
  for (let i = 0; i < tensorCount; i++) {
    const nameLen = take(2).readUInt16LE(0);
    const name = take(nameLen).toString("utf-8");
    if (tensors.has(name)) throw new Error(`${path}: duplicate tensor name ${name}`);
    const rank = take(1).readUInt8(0);
    const dims: number[] = [];
    for (let r = 0; r < rank; r++) dims.push(take(4).readUInt32LE(0));
    const count = prod(dims);
    const raw = take(4 * count);
    const data = new Float32Array(count);
    for (let j = 0; j < count; j++) {
      const v = raw.readFloatLE(4 * j);
      if (!Number.isFinite(v)) throw new Error(`${path}: tensor ${name} has non-finite values`);
      data[j] = v;
    }
    tensors.set(name, { dims, data });
  }
  return { config, tensors, version };
}

export function tensor(bundle: Bundle, name: string): Tensor {
  const t = bundle.tensors.get(name);
  if (t === undefined) throw new Error(`missing tensor ${name}`);
  return t;
}
