/**
 * CpslBundle parser: magic "CPSL" + u32 version, then length-prefixed chunks
 * MANI (canonical JSON manifest), LAYR x K (per-layer frame streams), EDCS
 * (boundary samples, 6 bytes each) and CONF (per-frame layer confidences).
 * Little-endian throughout. Mirrors the Python container read path, including
 * its error taxonomy, so broken fixtures surface as typed errors rather than
 * crashes.
 */

export class CorruptContainerError extends Error {}
export class VersionMismatchError extends Error {}
export class TruncatedStreamError extends Error {}
export class CodecUnsupportedError extends Error {}

export const SCHEMA_VERSION = 1;

export interface CameraDict {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  rotation: number[];
  translation: number[];
}

export interface FrameMeta {
  frame_index: number;
  layer_depths: number[];
  saliency: number[];
  instance_ids: number[][];
}

export interface Manifest {
  schema_version: number;
  width: number;
  height: number;
  k: number;
  frame_count: number;
  camera: CameraDict;
  codec: string;
  qualities: number[];
  rates: number[] | null;
  dz_min: number;
  dz_max: number;
  gop_table: { frame: number; type: string }[];
  frames: FrameMeta[];
}

export interface LayerFrame {
  width: number;
  height: number;
  /** Interleaved premultiplied RGBA float32, h*w*4, values in [0, 1]. */
  rgba: Float32Array;
}

export interface EdcSample {
  x: number;
  y: number;
  frontLayer: number;
  backLayer: number;
  dzQuant: number;
}

export interface Bundle {
  manifest: Manifest;
  /** frames[frame][layer] */
  frames: LayerFrame[][];
  /** edc[frame] */
  edc: EdcSample[][];
  /** conf[frame] is k confidences */
  conf: Float32Array[];
}

const MAGIC = 0x4c535043; // "CPSL" read little-endian

async function inflate(data: Uint8Array): Promise<Uint8Array> {
  // zlib-wrapped deflate, as emitted by the packer.
  const ds = new DecompressionStream("deflate");
  const stream = new Blob([data as BlobPart]).stream().pipeThrough(ds);
  try {
    const buf = await new Response(stream).arrayBuffer();
    return new Uint8Array(buf);
  } catch (e) {
    throw new CorruptContainerError(`layer frame corrupt: ${e}`);
  }
}

function decodeLossless(blob: Uint8Array): Promise<LayerFrame> {
  if (blob.length < 4) {
    throw new TruncatedStreamError("layer frame blob too short");
  }
  const dv = new DataView(blob.buffer, blob.byteOffset, blob.byteLength);
  const h = dv.getUint16(0, true);
  const w = dv.getUint16(2, true);
  return inflate(blob.subarray(4)).then((raw) => {
    if (raw.length !== 16 * h * w) {
      throw new TruncatedStreamError("layer frame payload truncated");
    }
    // Planar (4, h, w) float32 -> interleaved h*w*4.
    const planar = new Float32Array(raw.buffer, raw.byteOffset, 4 * h * w);
    const rgba = new Float32Array(4 * h * w);
    const n = h * w;
    for (let i = 0; i < n; i++) {
      rgba[4 * i] = planar[i];
      rgba[4 * i + 1] = planar[n + i];
      rgba[4 * i + 2] = planar[2 * n + i];
      rgba[4 * i + 3] = planar[3 * n + i];
    }
    return { width: w, height: h, rgba };
  });
}

function resizeBilinear(
  src: Float32Array, sh: number, sw: number, dh: number, dw: number,
): Float32Array {
  const out = new Float32Array(dh * dw);
  const sy = sh / dh;
  const sx = sw / dw;
  for (let y = 0; y < dh; y++) {
    const fy = Math.min(Math.max((y + 0.5) * sy - 0.5, 0), sh - 1);
    const y0 = Math.floor(fy);
    const y1 = Math.min(y0 + 1, sh - 1);
    const wy = fy - y0;
    for (let x = 0; x < dw; x++) {
      const fx = Math.min(Math.max((x + 0.5) * sx - 0.5, 0), sw - 1);
      const x0 = Math.floor(fx);
      const x1 = Math.min(x0 + 1, sw - 1);
      const wx = fx - x0;
      out[y * dw + x] =
        (1 - wy) * ((1 - wx) * src[y0 * sw + x0] + wx * src[y0 * sw + x1]) +
        wy * ((1 - wx) * src[y1 * sw + x0] + wx * src[y1 * sw + x1]);
    }
  }
  return out;
}

function decodeLossy(blob: Uint8Array): Promise<LayerFrame> {
  if (blob.length < 6) {
    throw new TruncatedStreamError("layer frame blob too short");
  }
  const dv = new DataView(blob.buffer, blob.byteOffset, blob.byteLength);
  const h = dv.getUint16(0, true);
  const w = dv.getUint16(2, true);
  const q = dv.getUint8(4);
  const subsample = dv.getUint8(5) !== 0;
  const levels = 2 ** (q + 1) - 1;
  const ch = subsample ? Math.max(h >> 1, 1) : h;
  const cw = subsample ? Math.max(w >> 1, 1) : w;
  return inflate(blob.subarray(6)).then((raw) => {
    const n = h * w;
    const cn = ch * cw;
    if (raw.length !== 2 * (2 * n + 2 * cn)) {
      throw new TruncatedStreamError("layer frame payload truncated");
    }
    const codes = new Uint16Array(raw.buffer, raw.byteOffset, 2 * n + 2 * cn);
    const dq = (off: number, count: number, lo: number, hi: number) => {
      const out = new Float32Array(count);
      for (let i = 0; i < count; i++) {
        out[i] = (codes[off + i] / levels) * (hi - lo) + lo;
      }
      return out;
    };
    const y = dq(0, n, 0, 1);
    const alpha = dq(n, n, 0, 1);
    let cb: Float32Array = dq(2 * n, cn, -1, 1);
    let cr: Float32Array = dq(2 * n + cn, cn, -1, 1);
    if (subsample) {
      cb = resizeBilinear(cb, ch, cw, h, w);
      cr = resizeBilinear(cr, ch, cw, h, w);
    }
    const rgba = new Float32Array(4 * n);
    for (let i = 0; i < n; i++) {
      const a = Math.min(Math.max(alpha[i], 0), 1);
      const r0 = y[i] + cr[i];
      const b0 = y[i] + cb[i];
      const g0 = 3 * y[i] - r0 - b0;
      const clamp = (v: number) => Math.min(Math.max(v, 0), 1, a);
      const r = clamp(r0);
      const g = clamp(g0);
      const b = clamp(b0);
      rgba[4 * i] = r;
      rgba[4 * i + 1] = g;
      rgba[4 * i + 2] = b;
      rgba[4 * i + 3] = a;
    }
    return { width: w, height: h, rgba };
  });
}

const DECODERS: Record<string, (blob: Uint8Array) => Promise<LayerFrame>> = {
  lossless: decodeLossless,
  lossy: decodeLossy,
};

interface Chunk {
  tag: string;
  payload: Uint8Array;
}

function* readChunks(data: Uint8Array): Generator<Chunk> {
  const dv = new DataView(data.buffer, data.byteOffset, data.byteLength);
  let pos = 0;
  while (pos < data.length) {
    if (pos + 12 > data.length) {
      throw new TruncatedStreamError("chunk header truncated");
    }
    const tag = String.fromCharCode(
      data[pos], data[pos + 1], data[pos + 2], data[pos + 3]);
    const length = Number(dv.getBigUint64(pos + 4, true));
    pos += 12;
    if (pos + length > data.length) {
      throw new TruncatedStreamError(`chunk ${tag} truncated`);
    }
    yield { tag, payload: data.subarray(pos, pos + length) };
    pos += length;
  }
}

function parseManifest(payload: Uint8Array): Manifest {
  let manifest: Manifest;
  try {
    manifest = JSON.parse(new TextDecoder("utf-8", { fatal: true }).decode(payload));
  } catch (e) {
    throw new CorruptContainerError(`manifest unreadable: ${e}`);
  }
  if (
    typeof manifest !== "object" || manifest === null ||
    typeof manifest.k !== "number" || typeof manifest.frame_count !== "number"
  ) {
    throw new CorruptContainerError("manifest missing required fields");
  }
  return manifest;
}

function parseEdc(raw: Uint8Array, nFrames: number): EdcSample[][] {
  const dv = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
  const out: EdcSample[][] = [];
  let pos = 0;
  for (let f = 0; f < nFrames; f++) {
    if (pos + 4 > raw.length) {
      throw new TruncatedStreamError("EDC sidecar truncated");
    }
    const count = dv.getUint32(pos, true);
    pos += 4;
    const samples: EdcSample[] = [];
    for (let i = 0; i < count; i++) {
      if (pos + 6 > raw.length) {
        throw new TruncatedStreamError("EDC sample truncated");
      }
      const fb = dv.getUint8(pos + 4);
      samples.push({
        x: dv.getUint16(pos, true),
        y: dv.getUint16(pos + 2, true),
        frontLayer: fb >> 4,
        backLayer: fb & 0xf,
        dzQuant: dv.getUint8(pos + 5),
      });
      pos += 6;
    }
    out.push(samples);
  }
  return out;
}

/** Parse a complete bundle from raw bytes. */
export async function parseBundle(buffer: ArrayBuffer): Promise<Bundle> {
  const data = new Uint8Array(buffer);
  const dv = new DataView(buffer);
  if (data.length < 8 || dv.getUint32(0, true) !== MAGIC) {
    throw new CorruptContainerError("bad magic bytes");
  }
  const version = dv.getUint32(4, true);
  if (version !== SCHEMA_VERSION) {
    throw new VersionMismatchError(`schema version ${version} unsupported`);
  }
  let manifest: Manifest | null = null;
  const layrChunks: Uint8Array[] = [];
  let edcsRaw: Uint8Array | null = null;
  let confRaw: Uint8Array | null = null;
  for (const { tag, payload } of readChunks(data.subarray(8))) {
    if (tag === "MANI") manifest = parseManifest(payload);
    else if (tag === "LAYR") layrChunks.push(payload);
    else if (tag === "EDCS") edcsRaw = payload;
    else if (tag === "CONF") confRaw = payload;
  }
  if (manifest === null) {
    throw new CorruptContainerError("missing manifest chunk");
  }
  const { k, frame_count: nFrames } = manifest;
  if (layrChunks.length !== k) {
    throw new CorruptContainerError(
      `manifest promises ${k} layer streams, found ${layrChunks.length}`);
  }
  const decode = DECODERS[manifest.codec];
  if (!decode) {
    throw new CodecUnsupportedError(`unknown codec: ${manifest.codec}`);
  }

  const perLayer: LayerFrame[][] = [];
  for (const stream of layrChunks) {
    const sdv = new DataView(stream.buffer, stream.byteOffset, stream.byteLength);
    const frames: Promise<LayerFrame>[] = [];
    let pos = 0;
    for (let f = 0; f < nFrames; f++) {
      if (pos + 8 > stream.length) {
        throw new TruncatedStreamError("layer stream truncated");
      }
      const length = Number(sdv.getBigUint64(pos, true));
      pos += 8;
      if (pos + length > stream.length) {
        throw new TruncatedStreamError("layer frame truncated");
      }
      frames.push(decode(stream.subarray(pos, pos + length)));
      pos += length;
    }
    perLayer.push(await Promise.all(frames));
  }

  const frames: LayerFrame[][] = [];
  for (let f = 0; f < nFrames; f++) {
    frames.push(perLayer.map((stream) => stream[f]));
  }

  const edc = edcsRaw !== null ? parseEdc(edcsRaw, nFrames) : [];

  const conf: Float32Array[] = [];
  if (confRaw !== null) {
    const expect = 4 * k * nFrames;
    if (confRaw.length < expect) {
      throw new TruncatedStreamError("confidence sidecar truncated");
    }
    for (let f = 0; f < nFrames; f++) {
      const slice = confRaw.slice(4 * k * f, 4 * k * (f + 1));
      conf.push(new Float32Array(slice.buffer, 0, k));
    }
  }

  return { manifest, frames, edc, conf };
}

/** Fetch a bundle over HTTP (e.g. the serve endpoint /bundles/{id}/raw). */
export async function loadBundle(url: string): Promise<Bundle> {
  const resp = await fetch(url);
  if (!resp.ok) {
    throw new CorruptContainerError(`fetch failed: HTTP ${resp.status}`);
  }
  return parseBundle(await resp.arrayBuffer());
}
