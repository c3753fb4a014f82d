/**
 * Independent SYNF sequence-container reader, written against the published
 * byte layout only (no code shared with the generator):
 *
 *   header:  magic "SYNF" | schema_version u32 | meta_length u64 |
 *            meta (UTF-8 JSON) | n_frames u32 |
 *            index: n_frames x (offset u64, length u64) | header CRC32C u32
 *   frame:   frame_index u32 | timestamp f64 | ego_pose 7 x f64 (wxyz,t) |
 *            N u32 | points Nx3 f32 | flow Nx3 f32 | tags N u32 |
 *            classes N u8 | beam_ids N u8 | category N u8 |
 *            valid ceil(N/8) LSB-first | dynamic ceil(N/8) | CRC32C u32
 *
 * All integers little-endian; index offsets are absolute file positions and
 * lengths include the trailing frame CRC.
 */

import { closeSync, openSync, readSync, statSync } from "node:fs";

import { crc32c } from "./crc32c.js";

export class ContainerError extends Error {}
export class BadMagicError extends ContainerError {}
export class UnsupportedSchemaError extends ContainerError {}
export class ChecksumError extends ContainerError {}
export class TruncatedFileError extends ContainerError {}

export const SCHEMA_VERSION = 1;

export interface SequenceMeta {
  schemaVersion: number;
  seed: number;
  nFrames: number;
  dt: number;
  town: Record<string, unknown>;
  beam: Record<string, unknown>;
  agents: unknown[];
  generatorVersion: string;
  /** The exact JSON text as stored, for byte-level comparisons. */
  rawJson: string;
}

export interface LoadedFrame {
  frameIndex: number;
  timestamp: number;
  /** qw, qx, qy, qz, tx, ty, tz of the sensor-to-world pose. */
  egoPose: Float64Array;
  n: number;
  points: Float32Array; // n*3
  flow: Float32Array; // n*3
  tags: Uint32Array;
  classes: Uint8Array;
  beamIds: Uint8Array;
  category: Uint8Array;
  valid: Uint8Array; // 0/1 per point
  dynamic: Uint8Array;
}

interface IndexEntry {
  offset: number;
  length: number;
}

function unpackBits(bytes: Uint8Array, count: number): Uint8Array {
  const out = new Uint8Array(count);
  for (let i = 0; i < count; i++) {
    out[i] = (bytes[i >> 3] >> (i & 7)) & 1; // LSB-first
  }
  return out;
}

export function parseFrame(blob: Buffer, what = "frame"): LoadedFrame {
  if (blob.length < 4) {
    throw new TruncatedFileError(`${what}: shorter than its checksum`);
  }
  const body = blob.subarray(0, blob.length - 4);
  const stored = blob.readUInt32LE(blob.length - 4);
  if (crc32c(body) !== stored) {
    throw new ChecksumError(`${what}: checksum mismatch`);
  }
  const dv = new DataView(body.buffer, body.byteOffset, body.byteLength);
  let pos = 0;
  const need = (n: number) => {
    if (pos + n > body.length) {
      throw new TruncatedFileError(`${what}: ran out of bytes`);
    }
  };
  need(4 + 8 + 56 + 4);
  const frameIndex = dv.getUint32(pos, true);
  pos += 4;
  const timestamp = dv.getFloat64(pos, true);
  pos += 8;
  const egoPose = new Float64Array(7);
  for (let i = 0; i < 7; i++) {
    egoPose[i] = dv.getFloat64(pos, true);
    pos += 8;
  }
  const n = dv.getUint32(pos, true);
  pos += 4;

  const maskBytes = Math.ceil(n / 8);
  need(12 * n + 12 * n + 4 * n + 3 * n + 2 * maskBytes);

  const points = new Float32Array(n * 3);
  for (let i = 0; i < n * 3; i++) {
    points[i] = dv.getFloat32(pos, true);
    pos += 4;
  }
  const flow = new Float32Array(n * 3);
  for (let i = 0; i < n * 3; i++) {
    flow[i] = dv.getFloat32(pos, true);
    pos += 4;
  }
  const tags = new Uint32Array(n);
  for (let i = 0; i < n; i++) {
    tags[i] = dv.getUint32(pos, true);
    pos += 4;
  }
  const classes = Uint8Array.from(body.subarray(pos, pos + n));
  pos += n;
  const beamIds = Uint8Array.from(body.subarray(pos, pos + n));
  pos += n;
  const category = Uint8Array.from(body.subarray(pos, pos + n));
  pos += n;
  const valid = unpackBits(body.subarray(pos, pos + maskBytes), n);
  pos += maskBytes;
  const dynamic = unpackBits(body.subarray(pos, pos + maskBytes), n);
  pos += maskBytes;
  if (pos !== body.length) {
    throw new TruncatedFileError(`${what}: trailing bytes in record`);
  }
  return {
    frameIndex,
    timestamp,
    egoPose,
    n,
    points,
    flow,
    tags,
    classes,
    beamIds,
    category,
    valid,
    dynamic,
  };
}

export class SequenceReader {
  private fd: number;

  constructor(
    readonly path: string,
    readonly meta: SequenceMeta,
    private index: IndexEntry[],
  ) {
    this.fd = openSync(path, "r");
  }

  get frameCount(): number {
    return this.index.length;
  }

  readFrame(i: number): LoadedFrame {
    if (i < 0 || i >= this.index.length) {
      throw new RangeError(`frame index ${i} out of range [0, ${this.index.length})`);
    }
    const { offset, length } = this.index[i];
    const blob = Buffer.alloc(length);
    const got = readSync(this.fd, blob, 0, length, offset);
    if (got !== length) {
      throw new TruncatedFileError(`${this.path}: frame ${i} ends early`);
    }
    return parseFrame(blob, `${this.path} frame ${i}`);
  }

  *frames(): Generator<LoadedFrame> {
    for (let i = 0; i < this.index.length; i++) {
      yield this.readFrame(i);
    }
  }

  close(): void {
    closeSync(this.fd);
  }
}

export function loadSequence(path: string): SequenceReader {
  const size = statSync(path).size;
  const fd = openSync(path, "r");
  try {
    const headProbe = Buffer.alloc(16);
    const got = readSync(fd, headProbe, 0, 16, 0);
    if (got < 4 || headProbe.toString("latin1", 0, 4) !== "SYNF") {
      throw new BadMagicError(`${path}: not a SYNF container`);
    }
    if (got < 16) {
      throw new TruncatedFileError(`${path}: header cut short`);
    }
    const schemaVersion = headProbe.readUInt32LE(4);
    if (schemaVersion !== SCHEMA_VERSION) {
      throw new UnsupportedSchemaError(`${path}: schema ${schemaVersion} unsupported`);
    }
    const metaLength = Number(headProbe.readBigUInt64LE(8));
    const fixed = 4 + 4 + 8;
    const headerSizeNoIndex = fixed + metaLength + 4;
    if (size < headerSizeNoIndex + 4) {
      throw new TruncatedFileError(`${path}: header cut short`);
    }
    const head1 = Buffer.alloc(headerSizeNoIndex);
    readSync(fd, head1, 0, headerSizeNoIndex, 0);
    const metaJson = head1.toString("utf8", fixed, fixed + metaLength);
    const nFrames = head1.readUInt32LE(fixed + metaLength);
    const headerSize = headerSizeNoIndex + 16 * nFrames + 4;
    if (size < headerSize) {
      throw new TruncatedFileError(`${path}: index cut short`);
    }
    const header = Buffer.alloc(headerSize);
    readSync(fd, header, 0, headerSize, 0);
    const storedCrc = header.readUInt32LE(headerSize - 4);
    if (crc32c(header.subarray(0, headerSize - 4)) !== storedCrc) {
      throw new ChecksumError(`${path}: header checksum mismatch`);
    }
    const index: IndexEntry[] = [];
    let pos = headerSizeNoIndex;
    for (let i = 0; i < nFrames; i++) {
      const offset = Number(header.readBigUInt64LE(pos));
      const length = Number(header.readBigUInt64LE(pos + 8));
      index.push({ offset, length });
      pos += 16;
    }
    if (index.length > 0) {
      const last = index[index.length - 1];
      if (size < last.offset + last.length) {
        throw new TruncatedFileError(
          `${path}: ${size} bytes, expected ${last.offset + last.length}`,
        );
      }
    }
    const parsed = JSON.parse(metaJson) as Record<string, unknown>;
    const meta: SequenceMeta = {
      schemaVersion,
      seed: parsed.seed as number,
      nFrames: parsed.n_frames as number,
      dt: parsed.dt as number,
      town: parsed.town as Record<string, unknown>,
      beam: parsed.beam as Record<string, unknown>,
      agents: parsed.agents as unknown[],
      generatorVersion: parsed.generator_version as string,
      rawJson: metaJson,
    };
    return new SequenceReader(path, meta, index);
  } finally {
    closeSync(fd);
  }
}
