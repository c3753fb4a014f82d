import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { gunzipSync } from "node:zlib";

import { describe, expect, it } from "vitest";

import {
  BadMagicError,
  ChecksumError,
  TruncatedFileError,
  UnsupportedSchemaError,
  loadSequence,
} from "../src/container.js";
import { crc32c } from "../src/crc32c.js";

const FIXTURES = join(__dirname, "..", "fixtures");

interface DumpFrame {
  frame_index: number;
  timestamp_bits: string;
  n: number;
  ego_pose_b64: string;
  points_b64: string;
  flow_b64: string;
  tags_b64: string;
  classes_b64: string;
  beam_ids_b64: string;
  category_b64: string;
  valid: number[];
  dynamic: number[];
}

interface Dump {
  meta_json: string;
  frames: DumpFrame[];
}

function loadDump(name: string): Dump {
  return JSON.parse(gunzipSync(readFileSync(join(FIXTURES, name))).toString());
}

function f32BytesLE(a: Float32Array): Buffer {
  const out = Buffer.alloc(a.length * 4);
  for (let i = 0; i < a.length; i++) {
    out.writeFloatLE(a[i], i * 4);
  }
  return out;
}

function f64BytesLE(a: Float64Array): Buffer {
  const out = Buffer.alloc(a.length * 8);
  for (let i = 0; i < a.length; i++) {
    out.writeDoubleLE(a[i], i * 8);
  }
  return out;
}

function u32BytesLE(a: Uint32Array): Buffer {
  const out = Buffer.alloc(a.length * 4);
  for (let i = 0; i < a.length; i++) {
    out.writeUInt32LE(a[i], i * 4);
  }
  return out;
}

function f64Bits(x: number): string {
  const b = Buffer.alloc(8);
  b.writeDoubleLE(x, 0);
  return b.readBigUInt64LE(0).toString(16).padStart(16, "0");
}

function parityCheck(fixture: string, dumpName: string) {
  const reader = loadSequence(join(FIXTURES, fixture));
  const dump = loadDump(dumpName);
  let mismatches = 0;
  const miss = (cond: boolean) => {
    if (!cond) mismatches++;
  };
  try {
    miss(reader.meta.rawJson === dump.meta_json);
    miss(reader.frameCount === dump.frames.length);
    for (let i = 0; i < reader.frameCount; i++) {
      const got = reader.readFrame(i);
      const want = dump.frames[i];
      miss(got.frameIndex === want.frame_index);
      miss(f64Bits(got.timestamp) === want.timestamp_bits);
      miss(got.n === want.n);
      miss(f64BytesLE(got.egoPose).equals(Buffer.from(want.ego_pose_b64, "base64")));
      miss(f32BytesLE(got.points).equals(Buffer.from(want.points_b64, "base64")));
      miss(f32BytesLE(got.flow).equals(Buffer.from(want.flow_b64, "base64")));
      miss(u32BytesLE(got.tags).equals(Buffer.from(want.tags_b64, "base64")));
      miss(Buffer.from(got.classes).equals(Buffer.from(want.classes_b64, "base64")));
      miss(Buffer.from(got.beamIds).equals(Buffer.from(want.beam_ids_b64, "base64")));
      miss(Buffer.from(got.category).equals(Buffer.from(want.category_b64, "base64")));
      miss(Array.from(got.valid).join(",") === want.valid.join(","));
      miss(Array.from(got.dynamic).join(",") === want.dynamic.join(","));
    }
  } finally {
    reader.close();
  }
  return mismatches;
}

describe("crc32c", () => {
  it("matches the RFC 3720 check value", () => {
    expect(crc32c(Buffer.from("123456789"))).toBe(0xe3069283);
  });
});

describe("cross-implementation parity", () => {
  it("parses the hand-built fixture with zero value mismatches", () => {
    expect(parityCheck("clean_small.synf", "dump_clean_small.json.gz")).toBe(0);
  });

  it("parses the pipeline fixture with zero value mismatches", () => {
    expect(parityCheck("pipeline.synf", "dump_pipeline.json.gz")).toBe(0);
  });

  it("handles the empty middle frame", () => {
    const reader = loadSequence(join(FIXTURES, "clean_small.synf"));
    expect(reader.readFrame(1).n).toBe(0);
    reader.close();
  });

  it("supports random access in any order", () => {
    const reader = loadSequence(join(FIXTURES, "clean_small.synf"));
    const last = reader.readFrame(2);
    const first = reader.readFrame(0);
    expect(last.frameIndex).toBe(2);
    expect(first.frameIndex).toBe(0);
    expect(() => reader.readFrame(3)).toThrow(RangeError);
    reader.close();
  });
});

describe("error taxonomy", () => {
  const raw = readFileSync(join(FIXTURES, "clean_small.synf"));
  const dir = mkdtempSync(join(tmpdir(), "syninspect-"));

  function writeCorrupt(name: string, mutate: (b: Buffer) => void): string {
    const copy = Buffer.from(raw);
    mutate(copy);
    const p = join(dir, name);
    writeFileSync(p, copy);
    return p;
  }

  it("rejects a wrong magic", () => {
    const p = writeCorrupt("magic.synf", (b) => {
      b[0] = 0x58;
    });
    expect(() => loadSequence(p)).toThrow(BadMagicError);
  });

  it("rejects an unknown schema version", () => {
    const p = writeCorrupt("schema.synf", (b) => {
      b.writeUInt32LE(9, 4);
    });
    expect(() => loadSequence(p)).toThrow(UnsupportedSchemaError);
  });

  it("detects header corruption by checksum", () => {
    const p = writeCorrupt("header.synf", (b) => {
      b[20] ^= 0xff; // inside the meta JSON
    });
    expect(() => loadSequence(p)).toThrow(ChecksumError);
  });

  it("detects frame corruption by checksum", () => {
    // Locate frame 0 via the index: it starts right after the header.
    const metaLength = Number(raw.readBigUInt64LE(8));
    const idx = 4 + 4 + 8 + metaLength + 4;
    const frameOffset = Number(raw.readBigUInt64LE(idx));
    const p = writeCorrupt("frame.synf", (b) => {
      b[frameOffset + 20] ^= 0x01;
    });
    const reader = loadSequence(p); // header still valid
    expect(() => reader.readFrame(0)).toThrow(ChecksumError);
    reader.close();
  });

  it("detects truncation", () => {
    const p = join(dir, "trunc.synf");
    writeFileSync(p, raw.subarray(0, raw.length - 50));
    expect(() => loadSequence(p)).toThrow(TruncatedFileError);
  });

  it("detects a header cut short", () => {
    const p = join(dir, "tiny.synf");
    writeFileSync(p, raw.subarray(0, 10));
    expect(() => loadSequence(p)).toThrow(TruncatedFileError);
  });
});
