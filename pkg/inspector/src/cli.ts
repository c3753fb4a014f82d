#!/usr/bin/env node
/**
 * syn-inspect: stand-alone SYNF container tooling.
 *
 *   syn-inspect validate <file>
 *   syn-inspect render <file> --frame K --out img.png --extent 80 [--fsat 1.0]
 *
 * Exit codes: 0 clean, 1 violations found or runtime failure, 2 bad usage.
 */

import { writeFileSync } from "node:fs";

import { loadSequence } from "./container.js";
import { renderFlowImage } from "./render.js";
import { validateFrame } from "./validate.js";

function usage(): never {
  console.error(
    "usage:\n" +
      "  syn-inspect validate <file>\n" +
      "  syn-inspect render <file> --frame K --out img.png --extent 80 [--fsat F]",
  );
  process.exit(2);
}

function flagValue(args: string[], name: string): string | undefined {
  const at = args.indexOf(name);
  if (at === -1) {
    return undefined;
  }
  if (at + 1 >= args.length) {
    usage();
  }
  return args[at + 1];
}

function cmdValidate(args: string[]): number {
  const file = args[0];
  if (!file) {
    usage();
  }
  const reader = loadSequence(file);
  let total = 0;
  try {
    for (let i = 0; i < reader.frameCount; i++) {
      const violations = validateFrame(reader.readFrame(i));
      for (const v of violations) {
        console.log(`frame ${i} point ${v.pointIndex}: [${v.rule}] ${v.detail}`);
      }
      total += violations.length;
    }
  } finally {
    reader.close();
  }
  if (total === 0) {
    console.log(`OK: ${reader.frameCount} frames, no violations`);
    return 0;
  }
  console.log(`${total} violation(s) found`);
  return 1;
}

function cmdRender(args: string[]): number {
  const file = args[0];
  const frameArg = flagValue(args, "--frame");
  const outArg = flagValue(args, "--out");
  const extentArg = flagValue(args, "--extent");
  if (!file || frameArg === undefined || !outArg || extentArg === undefined) {
    usage();
  }
  const fSat = flagValue(args, "--fsat");
  const reader = loadSequence(file);
  try {
    const frame = reader.readFrame(Number(frameArg));
    const png = renderFlowImage(frame, {
      extent: Number(extentArg),
      fSat: fSat === undefined ? undefined : Number(fSat),
    });
    writeFileSync(outArg, png);
    console.log(`wrote ${outArg} (${png.length} bytes, ${frame.n} points)`);
  } finally {
    reader.close();
  }
  return 0;
}

function main(): number {
  const [command, ...rest] = process.argv.slice(2);
  try {
    switch (command) {
      case "validate":
        return cmdValidate(rest);
      case "render":
        return cmdRender(rest);
      default:
        usage();
    }
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

process.exit(main());
