/**
 * Top-down flow rendering: direction as hue, magnitude as saturation.
 *
 * Valid dynamic points are painted in full-value HSV color (hue from the
 * planar flow direction, saturation = min(|flow| / fSat, 1)); valid static
 * and background points are gray; invalid points are not painted.
 */

import type { LoadedFrame } from "./container.js";
import { encodePng } from "./png.js";

export interface RenderOptions {
  /** Side length of the square window in meters (centered on the sensor). */
  extent: number;
  /** Flow magnitude (m per frame) that saturates the color map. */
  fSat?: number;
  /** Output image side length in pixels. */
  size?: number;
}

const GRAY = 128;

export function hsvToRgb(h: number, s: number, v: number): [number, number, number] {
  const c = v * s;
  const hp = (((h % 360) + 360) % 360) / 60;
  const x = c * (1 - Math.abs((hp % 2) - 1));
  let r = 0;
  let g = 0;
  let b = 0;
  if (hp < 1) [r, g, b] = [c, x, 0];
  else if (hp < 2) [r, g, b] = [x, c, 0];
  else if (hp < 3) [r, g, b] = [0, c, x];
  else if (hp < 4) [r, g, b] = [0, x, c];
  else if (hp < 5) [r, g, b] = [x, 0, c];
  else [r, g, b] = [c, 0, x];
  const m = v - c;
  return [
    Math.round((r + m) * 255),
    Math.round((g + m) * 255),
    Math.round((b + m) * 255),
  ];
}

export function renderFlowImage(frame: LoadedFrame, opts: RenderOptions): Buffer {
  const { extent } = opts;
  if (!(extent > 0)) {
    throw new Error("extent must be positive");
  }
  const size = opts.size ?? 512;
  const fSat = opts.fSat ?? 1.0;
  const rgb = new Uint8Array(size * size * 3); // black background

  const half = extent / 2;
  const scale = size / extent;

  const paint = (x: number, y: number, color: [number, number, number]) => {
    const col = Math.floor((x + half) * scale);
    const row = Math.floor((half - y) * scale);
    if (col < 0 || col >= size || row < 0 || row >= size) {
      return;
    }
    const at = (row * size + col) * 3;
    rgb[at] = color[0];
    rgb[at + 1] = color[1];
    rgb[at + 2] = color[2];
  };

  // Static and background first, dynamic on top so movers stay visible.
  for (let i = 0; i < frame.n; i++) {
    if (frame.valid[i] === 1 && frame.dynamic[i] === 0) {
      paint(frame.points[3 * i], frame.points[3 * i + 1], [GRAY, GRAY, GRAY]);
    }
  }
  for (let i = 0; i < frame.n; i++) {
    if (frame.valid[i] !== 1 || frame.dynamic[i] !== 1) {
      continue;
    }
    const fx = frame.flow[3 * i];
    const fy = frame.flow[3 * i + 1];
    const fz = frame.flow[3 * i + 2];
    const mag = Math.sqrt(fx * fx + fy * fy + fz * fz);
    const hue = (Math.atan2(fy, fx) * 180) / Math.PI;
    const sat = Math.min(mag / fSat, 1.0);
    paint(frame.points[3 * i], frame.points[3 * i + 1], hsvToRgb(hue, sat, 1.0));
  }

  return encodePng(size, size, rgb, {
    extent: String(extent),
    meters_per_pixel: String(extent / size),
  });
}
