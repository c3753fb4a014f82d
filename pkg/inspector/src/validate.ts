/**
 * Re-assert labeling invariants on loaded frames, independently of the
 * generator: static points carry exactly zero flow, dynamic points are
 * valid, and tag / class / category columns agree with each other.
 */

import type { LoadedFrame } from "./container.js";

/** class value (1..6) -> metric category value (1..4); 0 is background. */
const CLASS_TO_CATEGORY: Record<number, number> = {
  1: 1, // car -> CAR
  2: 2, // truck -> OTHER
  3: 2, // bus -> OTHER
  4: 4, // motorcycle -> VRU
  5: 4, // bicycle -> VRU
  6: 3, // pedestrian -> PED
};

export interface Violation {
  rule: string;
  pointIndex: number;
  detail: string;
}

export function validateFrame(frame: LoadedFrame): Violation[] {
  const out: Violation[] = [];
  const { n, tags, flow, valid, dynamic, classes, category } = frame;
  for (let i = 0; i < n; i++) {
    const tag = tags[i];
    const fx = flow[3 * i];
    const fy = flow[3 * i + 1];
    const fz = flow[3 * i + 2];

    if (tag === 0 && (fx !== 0 || fy !== 0 || fz !== 0)) {
      out.push({
        rule: "static-zero-flow",
        pointIndex: i,
        detail: `tag 0 point has flow (${fx}, ${fy}, ${fz})`,
      });
    }
    if (dynamic[i] === 1 && valid[i] !== 1) {
      out.push({
        rule: "dynamic-implies-valid",
        pointIndex: i,
        detail: "dynamic point is not valid",
      });
    }
    if (tag === 0) {
      if (category[i] !== 0) {
        out.push({
          rule: "tag-category-consistency",
          pointIndex: i,
          detail: `background point has category ${category[i]}`,
        });
      }
      if (classes[i] !== 0) {
        out.push({
          rule: "tag-class-consistency",
          pointIndex: i,
          detail: `background point has class ${classes[i]}`,
        });
      }
    } else {
      const expected = CLASS_TO_CATEGORY[classes[i]];
      if (expected === undefined) {
        out.push({
          rule: "tag-class-consistency",
          pointIndex: i,
          detail: `tagged point has class ${classes[i]}`,
        });
      } else if (category[i] !== expected) {
        out.push({
          rule: "tag-category-consistency",
          pointIndex: i,
          detail: `class ${classes[i]} point has category ${category[i]}, expected ${expected}`,
        });
      }
    }
  }
  return out;
}
