/**
 * Camera-math parity with the reference renderer (fixture values generated
 * by the Python implementation) plus the internal homography/reprojection
 * consistency property.
 */

import { readFile } from "node:fs/promises";
import { fileURLToPath } from "node:url";
import { beforeAll, describe, expect, it } from "vitest";

import {
  Camera, applyHomography, mat3Inv, median, orbitCamera, planeHomography,
  reprojectPoint,
} from "../src/geometry.js";

let expected: any;
let ref: Camera;

beforeAll(async () => {
  const path = fileURLToPath(new URL("./fixtures/expected.json", import.meta.url));
  expected = JSON.parse(await readFile(path, "utf-8"));
  const c = expected.camera;
  ref = {
    fx: c.fx, fy: c.fy, cx: c.cx, cy: c.cy,
    rotation: [1, 0, 0, 0, 1, 0, 0, 0, 1],
    translation: [0, 0, 0],
  };
});

describe("parity with the reference implementation", () => {
  it("reproduces orbit poses", () => {
    for (const fix of expected.cameras) {
      const cam = orbitCamera(ref, fix.yaw, fix.pitch, fix.baseline, 2.0);
      for (let i = 0; i < 9; i++) {
        expect(cam.rotation[i]).toBeCloseTo(fix.viewer_rotation[i], 12);
      }
      for (let i = 0; i < 3; i++) {
        expect(cam.translation[i]).toBeCloseTo(fix.viewer_translation[i], 12);
      }
    }
  });

  it("reproduces plane homographies", () => {
    for (const fix of expected.cameras) {
      const cam = orbitCamera(ref, fix.yaw, fix.pitch, fix.baseline, 2.0);
      const h = planeHomography(ref, cam, fix.depth);
      for (let i = 0; i < 9; i++) {
        expect(h[i]).toBeCloseTo(fix.h[i], 10);
      }
    }
  });

  it("reproduces point reprojections", () => {
    for (const fix of expected.cameras) {
      const cam = orbitCamera(ref, fix.yaw, fix.pitch, fix.baseline, 2.0);
      fix.pixels.forEach((px: number[], i: number) => {
        const got = reprojectPoint(ref, cam, px[0], px[1], fix.depth);
        expect(got.x).toBeCloseTo(fix.reprojected[i][0], 8);
        expect(got.y).toBeCloseTo(fix.reprojected[i][1], 8);
      });
    }
  });
});

describe("homography/reprojection consistency", () => {
  it("forward homography matches the pinhole chain on the plane", () => {
    let s = 7;
    const rand = () => (s = (s * 48271) % 2147483647) / 2147483647;
    for (let trial = 0; trial < 200; trial++) {
      const yaw = (rand() - 0.5) * 40;
      const pitch = (rand() - 0.5) * 24;
      const baseline = (rand() - 0.5) * 0.3;
      const z = 0.5 + rand() * 4;
      const cam = orbitCamera(ref, yaw, pitch, baseline, 1 + rand() * 4);
      const fwd = mat3Inv(planeHomography(ref, cam, z));  // source -> target
      const x = rand() * 32;
      const y = rand() * 24;
      const viaH = applyHomography(fwd, x, y);
      const viaChain = reprojectPoint(ref, cam, x, y, z);
      expect(viaH[0]).toBeCloseTo(viaChain.x, 6);
      expect(viaH[1]).toBeCloseTo(viaChain.y, 6);
    }
  });
});

describe("median", () => {
  it("handles odd and even counts", () => {
    expect(median([3, 1, 2])).toBe(2);
    expect(median([4, 1, 2, 3])).toBe(2.5);
  });
});
