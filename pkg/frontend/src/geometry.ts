/**
 * Camera math mirroring the Python renderer: pinhole cameras with a
 * world-to-camera pose (X_cam = R X_world + t) and the plane-induced
 * homography between two views of a fronto-parallel layer plane.
 *
 * Matrices are row-major number arrays; Mat3 is length 9.
 */

export type Mat3 = number[];
export type Vec3 = [number, number, number];

export interface Camera {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  rotation: Mat3;
  translation: Vec3;
}

export class DegenerateCameraError extends Error {}

export function mat3Mul(a: Mat3, b: Mat3): Mat3 {
  const out = new Array<number>(9);
  for (let r = 0; r < 3; r++) {
    for (let c = 0; c < 3; c++) {
      out[3 * r + c] =
        a[3 * r] * b[c] + a[3 * r + 1] * b[3 + c] + a[3 * r + 2] * b[6 + c];
    }
  }
  return out;
}

export function mat3MulVec(a: Mat3, v: Vec3): Vec3 {
  return [
    a[0] * v[0] + a[1] * v[1] + a[2] * v[2],
    a[3] * v[0] + a[4] * v[1] + a[5] * v[2],
    a[6] * v[0] + a[7] * v[1] + a[8] * v[2],
  ];
}

export function mat3Transpose(a: Mat3): Mat3 {
  return [a[0], a[3], a[6], a[1], a[4], a[7], a[2], a[5], a[8]];
}

export function mat3Det(a: Mat3): number {
  return (
    a[0] * (a[4] * a[8] - a[5] * a[7]) -
    a[1] * (a[3] * a[8] - a[5] * a[6]) +
    a[2] * (a[3] * a[7] - a[4] * a[6])
  );
}

export function mat3Inv(a: Mat3): Mat3 {
  const det = mat3Det(a);
  if (Math.abs(det) <= 1e-12) {
    throw new DegenerateCameraError("matrix is singular");
  }
  const inv = [
    a[4] * a[8] - a[5] * a[7],
    a[2] * a[7] - a[1] * a[8],
    a[1] * a[5] - a[2] * a[4],
    a[5] * a[6] - a[3] * a[8],
    a[0] * a[8] - a[2] * a[6],
    a[2] * a[3] - a[0] * a[5],
    a[3] * a[7] - a[4] * a[6],
    a[1] * a[6] - a[0] * a[7],
    a[0] * a[4] - a[1] * a[3],
  ];
  return inv.map((v) => v / det);
}

export function intrinsics(cam: Camera): Mat3 {
  return [cam.fx, 0, cam.cx, 0, cam.fy, cam.cy, 0, 0, 1];
}

export function intrinsicsInv(cam: Camera): Mat3 {
  return [
    1 / cam.fx, 0, -cam.cx / cam.fx,
    0, 1 / cam.fy, -cam.cy / cam.fy,
    0, 0, 1,
  ];
}

/** Rigid transform taking points in `src`'s frame to `dst`'s frame. */
export function relativeTo(src: Camera, dst: Camera): { r: Mat3; t: Vec3 } {
  const r = mat3Mul(dst.rotation, mat3Transpose(src.rotation));
  const rt = mat3MulVec(r, src.translation);
  const t: Vec3 = [
    dst.translation[0] - rt[0],
    dst.translation[1] - rt[1],
    dst.translation[2] - rt[2],
  ];
  return { r, t };
}

/**
 * Homography relating views of the fronto-parallel source plane at depth zk.
 * Returned matrix maps target (dst) pixels to source pixels, normalized so
 * H[2][2] = 1, matching the Python renderer bit for bit up to float error.
 */
export function planeHomography(src: Camera, dst: Camera, zk: number): Mat3 {
  if (zk <= 0) throw new RangeError("plane depth must be positive");
  const { r, t } = relativeTo(src, dst);
  // Forward map src -> dst for points on the plane n.X = zk, n = (0,0,1).
  const rtn = r.slice();
  rtn[2] += t[0] / zk;
  rtn[5] += t[1] / zk;
  rtn[8] += t[2] / zk;
  const m = mat3Mul(mat3Mul(intrinsics(dst), rtn), intrinsicsInv(src));
  if (Math.abs(mat3Det(m)) <= 1e-12) {
    throw new DegenerateCameraError("plane passes through the target camera center");
  }
  let h = mat3Inv(m);
  if (Math.abs(h[8]) > 1e-12) {
    h = h.map((v) => v / h[8]);
  }
  return h;
}

/** Apply a homography to a pixel; returns target [x, y]. */
export function applyHomography(h: Mat3, x: number, y: number): [number, number] {
  const q = mat3MulVec(h, [x, y, 1]);
  return [q[0] / q[2], q[1] / q[2]];
}

/** Exact pinhole chain: source pixel at depth z to target pixel + depth. */
export function reprojectPoint(
  src: Camera, dst: Camera, x: number, y: number, z: number,
): { x: number; y: number; depth: number } {
  if (z <= 0) throw new RangeError("depth must be positive");
  const ray = mat3MulVec(intrinsicsInv(src), [x, y, 1]);
  const xs: Vec3 = [ray[0] * z, ray[1] * z, ray[2] * z];
  const { r, t } = relativeTo(src, dst);
  const rx = mat3MulVec(r, xs);
  const xt: Vec3 = [rx[0] + t[0], rx[1] + t[1], rx[2] + t[2]];
  const q = mat3MulVec(intrinsics(dst), xt);
  return { x: q[0] / q[2], y: q[1] / q[2], depth: xt[2] };
}

/** Camera orbiting the point at pivotDepth on the reference optical axis. */
export function orbitCamera(
  ref: Camera, yawDeg: number, pitchDeg: number,
  baseline: number, pivotDepth: number,
): Camera {
  const yaw = (yawDeg * Math.PI) / 180;
  const pitch = (pitchDeg * Math.PI) / 180;
  const ry: Mat3 = [
    Math.cos(yaw), 0, Math.sin(yaw),
    0, 1, 0,
    -Math.sin(yaw), 0, Math.cos(yaw),
  ];
  const rx: Mat3 = [
    1, 0, 0,
    0, Math.cos(pitch), -Math.sin(pitch),
    0, Math.sin(pitch), Math.cos(pitch),
  ];
  const r = mat3Mul(rx, ry);
  const pivot: Vec3 = [0, 0, pivotDepth];
  const back = mat3MulVec(mat3Transpose(r), pivot);
  const center: Vec3 = [
    pivot[0] - back[0] + baseline,
    pivot[1] - back[1],
    pivot[2] - back[2],
  ];
  const diff: Vec3 = [
    ref.translation[0] - center[0],
    ref.translation[1] - center[1],
    ref.translation[2] - center[2],
  ];
  return {
    fx: ref.fx, fy: ref.fy, cx: ref.cx, cy: ref.cy,
    rotation: mat3Mul(r, ref.rotation),
    translation: mat3MulVec(r, diff),
  };
}

export function median(values: number[]): number {
  const s = values.slice().sort((a, b) => a - b);
  const m = s.length >> 1;
  return s.length % 2 ? s[m] : 0.5 * (s[m - 1] + s[m]);
}
