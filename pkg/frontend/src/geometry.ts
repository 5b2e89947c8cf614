// Camera math shared by the live viewer and its tests. Conventions mirror
// the render service: world y is up, forward is +z, the equirectangular map
// is theta = (0.5 - u/W)*2pi (longitude) and phi = (0.5 - v/H)*pi
// (latitude), and screen-right at yaw = 0 looks toward -x.

export type Vec3 = [number, number, number];

/** Row-major 3x3 matrix. */
export type Mat3 = Float64Array;

export function mat3Identity(): Mat3 {
  return new Float64Array([1, 0, 0, 0, 1, 0, 0, 0, 1]);
}

export function mat3Mul(a: Mat3, b: Mat3): Mat3 {
  const out = new Float64Array(9);
  for (let r = 0; r < 3; r++) {
    for (let c = 0; c < 3; c++) {
      out[3 * r + c] =
        a[3 * r] * b[c] + a[3 * r + 1] * b[3 + c] + a[3 * r + 2] * b[6 + c];
    }
  }
  return out;
}

export function mat3Transpose(a: Mat3): Mat3 {
  return new Float64Array([a[0], a[3], a[6], a[1], a[4], a[7], a[2], a[5], a[8]]);
}

export function mat3Apply(a: Mat3, v: Vec3): Vec3 {
  return [
    a[0] * v[0] + a[1] * v[1] + a[2] * v[2],
    a[3] * v[0] + a[4] * v[1] + a[5] * v[2],
    a[6] * v[0] + a[7] * v[1] + a[8] * v[2],
  ];
}

/**
 * View rotation from yaw (about world +y) and pitch (positive looks up).
 * A product of two elementary rotations, so orthonormal by construction.
 */
export function viewRotation(yaw: number, pitch: number): Mat3 {
  const cy = Math.cos(yaw);
  const sy = Math.sin(yaw);
  const cp = Math.cos(pitch);
  const sp = Math.sin(pitch);
  const ry = new Float64Array([cy, 0, sy, 0, 1, 0, -sy, 0, cy]);
  const rx = new Float64Array([1, 0, 0, 0, cp, sp, 0, -sp, cp]);
  return mat3Mul(ry, rx);
}

/** Row-major camera-to-world 4x4 as the render API expects it. */
export function buildC2w(position: Vec3, yaw: number, pitch: number): number[] {
  const r = viewRotation(yaw, pitch);
  return [
    r[0], r[1], r[2], position[0],
    r[3], r[4], r[5], position[1],
    r[6], r[7], r[8], position[2],
    0, 0, 0, 1,
  ];
}

/** Horizontal movement basis for WASD in the current heading. */
export function movementAxes(yaw: number): { forward: Vec3; right: Vec3; up: Vec3 } {
  const r = viewRotation(yaw, 0);
  const forward = mat3Apply(r, [0, 0, 1]);
  // screen-right is -x in the camera frame (matches the panorama layout)
  const right = mat3Apply(r, [-1, 0, 0]);
  return { forward, right, up: [0, 1, 0] };
}

export interface PanoramaPixels {
  width: number;
  height: number;
  /** RGBA, row-major from the top row. */
  data: Uint8ClampedArray;
}

function sampleErp(pano: PanoramaPixels, u: number, v: number, out: Uint8ClampedArray, o: number) {
  const { width: w, height: h, data } = pano;
  const x = u - 0.5;
  let x0 = Math.floor(x);
  const wx = x - x0;
  const c0 = ((x0 % w) + w) % w;
  const c1 = (c0 + 1) % w;
  const y = Math.min(Math.max(v, 0), h) - 0.5;
  const y0 = Math.floor(y);
  const wy = y - y0;
  const r0 = Math.min(Math.max(y0, 0), h - 1);
  const r1 = Math.min(Math.max(y0 + 1, 0), h - 1);
  for (let ch = 0; ch < 3; ch++) {
    const top = (1 - wx) * data[4 * (r0 * w + c0) + ch] + wx * data[4 * (r0 * w + c1) + ch];
    const bot = (1 - wx) * data[4 * (r1 * w + c0) + ch] + wx * data[4 * (r1 * w + c1) + ch];
    out[o + ch] = (1 - wy) * top + wy * bot;
  }
  out[o + 3] = 255;
}

/**
 * Re-project the panorama for the current view, entirely client side.
 *
 * `relative` maps camera-frame rays into the frame the panorama was
 * rendered in (inverse pano rotation times view rotation).
 */
export function samplePanorama(
  pano: PanoramaPixels,
  relative: Mat3,
  outWidth: number,
  outHeight: number,
  fovDeg: number,
): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(new ArrayBuffer(outWidth * outHeight * 4));
  const focal = outWidth / 2 / Math.tan(((fovDeg / 2) * Math.PI) / 180);
  for (let j = 0; j < outHeight; j++) {
    const b = (j + 0.5 - outHeight / 2) / focal;
    for (let i = 0; i < outWidth; i++) {
      const a = (i + 0.5 - outWidth / 2) / focal;
      // camera frame: right = -x, down = -y, forward = +z
      const d: Vec3 = [-a, -b, 1];
      const w = mat3Apply(relative, d);
      const norm = Math.hypot(w[0], w[1], w[2]);
      const theta = Math.atan2(w[0], w[2]);
      const phi = Math.asin(Math.min(1, Math.max(-1, w[1] / norm)));
      const u = (((0.5 - theta / (2 * Math.PI)) * pano.width) % pano.width + pano.width) % pano.width;
      const v = Math.min(Math.max((0.5 - phi / Math.PI) * pano.height, 0), pano.height);
      sampleErp(pano, u, v, out, 4 * (j * outWidth + i));
    }
  }
  return out;
}

export function clampPitch(pitch: number): number {
  const limit = Math.PI / 2 - 1e-3;
  return Math.min(Math.max(pitch, -limit), limit);
}
