/**
 * Parsers for the benchmark's binary volume formats.
 *
 * Label volumes:  "SGLDVOX1" | 3*u32 dims | f32 spacing | 3*f32 origin
 *                 | nx*ny*nz u8 labels, x-fastest.
 * Float volumes:  "SGLDF32\0" | u32 ncomp | 3*u32 dims | f32 spacing
 *                 | 3*f32 origin | ncomp*nx*ny*nz f32, component-fastest
 *                 per cell, cells x-fastest.
 * All little-endian.
 */

export class FormatError extends Error {}

export interface Volume {
  kind: "labels" | "scalar";
  dims: [number, number, number];
  spacing: number;
  origin: [number, number, number];
  ncomp: number;
  /** x-fastest flat data, normalized to Float32Array (labels cast to f32). */
  data: Float32Array;
}

const VOX_MAGIC = "SGLDVOX1";
const F32_MAGIC = "SGLDF32\0";

function magicOf(view: DataView): string {
  let s = "";
  for (let i = 0; i < 8; i++) s += String.fromCharCode(view.getUint8(i));
  return s;
}

export function parseVox(buf: ArrayBuffer): Volume {
  const view = new DataView(buf);
  if (buf.byteLength < 36 || magicOf(view) !== VOX_MAGIC) {
    throw new FormatError("not an SGLDVOX1 volume");
  }
  const dims: [number, number, number] = [
    view.getUint32(8, true), view.getUint32(12, true), view.getUint32(16, true),
  ];
  const spacing = view.getFloat32(20, true);
  const origin: [number, number, number] = [
    view.getFloat32(24, true), view.getFloat32(28, true), view.getFloat32(32, true),
  ];
  const n = dims[0] * dims[1] * dims[2];
  if (buf.byteLength !== 36 + n) {
    throw new FormatError(
      `payload size ${buf.byteLength - 36} does not match dims ` +
      `${dims.join("x")} = ${n}`);
  }
  const bytes = new Uint8Array(buf, 36, n);
  const data = new Float32Array(n);
  for (let i = 0; i < n; i++) data[i] = bytes[i];
  return { kind: "labels", dims, spacing, origin, ncomp: 1, data };
}

export function parseF32(buf: ArrayBuffer): Volume {
  const view = new DataView(buf);
  if (buf.byteLength < 40 || magicOf(view) !== F32_MAGIC) {
    throw new FormatError("not an SGLDF32 volume");
  }
  const ncomp = view.getUint32(8, true);
  const dims: [number, number, number] = [
    view.getUint32(12, true), view.getUint32(16, true), view.getUint32(20, true),
  ];
  const spacing = view.getFloat32(24, true);
  const origin: [number, number, number] = [
    view.getFloat32(28, true), view.getFloat32(32, true), view.getFloat32(36, true),
  ];
  const n = dims[0] * dims[1] * dims[2] * ncomp;
  if (buf.byteLength !== 40 + 4 * n) {
    throw new FormatError(`payload size ${(buf.byteLength - 40) / 4} != ${n}`);
  }
  const data = new Float32Array(n);
  for (let i = 0; i < n; i++) data[i] = view.getFloat32(40 + 4 * i, true);
  return { kind: "scalar", dims, spacing, origin, ncomp, data };
}

export function parseVolume(buf: ArrayBuffer): Volume {
  const view = new DataView(buf);
  if (buf.byteLength >= 8 && magicOf(view) === VOX_MAGIC) return parseVox(buf);
  return parseF32(buf);
}

/**
 * Trilinear sample at a continuous voxel-grid position (units of voxels,
 * cell centers at integer+0.5). Out-of-range coordinates clamp to the
 * border value, component `c` of multi-component volumes.
 */
export function sampleTrilinear(
  vol: Volume, x: number, y: number, z: number, c = 0,
): number {
  const [nx, ny, nz] = vol.dims;
  const fx = Math.min(Math.max(x - 0.5, 0), nx - 1);
  const fy = Math.min(Math.max(y - 0.5, 0), ny - 1);
  const fz = Math.min(Math.max(z - 0.5, 0), nz - 1);
  const x0 = Math.min(Math.floor(fx), nx - 2 < 0 ? 0 : nx - 2);
  const y0 = Math.min(Math.floor(fy), ny - 2 < 0 ? 0 : ny - 2);
  const z0 = Math.min(Math.floor(fz), nz - 2 < 0 ? 0 : nz - 2);
  const tx = fx - x0, ty = fy - y0, tz = fz - z0;
  const stride = vol.ncomp;
  const at = (i: number, j: number, k: number): number =>
    vol.data[stride * (i + nx * (j + ny * k)) + c];
  const x1 = nx > 1 ? x0 + 1 : x0;
  const y1 = ny > 1 ? y0 + 1 : y0;
  const z1 = nz > 1 ? z0 + 1 : z0;
  const c00 = at(x0, y0, z0) * (1 - tx) + at(x1, y0, z0) * tx;
  const c10 = at(x0, y1, z0) * (1 - tx) + at(x1, y1, z0) * tx;
  const c01 = at(x0, y0, z1) * (1 - tx) + at(x1, y0, z1) * tx;
  const c11 = at(x0, y1, z1) * (1 - tx) + at(x1, y1, z1) * tx;
  const cy0 = c00 * (1 - ty) + c10 * ty;
  const cy1 = c01 * (1 - ty) + c11 * ty;
  return cy0 * (1 - tz) + cy1 * tz;
}

/** Data range of a component (for colormap normalization). */
export function valueRange(vol: Volume, c = 0): [number, number] {
  let lo = Infinity, hi = -Infinity;
  for (let i = c; i < vol.data.length; i += vol.ncomp) {
    const v = vol.data[i];
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  return [lo, hi];
}
