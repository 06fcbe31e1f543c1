/**
 * CPU reference raymarcher.
 *
 * This is the behavioral oracle for the WebGL renderer: both implement the
 * same orthographic raycasting of the volume — first-crossing isosurface
 * extraction with trilinear sampling, emission-absorption direct volume
 * rendering, a view-space parallel clip plane, and optional surface
 * coloring by a paired scalar volume. Tests run against this
 * implementation; the GPU path mirrors it shader-side.
 */

import { RGB, colormapByName } from "./colormap.js";
import { Volume, sampleTrilinear, valueRange } from "./volumes.js";

export type Vec3 = [number, number, number];

export interface Camera {
  /** Orthographic: rays start on a plane through `eye` spanned by
   *  right/up, all pointing along `forward` (unit vectors). */
  eye: Vec3;
  forward: Vec3;
  right: Vec3;
  up: Vec3;
  width: number;       // pixels
  height: number;      // pixels
  pixelSize: number;   // world units per pixel
}

export interface ClipState {
  enabled: boolean;
  /** View-space depth in [0,1]: 0 clips nothing, 1 clips everything. */
  depth: number;
}

export interface SurfaceColoring {
  scalar: Volume;
  range?: [number, number];
  colormap?: string;
}

export interface RenderOptions {
  mode: "iso" | "dvr";
  iso?: number;
  clip?: ClipState;
  surface?: SurfaceColoring;
  colormap?: string;
  range?: [number, number];
  /** DVR opacity multiplier, default 1 ("initially set to one"). */
  opacity?: number;
  /** Deviation-style fade: values below lo or above hi fade out. */
  thresholds?: [number, number];
  stepScale?: number;  // march step in voxel units, default 0.5
}

export interface Frame {
  width: number;
  height: number;
  /** RGBA, row-major, y up; alpha 0 where the ray missed. */
  rgba: Float32Array;
  /** 1 where an isosurface was hit (iso mode). */
  hit: Uint8Array;
  /** World hit position per pixel (iso mode), NaN on miss. */
  hitPos: Float32Array;
}

function sub(a: Vec3, b: Vec3): Vec3 { return [a[0] - b[0], a[1] - b[1], a[2] - b[2]]; }
function dot(a: Vec3, b: Vec3): number { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
function mad(a: Vec3, b: Vec3, t: number): Vec3 {
  return [a[0] + b[0] * t, a[1] + b[1] * t, a[2] + b[2] * t];
}

export function volumeBox(vol: Volume): { lo: Vec3; hi: Vec3 } {
  const lo = vol.origin as Vec3;
  return {
    lo,
    hi: [
      lo[0] + vol.dims[0] * vol.spacing,
      lo[1] + vol.dims[1] * vol.spacing,
      lo[2] + vol.dims[2] * vol.spacing,
    ],
  };
}

/** Axis-aligned orthographic camera looking along -axis through the
 *  volume center, one voxel per `pixelsPerVoxel` pixels. */
export function axisAlignedCamera(
  vol: Volume, axis: 0 | 1 | 2, pixelsPerVoxel = 4,
): Camera {
  const { lo, hi } = volumeBox(vol);
  const center: Vec3 = [(lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2, (lo[2] + hi[2]) / 2];
  const fwd: Vec3 = [0, 0, 0];
  fwd[axis] = -1;
  const uAxis = (axis + 1) % 3, vAxis = (axis + 2) % 3;
  const right: Vec3 = [0, 0, 0];
  right[uAxis] = 1;
  const up: Vec3 = [0, 0, 0];
  up[vAxis] = 1;
  const extent = Math.max(
    hi[uAxis] - lo[uAxis], hi[vAxis] - lo[vAxis], hi[axis] - lo[axis]);
  const eye = [...center] as Vec3;
  eye[axis] = hi[axis] + extent;           // outside the box
  const pixelSize = vol.spacing / pixelsPerVoxel;
  const px = Math.ceil((extent * 1.25) / pixelSize);
  return { eye, forward: fwd, right, up, width: px, height: px, pixelSize };
}

function rayBox(o: Vec3, d: Vec3, lo: Vec3, hi: Vec3): [number, number] | null {
  let t0 = -Infinity, t1 = Infinity;
  for (let k = 0; k < 3; k++) {
    if (d[k] === 0) {
      if (o[k] < lo[k] || o[k] > hi[k]) return null;
      continue;
    }
    let ta = (lo[k] - o[k]) / d[k];
    let tb = (hi[k] - o[k]) / d[k];
    if (ta > tb) [ta, tb] = [tb, ta];
    t0 = Math.max(t0, ta);
    t1 = Math.min(t1, tb);
  }
  return t0 < t1 ? [Math.max(t0, 0), t1] : null;
}

function toVoxel(vol: Volume, p: Vec3): Vec3 {
  return [
    (p[0] - vol.origin[0]) / vol.spacing,
    (p[1] - vol.origin[1]) / vol.spacing,
    (p[2] - vol.origin[2]) / vol.spacing,
  ];
}

function sampleWorld(vol: Volume, p: Vec3, c = 0): number {
  const v = toVoxel(vol, p);
  return sampleTrilinear(vol, v[0], v[1], v[2], c);
}

/** Depth extent of the volume box along the camera's forward axis,
 *  measured from the eye plane; the clip plane sweeps this range. */
function depthExtent(cam: Camera, lo: Vec3, hi: Vec3): [number, number] {
  let dmin = Infinity, dmax = -Infinity;
  for (let i = 0; i < 8; i++) {
    const corner: Vec3 = [
      i & 1 ? hi[0] : lo[0], i & 2 ? hi[1] : lo[1], i & 4 ? hi[2] : lo[2],
    ];
    const d = dot(sub(corner, cam.eye), cam.forward);
    dmin = Math.min(dmin, d);
    dmax = Math.max(dmax, d);
  }
  return [dmin, dmax];
}

export function renderFrame(
  vol: Volume, cam: Camera, opts: RenderOptions,
): Frame {
  const { lo, hi } = volumeBox(vol);
  const iso = opts.iso ?? 0.5;
  const opacity = opts.opacity ?? 1.0;
  const step = (opts.stepScale ?? 0.5) * vol.spacing;
  const cmap = colormapByName(opts.colormap);
  const range = opts.range ?? valueRange(vol);
  const span = Math.max(range[1] - range[0], 1e-30);
  const [dmin, dmax] = depthExtent(cam, lo, hi);
  const clipDepth = opts.clip?.enabled
    ? dmin + (dmax - dmin) * Math.min(Math.max(opts.clip.depth, 0), 1)
    : -Infinity;
  const thresholds = opts.thresholds ?? [0, 1];

  const rgba = new Float32Array(cam.width * cam.height * 4);
  const hit = new Uint8Array(cam.width * cam.height);
  const hitPos = new Float32Array(cam.width * cam.height * 3).fill(NaN);

  const surfRange = opts.surface
    ? opts.surface.range ?? valueRange(opts.surface.scalar)
    : null;
  const surfCmap = opts.surface ? colormapByName(opts.surface.colormap) : null;

  for (let py = 0; py < cam.height; py++) {
    for (let px = 0; px < cam.width; px++) {
      const u = (px - (cam.width - 1) / 2) * cam.pixelSize;
      const v = (py - (cam.height - 1) / 2) * cam.pixelSize;
      const o: Vec3 = [
        cam.eye[0] + cam.right[0] * u + cam.up[0] * v,
        cam.eye[1] + cam.right[1] * u + cam.up[1] * v,
        cam.eye[2] + cam.right[2] * u + cam.up[2] * v,
      ];
      const seg = rayBox(o, cam.forward, lo, hi);
      const pix = py * cam.width + px;
      if (!seg) continue;
      let [t, t1] = seg;
      // advance past the clip plane (view-space parallel)
      if (clipDepth > -Infinity) {
        const entryDepth = t;  // forward is unit -> ray t equals view depth from o
        const oDepth = dot(sub(o, cam.eye), cam.forward);
        if (oDepth + t1 <= clipDepth) continue;
        if (oDepth + entryDepth < clipDepth) t = clipDepth - oDepth;
      }

      if (opts.mode === "iso") {
        let prevT = t;
        let prevV = sampleWorld(vol, mad(o, cam.forward, t));
        let found = false;
        // ray starts inside the surface (e.g. clipped interior): cap it
        if (prevV >= iso) {
          const p = mad(o, cam.forward, t);
          hit[pix] = 1;
          hitPos[3 * pix] = p[0];
          hitPos[3 * pix + 1] = p[1];
          hitPos[3 * pix + 2] = p[2];
          rgba[4 * pix] = 0.8;
          rgba[4 * pix + 1] = 0.8;
          rgba[4 * pix + 2] = 0.8;
          rgba[4 * pix + 3] = 1;
          found = true;
        }
        for (let s = t + step; s <= t1 + 1e-9 && !found; s += step) {
          const ss = Math.min(s, t1);
          const val = sampleWorld(vol, mad(o, cam.forward, ss));
          if ((prevV < iso) !== (val < iso) || val === iso) {
            const f = val === prevV ? 0 : (iso - prevV) / (val - prevV);
            const tHit = prevT + (ss - prevT) * f;
            const p = mad(o, cam.forward, tHit);
            hit[pix] = 1;
            hitPos[3 * pix] = p[0];
            hitPos[3 * pix + 1] = p[1];
            hitPos[3 * pix + 2] = p[2];
            let color: RGB = [0.8, 0.8, 0.8];
            if (opts.surface && surfRange && surfCmap) {
              const sv = sampleWorld(opts.surface.scalar, p);
              const tn = (sv - surfRange[0]) /
                Math.max(surfRange[1] - surfRange[0], 1e-30);
              color = surfCmap(tn);
            }
            rgba[4 * pix] = color[0];
            rgba[4 * pix + 1] = color[1];
            rgba[4 * pix + 2] = color[2];
            rgba[4 * pix + 3] = 1;
            found = true;
          }
          prevT = ss;
          prevV = val;
        }
      } else {
        // front-to-back emission-absorption compositing
        let r = 0, g = 0, b = 0, a = 0;
        for (let s = t; s <= t1 && a < 0.995; s += step) {
          const val = sampleWorld(vol, mad(o, cam.forward, s));
          let tn = (val - range[0]) / span;
          tn = Math.min(Math.max(tn, 0), 1);
          let fade = 1.0;
          if (tn < thresholds[0] || tn > thresholds[1]) fade = 0.0;
          const sampleA =
            Math.min(opacity * tn * fade * (step / vol.spacing), 1);
          const c = cmap(tn);
          r += (1 - a) * sampleA * c[0];
          g += (1 - a) * sampleA * c[1];
          b += (1 - a) * sampleA * c[2];
          a += (1 - a) * sampleA;
        }
        rgba[4 * pix] = r;
        rgba[4 * pix + 1] = g;
        rgba[4 * pix + 2] = b;
        rgba[4 * pix + 3] = a;
      }
    }
  }
  return { width: cam.width, height: cam.height, rgba, hit, hitPos };
}

/** Equivalent-circle radius (pixels) of the hit mask — silhouette measure. */
export function silhouetteRadius(frame: Frame): number {
  let n = 0;
  for (let i = 0; i < frame.hit.length; i++) n += frame.hit[i];
  return Math.sqrt(n / Math.PI);
}
