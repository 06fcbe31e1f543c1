import { describe, expect, it } from "vitest";
import { join } from "node:path";

import { whiteBrown } from "../src/colormap.js";
import {
  axisAlignedCamera, renderFrame, silhouetteRadius, volumeBox,
} from "../src/raymarch.js";
import { parseF32, parseVox, sampleTrilinear, Volume } from "../src/volumes.js";
import { GOLDEN, readBuf } from "./helpers.js";

const sphere = parseVox(readBuf(join(GOLDEN, "material.vox")));
const ramp = parseF32(readBuf(join(GOLDEN, "ramp.f32")));

// 4 pixels per voxel along z: the analytic r=5 silhouette is 20 px
const cam = axisAlignedCamera(sphere, 2, 4);

describe("isosurface rendering", () => {
  it("sphere silhouette radius is within 1 px of analytic", () => {
    const frame = renderFrame(sphere, cam, { mode: "iso", iso: 0.5 });
    const r = silhouetteRadius(frame);
    expect(Math.abs(r - 20)).toBeLessThan(1.0);
  });

  it("never mutates the volume", () => {
    const before = sphere.data.slice();
    renderFrame(sphere, cam, { mode: "iso", iso: 0.5 });
    renderFrame(sphere, cam, {
      mode: "dvr", opacity: 0.7, clip: { enabled: true, depth: 0.3 },
    });
    expect(sphere.data).toEqual(before);
  });

  it("hit points lie on the iso shell", () => {
    const frame = renderFrame(sphere, cam, { mode: "iso", iso: 0.5 });
    const { lo, hi } = volumeBox(sphere);
    const c = [(lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2, (lo[2] + hi[2]) / 2];
    let checked = 0;
    for (let i = 0; i < frame.hit.length; i++) {
      if (!frame.hit[i]) continue;
      const p = [frame.hitPos[3 * i], frame.hitPos[3 * i + 1],
                 frame.hitPos[3 * i + 2]];
      const r = Math.hypot(p[0] - c[0], p[1] - c[1], p[2] - c[2]);
      expect(r).toBeGreaterThan(3.5);
      expect(r).toBeLessThan(6.5);
      checked++;
    }
    expect(checked).toBeGreaterThan(1000);
  });

  it("surface color equals the colormapped paired scalar at the hit", () => {
    const frame = renderFrame(sphere, cam, {
      mode: "iso", iso: 0.5,
      surface: { scalar: ramp, range: [0, 1] },
    });
    let checked = 0;
    for (let i = 0; i < frame.hit.length; i += 7) {
      if (!frame.hit[i]) continue;
      const x = frame.hitPos[3 * i], y = frame.hitPos[3 * i + 1],
            z = frame.hitPos[3 * i + 2];
      const sv = sampleTrilinear(ramp, x, y, z);
      const [r, g, b] = whiteBrown(sv);
      expect(frame.rgba[4 * i]).toBeCloseTo(r, 6);
      expect(frame.rgba[4 * i + 1]).toBeCloseTo(g, 6);
      expect(frame.rgba[4 * i + 2]).toBeCloseTo(b, 6);
      checked++;
    }
    expect(checked).toBeGreaterThan(100);
  });
});

describe("clip plane", () => {
  it("depth 0 matches no clipping", () => {
    const a = renderFrame(sphere, cam, { mode: "iso", iso: 0.5 });
    const b = renderFrame(sphere, cam, {
      mode: "iso", iso: 0.5, clip: { enabled: true, depth: 0 },
    });
    expect(b.hit).toEqual(a.hit);
  });

  it("depth 1 clips everything", () => {
    const frame = renderFrame(sphere, cam, {
      mode: "iso", iso: 0.5, clip: { enabled: true, depth: 1 },
    });
    expect(frame.hit.every((h) => h === 0)).toBe(true);
    expect(frame.rgba.every((v) => v === 0)).toBe(true);
  });

  it("depth 0.5 caps the sphere at its great circle", () => {
    const frame = renderFrame(sphere, cam, {
      mode: "iso", iso: 0.5, clip: { enabled: true, depth: 0.5 },
    });
    // cap hits sit on the clip plane: z == box center
    const zs: number[] = [];
    for (let i = 0; i < frame.hit.length; i++) {
      if (frame.hit[i]) zs.push(frame.hitPos[3 * i + 2]);
    }
    expect(zs.length).toBeGreaterThan(1000);
    // the silhouette is unchanged (the great circle has the full radius)
    expect(Math.abs(silhouetteRadius(frame) - 20)).toBeLessThan(1.0);
    // and a large share of hits lie exactly on the plane z = 8
    const onPlane = zs.filter((z) => Math.abs(z - 8) < 1e-6).length;
    expect(onPlane / zs.length).toBeGreaterThan(0.5);
  });
});

function constantVolume(value: number): Volume {
  const data = new Float32Array(16 ** 3).fill(value);
  return {
    kind: "scalar", dims: [16, 16, 16], spacing: 1,
    origin: [0, 0, 0], ncomp: 1, data,
  };
}

describe("direct volume rendering", () => {
  it("zero opacity composites to nothing", () => {
    const frame = renderFrame(ramp, cam, {
      mode: "dvr", opacity: 0, range: [0, 1],
    });
    expect(frame.rgba.every((v) => v === 0)).toBe(true);
  });

  it("an all-zero field composites to nothing", () => {
    const frame = renderFrame(constantVolume(0), cam, {
      mode: "dvr", opacity: 1, range: [0, 1],
    });
    expect(frame.rgba.every((v) => v === 0)).toBe(true);
  });

  it("opacity is monotone in the x ramp", () => {
    // low opacity keeps every column below the early-exit saturation cap,
    // where compositing order effects would break strict monotonicity
    const frame = renderFrame(ramp, cam, {
      mode: "dvr", opacity: 0.05, range: [0, 1],
    });
    // center row: alpha must be nondecreasing left to right inside the box
    const row = Math.floor(frame.height / 2);
    const alphas: number[] = [];
    for (let px = 0; px < frame.width; px++) {
      const a = frame.rgba[4 * (row * frame.width + px) + 3];
      if (a > 0) alphas.push(a);
    }
    expect(alphas.length).toBeGreaterThan(30);
    for (let i = 1; i < alphas.length; i++) {
      expect(alphas[i]).toBeGreaterThanOrEqual(alphas[i - 1] - 1e-6);
    }
    expect(alphas[alphas.length - 1]).toBeGreaterThan(alphas[0]);
  });

  it("thresholds fade out values outside [lo, hi]", () => {
    const frame = renderFrame(ramp, cam, {
      mode: "dvr", opacity: 1, range: [0, 1], thresholds: [0.5, 1.0],
    });
    const row = Math.floor(frame.height / 2);
    // pixels over the low-x half of the volume must be fully transparent
    const { lo } = volumeBox(ramp);
    for (let px = 0; px < frame.width; px++) {
      const u = (px - (frame.width - 1) / 2) * cam.pixelSize;
      const x = cam.eye[0] + cam.right[0] * u;   // right is +x for this camera
      if (x > lo[0] && x < lo[0] + 6.0) {
        expect(frame.rgba[4 * (row * frame.width + px) + 3]).toBe(0);
      }
    }
  });

  it("colors run white to brown with the built-in map", () => {
    const frame = renderFrame(constantVolume(1), cam, {
      mode: "dvr", opacity: 1, range: [0, 1],
    });
    const row = Math.floor(frame.height / 2);
    const pix = row * frame.width + Math.floor(frame.width / 2);
    const a = frame.rgba[4 * pix + 3];
    expect(a).toBeGreaterThan(0.99);
    // saturated tn=1 -> dark brown
    expect(frame.rgba[4 * pix] / a).toBeCloseTo(0.35, 2);
    expect(frame.rgba[4 * pix + 2] / a).toBeCloseTo(0.04, 2);
  });
});
