import { describe, expect, it } from "vitest";
import { join } from "node:path";

import {
  FormatError, parseF32, parseVolume, parseVox, sampleTrilinear, valueRange,
  Volume,
} from "../src/volumes.js";
import { GOLDEN, readBuf } from "./helpers.js";

const voxBuf = readBuf(join(GOLDEN, "material.vox"));
const f32Buf = readBuf(join(GOLDEN, "ramp.f32"));

describe("label volume parsing", () => {
  it("reads the golden sphere header", () => {
    const vol = parseVox(voxBuf);
    expect(vol.kind).toBe("labels");
    expect(vol.dims).toEqual([16, 16, 16]);
    expect(vol.spacing).toBe(1.0);
    expect(vol.origin).toEqual([0, 0, 0]);
    expect(vol.ncomp).toBe(1);
    expect(vol.data.length).toBe(16 ** 3);
  });

  it("sphere occupancy matches the generator (552 voxels)", () => {
    const vol = parseVox(voxBuf);
    let n = 0;
    for (const v of vol.data) n += v;
    expect(n).toBe(552);
  });

  it("is x-fastest: center row crosses the sphere", () => {
    const vol = parseVox(voxBuf);
    // y = z = 8 row: inside for |x - 7.5| <= 5 at integer indices
    const at = (x: number) => vol.data[x + 16 * (8 + 16 * 8)];
    expect(at(0)).toBe(0);
    expect(at(7)).toBe(1);
    expect(at(15)).toBe(0);
  });

  it("rejects a bad magic", () => {
    const bad = new Uint8Array(voxBuf.slice(0));
    bad[0] = 0x58;
    expect(() => parseVox(bad.buffer)).toThrow(FormatError);
  });

  it("rejects truncated payloads", () => {
    expect(() => parseVox(voxBuf.slice(0, voxBuf.byteLength - 5)))
      .toThrow(FormatError);
    expect(() => parseVox(voxBuf.slice(0, 20))).toThrow(FormatError);
  });
});

describe("float volume parsing", () => {
  it("reads the golden ramp", () => {
    const vol = parseF32(f32Buf);
    expect(vol.kind).toBe("scalar");
    expect(vol.dims).toEqual([16, 16, 16]);
    expect(vol.ncomp).toBe(1);
    expect(valueRange(vol)).toEqual([0, 1]);
    // ramp is x/15, x-fastest
    expect(vol.data[3]).toBeCloseTo(3 / 15, 6);
    expect(vol.data[3 + 16 * (5 + 16 * 9)]).toBeCloseTo(3 / 15, 6);
  });

  it("rejects truncation and wrong magic", () => {
    expect(() => parseF32(f32Buf.slice(0, f32Buf.byteLength - 4)))
      .toThrow(FormatError);
    expect(() => parseF32(voxBuf)).toThrow(FormatError);
  });

  it("parseVolume dispatches on magic", () => {
    expect(parseVolume(voxBuf).kind).toBe("labels");
    expect(parseVolume(f32Buf).kind).toBe("scalar");
  });
});

function rampVolume(): Volume {
  // value = x voxel index, 4x3x2
  const dims: [number, number, number] = [4, 3, 2];
  const data = new Float32Array(4 * 3 * 2);
  for (let k = 0; k < 2; k++)
    for (let j = 0; j < 3; j++)
      for (let i = 0; i < 4; i++) data[i + 4 * (j + 3 * k)] = i;
  return { kind: "scalar", dims, spacing: 1, origin: [0, 0, 0], ncomp: 1, data };
}

describe("trilinear sampling", () => {
  it("is exact on a linear ramp between cell centers", () => {
    const vol = rampVolume();
    expect(sampleTrilinear(vol, 0.5, 1.5, 0.5)).toBeCloseTo(0, 12);
    expect(sampleTrilinear(vol, 2.25, 1.5, 0.5)).toBeCloseTo(1.75, 12);
    expect(sampleTrilinear(vol, 3.5, 1.0, 1.0)).toBeCloseTo(3, 12);
  });

  it("clamps at the border", () => {
    const vol = rampVolume();
    expect(sampleTrilinear(vol, -5, 0, 0)).toBeCloseTo(0, 12);
    expect(sampleTrilinear(vol, 99, 1.5, 0.5)).toBeCloseTo(3, 12);
  });

  it("reproduces cell values at centers", () => {
    const vol = parseF32(f32Buf);
    expect(sampleTrilinear(vol, 6.5, 8.5, 8.5)).toBeCloseTo(6 / 15, 6);
  });
});
