import { describe, expect, it } from "vitest";

import {
  DEFAULT_STATE, decodeState, encodeState, roundTrips, ViewerState,
} from "../src/urlstate.js";

describe("URL state", () => {
  it("round-trips the defaults", () => {
    expect(roundTrips(DEFAULT_STATE)).toBe(true);
    expect(decodeState(encodeState(DEFAULT_STATE))).toEqual(DEFAULT_STATE);
  });

  it("round-trips every field", () => {
    const state: ViewerState = {
      mode: "dvr",
      field: "von mises",          // needs URI encoding
      iso: 0.37,
      clipEnabled: true,
      clipDepth: 0.82,
      opacity: 1.5,
      thresholdLo: 0.1,
      thresholdHi: 0.9,
      azimuth: -123.5,
      elevation: 67.25,
      zoom: 2.5,
    };
    expect(decodeState(encodeState(state))).toEqual(state);
  });

  it("round-trips randomized states", () => {
    // deterministic LCG so failures reproduce
    let s = 12345;
    const rnd = () => (s = (s * 1103515245 + 12345) % 2147483648) / 2147483648;
    for (let i = 0; i < 50; i++) {
      const state: ViewerState = {
        mode: rnd() < 0.5 ? "iso" : "dvr",
        field: `f${Math.floor(rnd() * 100)}`,
        iso: rnd(),
        clipEnabled: rnd() < 0.5,
        clipDepth: rnd(),
        opacity: 2 * rnd(),
        thresholdLo: rnd() / 2,
        thresholdHi: 0.5 + rnd() / 2,
        azimuth: 720 * rnd() - 360,
        elevation: 178 * rnd() - 89,
        zoom: 0.1 + 4 * rnd(),
      };
      const back = decodeState(encodeState(state));
      for (const key of Object.keys(state) as Array<keyof ViewerState>) {
        const a = state[key], b = back[key];
        if (typeof a === "number") {
          expect(Math.abs((b as number) - a)).toBeLessThan(1e-5 * (1 + Math.abs(a)));
        } else {
          expect(b).toEqual(a);
        }
      }
    }
  });

  it("ignores unknown keys and keeps base values for missing ones", () => {
    const state = decodeState("#m=dvr&bogus=3&wat", DEFAULT_STATE);
    expect(state.mode).toBe("dvr");
    expect(state.iso).toBe(DEFAULT_STATE.iso);
    expect(state.zoom).toBe(DEFAULT_STATE.zoom);
  });

  it("rejects junk numeric values without corrupting state", () => {
    const state = decodeState("#iso=banana&op=NaN");
    expect(state.iso).toBe(DEFAULT_STATE.iso);
    expect(state.opacity).toBe(DEFAULT_STATE.opacity);
  });

  it("empty hash yields the base state", () => {
    expect(decodeState("#")).toEqual(DEFAULT_STATE);
    expect(decodeState("")).toEqual(DEFAULT_STATE);
  });
});
