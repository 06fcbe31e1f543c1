/**
 * Viewer UI state <-> URL hash.
 *
 * Every interactive setting lives here so a view can be shared by copying
 * the address bar: round-tripping through the hash must reproduce the
 * state exactly (up to float formatting, which we make canonical).
 */

export interface ViewerState {
  mode: "iso" | "dvr";
  field: string;            // scene field name
  iso: number;
  clipEnabled: boolean;
  clipDepth: number;        // [0,1]
  opacity: number;
  thresholdLo: number;
  thresholdHi: number;
  azimuth: number;          // camera, degrees
  elevation: number;        // degrees
  zoom: number;
}

export const DEFAULT_STATE: ViewerState = {
  mode: "iso",
  field: "",
  iso: 0.5,
  clipEnabled: false,
  clipDepth: 0.5,
  opacity: 1.0,
  thresholdLo: 0.0,
  thresholdHi: 1.0,
  azimuth: 45,
  elevation: 25,
  zoom: 1.0,
};

// short keys keep the hash readable
const NUM_KEYS: Array<[keyof ViewerState, string]> = [
  ["iso", "iso"],
  ["clipDepth", "cd"],
  ["opacity", "op"],
  ["thresholdLo", "tl"],
  ["thresholdHi", "th"],
  ["azimuth", "az"],
  ["elevation", "el"],
  ["zoom", "zm"],
];

function fmt(x: number): string {
  // canonical: shortest representation that round-trips at ~1e-6
  const s = x.toPrecision(7);
  return String(parseFloat(s));
}

export function encodeState(state: ViewerState): string {
  const parts: string[] = [`m=${state.mode}`];
  if (state.field) parts.push(`f=${encodeURIComponent(state.field)}`);
  parts.push(`ce=${state.clipEnabled ? 1 : 0}`);
  for (const [prop, key] of NUM_KEYS) {
    parts.push(`${key}=${fmt(state[prop] as number)}`);
  }
  return "#" + parts.join("&");
}

export function decodeState(hash: string, base?: ViewerState): ViewerState {
  const state: ViewerState = { ...(base ?? DEFAULT_STATE) };
  const body = hash.startsWith("#") ? hash.slice(1) : hash;
  if (!body) return state;
  for (const part of body.split("&")) {
    const eq = part.indexOf("=");
    if (eq < 0) continue;
    const key = part.slice(0, eq);
    const val = part.slice(eq + 1);
    if (key === "m") {
      if (val === "iso" || val === "dvr") state.mode = val;
      continue;
    }
    if (key === "f") {
      state.field = decodeURIComponent(val);
      continue;
    }
    if (key === "ce") {
      state.clipEnabled = val === "1";
      continue;
    }
    const entry = NUM_KEYS.find(([, k]) => k === key);
    if (entry) {
      const x = parseFloat(val);
      if (Number.isFinite(x)) (state as any)[entry[0]] = x;
    }
  }
  return state;
}

/** Canonicalize once so encode(decode(encode(s))) === encode(s). */
export function roundTrips(state: ViewerState): boolean {
  const once = encodeState(state);
  return encodeState(decodeState(once)) === once;
}
