/** scene.json schema and validation for exported viewer bundles. */

import { FormatError, Volume } from "./volumes.js";

export interface SceneField {
  name: string;
  file: string;
  kind: "labels" | "scalar";
  ncomp?: number;
  colormap?: string;
  range?: [number, number];
}

export interface Scene {
  version: number;
  dims: [number, number, number];
  spacing: number;
  origin: [number, number, number];
  fields: SceneField[];
  iso_default: number;
  clip_default: { axis: string; offset: number; enabled: boolean };
}

export class SceneError extends Error {}

function isVec3(v: unknown): v is [number, number, number] {
  return Array.isArray(v) && v.length === 3 &&
    v.every((x) => typeof x === "number" && Number.isFinite(x));
}

/** Validate a parsed scene.json blob; throws SceneError with a message fit
 *  for the error banner. */
export function validateScene(blob: unknown): Scene {
  if (typeof blob !== "object" || blob === null) {
    throw new SceneError("scene.json is not an object");
  }
  const s = blob as Record<string, unknown>;
  for (const key of ["version", "dims", "spacing", "origin", "fields",
                     "iso_default", "clip_default"]) {
    if (!(key in s)) throw new SceneError(`scene.json missing key '${key}'`);
  }
  if (!isVec3(s.dims) || s.dims.some((d) => d < 1 || d !== Math.floor(d))) {
    throw new SceneError("scene dims must be 3 positive integers");
  }
  if (!isVec3(s.origin)) throw new SceneError("scene origin must be a vec3");
  if (typeof s.spacing !== "number" || s.spacing <= 0) {
    throw new SceneError("scene spacing must be a positive number");
  }
  if (!Array.isArray(s.fields) || s.fields.length === 0) {
    throw new SceneError("scene has no fields");
  }
  for (const f of s.fields as SceneField[]) {
    if (typeof f.file !== "string" || typeof f.name !== "string") {
      throw new SceneError("each field needs 'name' and 'file'");
    }
    if (f.kind !== "labels" && f.kind !== "scalar") {
      throw new SceneError(`unknown field kind '${f.kind}' in '${f.name}'`);
    }
  }
  const clip = s.clip_default as Scene["clip_default"];
  if (typeof clip !== "object" || clip === null ||
      typeof clip.offset !== "number" || clip.offset < 0 || clip.offset > 1) {
    throw new SceneError("clip_default.offset must lie in [0, 1]");
  }
  return s as unknown as Scene;
}

/** Cross-check a loaded volume against the scene header. */
export function checkVolumeDims(scene: Scene, field: SceneField, vol: Volume): void {
  const [a, b, c] = scene.dims;
  const [x, y, z] = vol.dims;
  if (a !== x || b !== y || c !== z) {
    throw new SceneError(
      `volume '${field.name}' dims ${x}x${y}x${z} do not match scene ` +
      `${a}x${b}x${c}`);
  }
}

export interface Bundle {
  scene: Scene;
  volumes: Map<string, Volume>;
}

/** Load a bundle through a fetch-like reader (injected so tests can read
 *  from disk and the browser can fetch over HTTP). */
export async function loadBundle(
  readFile: (name: string) => Promise<ArrayBuffer>,
  parse: (buf: ArrayBuffer) => Volume,
): Promise<Bundle> {
  let sceneBlob: unknown;
  try {
    const raw = await readFile("scene.json");
    sceneBlob = JSON.parse(new TextDecoder().decode(raw));
  } catch (err) {
    throw new SceneError(`cannot read scene.json: ${(err as Error).message}`);
  }
  const scene = validateScene(sceneBlob);
  const volumes = new Map<string, Volume>();
  for (const f of scene.fields) {
    let vol: Volume;
    try {
      vol = parse(await readFile(f.file));
    } catch (err) {
      if (err instanceof FormatError) {
        throw new SceneError(`volume '${f.file}': ${err.message}`);
      }
      throw new SceneError(`cannot read volume '${f.file}'`);
    }
    checkVolumeDims(scene, f, vol);
    volumes.set(f.name, vol);
  }
  return { scene, volumes };
}
