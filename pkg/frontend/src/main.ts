/**
 * Browser entry point. Loads a viewer bundle (scene.json + binary volumes)
 * from the `?bundle=` query parameter, wires the UI controls to the URL
 * hash, and drives the WebGL raycaster. Malformed bundles produce an error
 * banner, never a blank crash.
 */

import { whiteBrown } from "./colormap.js";
import { Bundle, loadBundle, Scene, SceneError } from "./scene.js";
import { DEFAULT_STATE, decodeState, encodeState, ViewerState } from "./urlstate.js";
import { parseVolume, valueRange } from "./volumes.js";
import { GpuVolume, Raycaster } from "./webgl.js";

function banner(msg: string): void {
  const el = document.getElementById("banner")!;
  el.textContent = msg;
  el.style.display = "block";
}

function byId<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

async function fetchBundle(base: string): Promise<Bundle> {
  const read = async (name: string) => {
    const resp = await fetch(`${base}/${name}`);
    if (!resp.ok) throw new SceneError(`cannot fetch ${name}: ${resp.status}`);
    return resp.arrayBuffer();
  };
  return loadBundle(read, parseVolume);
}

function cameraFromState(scene: Scene, state: ViewerState) {
  const az = (state.azimuth * Math.PI) / 180;
  const el = (state.elevation * Math.PI) / 180;
  const fwd = [
    -Math.cos(el) * Math.cos(az),
    -Math.cos(el) * Math.sin(az),
    -Math.sin(el),
  ];
  const right = [-Math.sin(az), Math.cos(az), 0];
  const up = [
    fwd[1] * right[2] - fwd[2] * right[1],
    fwd[2] * right[0] - fwd[0] * right[2],
    fwd[0] * right[1] - fwd[1] * right[0],
  ];
  const sp = scene.spacing;
  const center = [
    scene.origin[0] + (scene.dims[0] * sp) / 2,
    scene.origin[1] + (scene.dims[1] * sp) / 2,
    scene.origin[2] + (scene.dims[2] * sp) / 2,
  ];
  const diag = sp * Math.hypot(scene.dims[0], scene.dims[1], scene.dims[2]);
  const eye = center.map((c, i) => c - fwd[i] * diag);
  const half = (diag * 0.6) / state.zoom;
  return { eye, forward: fwd, right, up, halfSize: [half, half] as [number, number], diag };
}

async function start(): Promise<void> {
  const params = new URLSearchParams(location.search);
  const base = params.get("bundle");
  if (!base) {
    banner("no bundle: add ?bundle=<path-to-directory> to the URL");
    return;
  }
  let loaded: Bundle;
  try {
    loaded = await fetchBundle(base);
  } catch (err) {
    if (err instanceof SceneError) {
      banner(`bundle error: ${err.message}`);
      return;
    }
    throw err;
  }
  const { scene, volumes } = loaded;

  const canvas = byId<HTMLCanvasElement>("view");
  const gl = canvas.getContext("webgl2");
  if (!gl) {
    banner("WebGL2 is not available in this browser");
    return;
  }
  const caster = new Raycaster(gl);
  const gpu = new Map<string, GpuVolume>();
  for (const [name, vol] of volumes) gpu.set(name, caster.upload(vol));

  let state = decodeState(location.hash, {
    ...DEFAULT_STATE,
    field: scene.fields[0].name,
    iso: scene.iso_default ?? 0.5,
    clipEnabled: scene.clip_default?.enabled ?? false,
    clipDepth: scene.clip_default?.offset ?? 0.5,
  });

  const controls = {
    mode: byId<HTMLSelectElement>("mode"),
    field: byId<HTMLSelectElement>("field"),
    iso: byId<HTMLInputElement>("iso"),
    clipEnabled: byId<HTMLInputElement>("clip-on"),
    clipDepth: byId<HTMLInputElement>("clip-depth"),
    opacity: byId<HTMLInputElement>("opacity"),
    thresholdLo: byId<HTMLInputElement>("thr-lo"),
    thresholdHi: byId<HTMLInputElement>("thr-hi"),
  };
  for (const f of scene.fields) {
    const opt = document.createElement("option");
    opt.value = f.name;
    opt.textContent = f.name;
    controls.field.appendChild(opt);
  }

  function syncControls(): void {
    controls.mode.value = state.mode;
    controls.field.value = state.field;
    controls.iso.value = String(state.iso);
    controls.clipEnabled.checked = state.clipEnabled;
    controls.clipDepth.value = String(state.clipDepth);
    controls.opacity.value = String(state.opacity);
    controls.thresholdLo.value = String(state.thresholdLo);
    controls.thresholdHi.value = String(state.thresholdHi);
  }

  function render(): void {
    const vol = gpu.get(state.field);
    if (!vol) return;
    const scalarField = scene.fields.find(
      (f) => f.kind === "scalar" && f.name !== state.field);
    const scalar = state.mode === "iso" && scalarField
      ? gpu.get(scalarField.name) ?? null : null;
    const cam = cameraFromState(scene, state);
    canvas.width = canvas.clientWidth;
    canvas.height = canvas.clientHeight;
    gl!.viewport(0, 0, canvas.width, canvas.height);
    gl!.clearColor(1, 1, 1, 1);
    gl!.clear(gl!.COLOR_BUFFER_BIT);
    const range = valueRange(vol.volume);
    const srange: [number, number] = scalar
      ? valueRange(scalar.volume) : [0, 1];
    caster.draw(vol, scalar, {
      eye: cam.eye, forward: cam.forward, right: cam.right, up: cam.up,
      halfSize: cam.halfSize,
      iso: state.iso, mode: state.mode === "iso" ? 0 : 1,
      opacity: state.opacity,
      range, scalarRange: srange,
      thresholds: [state.thresholdLo, state.thresholdHi],
      clipEnabled: state.clipEnabled,
      clipDepth: state.clipDepth * cam.diag * 2,
      cmapA: whiteBrown(0), cmapB: whiteBrown(1),
    });
  }

  function commit(): void {
    history.replaceState(null, "", encodeState(state));
    render();
  }

  controls.mode.onchange = () => { state.mode = controls.mode.value as any; commit(); };
  controls.field.onchange = () => { state.field = controls.field.value; commit(); };
  controls.iso.oninput = () => { state.iso = +controls.iso.value; commit(); };
  controls.clipEnabled.onchange = () => { state.clipEnabled = controls.clipEnabled.checked; commit(); };
  controls.clipDepth.oninput = () => { state.clipDepth = +controls.clipDepth.value; commit(); };
  controls.opacity.oninput = () => { state.opacity = +controls.opacity.value; commit(); };
  controls.thresholdLo.oninput = () => { state.thresholdLo = +controls.thresholdLo.value; commit(); };
  controls.thresholdHi.oninput = () => { state.thresholdHi = +controls.thresholdHi.value; commit(); };
  canvas.onpointerdown = (ev) => {
    const startAz = state.azimuth, startEl = state.elevation;
    const x0 = ev.clientX, y0 = ev.clientY;
    const move = (m: PointerEvent) => {
      state.azimuth = startAz + (m.clientX - x0) * 0.5;
      state.elevation = Math.max(-89, Math.min(89,
        startEl + (m.clientY - y0) * 0.5));
      commit();
    };
    const upEv = () => {
      window.removeEventListener("pointermove", move);
      window.removeEventListener("pointerup", upEv);
    };
    window.addEventListener("pointermove", move);
    window.addEventListener("pointerup", upEv);
  };
  window.onhashchange = () => {
    state = decodeState(location.hash, state);
    syncControls();
    render();
  };

  syncControls();
  commit();
}

start().catch((err) => banner(`unexpected error: ${err}`));
