/**
 * WebGL2 raycaster. Mirrors the CPU reference in raymarch.ts: the fragment
 * shader marches the same orthographic rays through a 3D texture, with the
 * same isosurface / DVR / clip-plane semantics. Not exercised by the unit
 * tests (no GL context in node); correctness is delegated to the CPU path
 * plus visual inspection.
 */

import { Volume } from "./volumes.js";

const VERT = `#version 300 es
in vec2 a_pos;
out vec2 v_uv;
void main() {
  v_uv = a_pos * 0.5 + 0.5;
  gl_Position = vec4(a_pos, 0.0, 1.0);
}`;

const FRAG = `#version 300 es
precision highp float;
precision highp sampler3D;

uniform sampler3D u_volume;
uniform sampler3D u_scalar;
uniform bool u_hasScalar;
uniform vec3 u_boxLo, u_boxHi;
uniform vec3 u_eye, u_forward, u_right, u_up;
uniform vec2 u_halfSize;       // world-units half extent of the image plane
uniform float u_iso;
uniform int u_mode;            // 0 iso, 1 dvr
uniform float u_opacity;
uniform vec2 u_range, u_scalarRange, u_thresholds;
uniform float u_step;
uniform bool u_clipEnabled;
uniform float u_clipDepth;     // world units from eye along forward
uniform vec3 u_cmapA, u_cmapB; // linear two-point colormap

in vec2 v_uv;
out vec4 outColor;

vec2 rayBox(vec3 o, vec3 d) {
  vec3 inv = 1.0 / d;
  vec3 ta = (u_boxLo - o) * inv;
  vec3 tb = (u_boxHi - o) * inv;
  vec3 tlo = min(ta, tb), thi = max(ta, tb);
  float t0 = max(max(tlo.x, tlo.y), tlo.z);
  float t1 = min(min(thi.x, thi.y), thi.z);
  return vec2(max(t0, 0.0), t1);
}

float sampleVol(sampler3D tex, vec3 p) {
  vec3 uvw = (p - u_boxLo) / (u_boxHi - u_boxLo);
  return texture(tex, uvw).r;
}

vec3 cmap(float t) { return mix(u_cmapA, u_cmapB, clamp(t, 0.0, 1.0)); }

void main() {
  vec2 ndc = v_uv * 2.0 - 1.0;
  vec3 o = u_eye + u_right * (ndc.x * u_halfSize.x)
                 + u_up * (ndc.y * u_halfSize.y);
  vec2 seg = rayBox(o, u_forward);
  if (seg.x >= seg.y) discard;
  float t = seg.x, t1 = seg.y;
  if (u_clipEnabled) {
    // fragments nearer than the view-aligned plane are discarded
    if (t1 <= u_clipDepth) discard;
    t = max(t, u_clipDepth);
  }

  if (u_mode == 0) {
    float prevV = sampleVol(u_volume, o + u_forward * t);
    float prevT = t;
    for (float s = t + u_step; s <= t1; s += u_step) {
      float v = sampleVol(u_volume, o + u_forward * s);
      if ((prevV < u_iso) != (v < u_iso)) {
        float f = (u_iso - prevV) / (v - prevV);
        vec3 p = o + u_forward * mix(prevT, s, f);
        vec3 c = vec3(0.8);
        if (u_hasScalar) {
          float sv = sampleVol(u_scalar, p);
          float tn = (sv - u_scalarRange.x)
                   / max(u_scalarRange.y - u_scalarRange.x, 1e-30);
          c = cmap(tn);
        }
        // cheap headlight from the trilinear gradient
        float h = u_step;
        vec3 gnorm = normalize(vec3(
          sampleVol(u_volume, p + vec3(h,0,0)) - sampleVol(u_volume, p - vec3(h,0,0)),
          sampleVol(u_volume, p + vec3(0,h,0)) - sampleVol(u_volume, p - vec3(0,h,0)),
          sampleVol(u_volume, p + vec3(0,0,h)) - sampleVol(u_volume, p - vec3(0,0,h))
        ) + 1e-12);
        float lambert = 0.35 + 0.65 * abs(dot(gnorm, u_forward));
        outColor = vec4(c * lambert, 1.0);
        return;
      }
      prevT = s;
      prevV = v;
    }
    if (prevV >= u_iso) {        // clipped interior cap
      outColor = vec4(vec3(0.8), 1.0);
      return;
    }
    discard;
  } else {
    vec4 acc = vec4(0.0);
    for (float s = t; s <= t1 && acc.a < 0.995; s += u_step) {
      float v = sampleVol(u_volume, o + u_forward * s);
      float tn = clamp((v - u_range.x) / max(u_range.y - u_range.x, 1e-30),
                       0.0, 1.0);
      float fade = (tn < u_thresholds.x || tn > u_thresholds.y) ? 0.0 : 1.0;
      float a = min(u_opacity * tn * fade, 1.0);
      acc.rgb += (1.0 - acc.a) * a * cmap(tn);
      acc.a += (1.0 - acc.a) * a;
    }
    outColor = acc;
  }
}`;

export interface GpuVolume {
  texture: WebGLTexture;
  volume: Volume;
}

function compile(gl: WebGL2RenderingContext, type: number, src: string): WebGLShader {
  const sh = gl.createShader(type)!;
  gl.shaderSource(sh, src);
  gl.compileShader(sh);
  if (!gl.getShaderParameter(sh, gl.COMPILE_STATUS)) {
    throw new Error("shader compile failed: " + gl.getShaderInfoLog(sh));
  }
  return sh;
}

export class Raycaster {
  private gl: WebGL2RenderingContext;
  private prog: WebGLProgram;

  constructor(gl: WebGL2RenderingContext) {
    this.gl = gl;
    const prog = gl.createProgram()!;
    gl.attachShader(prog, compile(gl, gl.VERTEX_SHADER, VERT));
    gl.attachShader(prog, compile(gl, gl.FRAGMENT_SHADER, FRAG));
    gl.linkProgram(prog);
    if (!gl.getProgramParameter(prog, gl.LINK_STATUS)) {
      throw new Error("program link failed: " + gl.getProgramInfoLog(prog));
    }
    this.prog = prog;
    const quad = gl.createBuffer()!;
    gl.bindBuffer(gl.ARRAY_BUFFER, quad);
    gl.bufferData(gl.ARRAY_BUFFER,
      new Float32Array([-1, -1, 3, -1, -1, 3]), gl.STATIC_DRAW);
    const loc = gl.getAttribLocation(prog, "a_pos");
    gl.enableVertexAttribArray(loc);
    gl.vertexAttribPointer(loc, 2, gl.FLOAT, false, 0, 0);
  }

  upload(vol: Volume): GpuVolume {
    const gl = this.gl;
    const tex = gl.createTexture()!;
    gl.bindTexture(gl.TEXTURE_3D, tex);
    gl.texParameteri(gl.TEXTURE_3D, gl.TEXTURE_MIN_FILTER, gl.LINEAR);
    gl.texParameteri(gl.TEXTURE_3D, gl.TEXTURE_MAG_FILTER, gl.LINEAR);
    gl.texParameteri(gl.TEXTURE_3D, gl.TEXTURE_WRAP_S, gl.CLAMP_TO_EDGE);
    gl.texParameteri(gl.TEXTURE_3D, gl.TEXTURE_WRAP_T, gl.CLAMP_TO_EDGE);
    gl.texParameteri(gl.TEXTURE_3D, gl.TEXTURE_WRAP_R, gl.CLAMP_TO_EDGE);
    gl.texImage3D(gl.TEXTURE_3D, 0, gl.R32F,
      vol.dims[0], vol.dims[1], vol.dims[2], 0, gl.RED, gl.FLOAT,
      vol.ncomp === 1 ? vol.data
        : vol.data.filter((_, i) => i % vol.ncomp === 0));
    return { texture: tex, volume: vol };
  }

  draw(main: GpuVolume, scalar: GpuVolume | null, uniforms: {
    eye: number[]; forward: number[]; right: number[]; up: number[];
    halfSize: [number, number];
    iso: number; mode: 0 | 1; opacity: number;
    range: [number, number]; scalarRange: [number, number];
    thresholds: [number, number];
    clipEnabled: boolean; clipDepth: number;
    cmapA: [number, number, number]; cmapB: [number, number, number];
  }): void {
    const gl = this.gl;
    const vol = main.volume;
    gl.useProgram(this.prog);
    const u = (n: string) => gl.getUniformLocation(this.prog, n);
    gl.activeTexture(gl.TEXTURE0);
    gl.bindTexture(gl.TEXTURE_3D, main.texture);
    gl.uniform1i(u("u_volume"), 0);
    if (scalar) {
      gl.activeTexture(gl.TEXTURE1);
      gl.bindTexture(gl.TEXTURE_3D, scalar.texture);
      gl.uniform1i(u("u_scalar"), 1);
    }
    gl.uniform1i(u("u_hasScalar"), scalar ? 1 : 0);
    gl.uniform3f(u("u_boxLo"), vol.origin[0], vol.origin[1], vol.origin[2]);
    gl.uniform3f(u("u_boxHi"),
      vol.origin[0] + vol.dims[0] * vol.spacing,
      vol.origin[1] + vol.dims[1] * vol.spacing,
      vol.origin[2] + vol.dims[2] * vol.spacing);
    gl.uniform3fv(u("u_eye"), uniforms.eye);
    gl.uniform3fv(u("u_forward"), uniforms.forward);
    gl.uniform3fv(u("u_right"), uniforms.right);
    gl.uniform3fv(u("u_up"), uniforms.up);
    gl.uniform2fv(u("u_halfSize"), uniforms.halfSize);
    gl.uniform1f(u("u_iso"), uniforms.iso);
    gl.uniform1i(u("u_mode"), uniforms.mode);
    gl.uniform1f(u("u_opacity"), uniforms.opacity);
    gl.uniform2fv(u("u_range"), uniforms.range);
    gl.uniform2fv(u("u_scalarRange"), uniforms.scalarRange);
    gl.uniform2fv(u("u_thresholds"), uniforms.thresholds);
    gl.uniform1i(u("u_clipEnabled"), uniforms.clipEnabled ? 1 : 0);
    gl.uniform1f(u("u_clipDepth"), uniforms.clipDepth);
    gl.uniform1f(u("u_step"), vol.spacing * 0.5);
    gl.uniform3fv(u("u_cmapA"), uniforms.cmapA);
    gl.uniform3fv(u("u_cmapB"), uniforms.cmapB);
    gl.drawArrays(gl.TRIANGLES, 0, 3);
  }
}
