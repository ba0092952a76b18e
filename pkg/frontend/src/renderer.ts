/**
 * WebGL2 renderer: each layer is a full-screen pass whose fragment shader
 * applies the plane homography (target pixel -> source pixel) and samples the
 * layer texture; passes run front to back with under-compositing
 * (premultiplied colors weighted by residual transmittance), matching the
 * CPU compositor. Crack repair is a simplified single-pass point band over
 * the cached boundary samples, composited behind the layer stack so it only
 * fills residual transparency.
 */

import type { Bundle, EdcSample, LayerFrame } from "./bundle.js";
import {
  Camera, Mat3, median, orbitCamera, planeHomography, applyHomography,
  mat3Inv,
} from "./geometry.js";
import type { Pose, ViewerState } from "./state.js";

const LAYER_VERT = `#version 300 es
void main() {
  // Full-screen triangle from gl_VertexID, no buffers.
  vec2 p = vec2((gl_VertexID << 1) & 2, gl_VertexID & 2);
  gl_Position = vec4(p * 2.0 - 1.0, 0.0, 1.0);
}`;

const LAYER_FRAG = `#version 300 es
precision highp float;
uniform mat3 u_h;          // target pixel -> source pixel, column-major
uniform vec2 u_size;       // target width, height
uniform sampler2D u_tex;   // premultiplied RGBA
out vec4 frag;
void main() {
  vec2 px = vec2(gl_FragCoord.x, u_size.y - gl_FragCoord.y);
  vec3 q = u_h * vec3(px, 1.0);
  vec2 src = q.xy / q.z;
  if (q.z <= 0.0 || src.x < -0.5 || src.y < -0.5 ||
      src.x > u_size.x - 0.5 || src.y > u_size.y - 0.5) {
    frag = vec4(0.0);
    return;
  }
  frag = texture(u_tex, (src + 0.5) / u_size);
}`;

const STRIP_VERT = `#version 300 es
layout(location = 0) in vec2 a_pos;    // warped sample position, pixels
layout(location = 1) in float a_gap;   // normalized depth gap in [0, 1]
uniform vec2 u_size;
uniform float u_width;                 // band width, pixels
out float v_gap;
void main() {
  v_gap = a_gap;
  vec2 ndc = (a_pos + 0.5) / u_size * 2.0 - 1.0;
  gl_Position = vec4(ndc.x, -ndc.y, 0.0, 1.0);
  gl_PointSize = u_width;
}`;

const STRIP_FRAG = `#version 300 es
precision highp float;
uniform mat3 u_hf;         // target -> source for the front layer
uniform mat3 u_hb;         // target -> source for the back layer
uniform vec2 u_size;
uniform sampler2D u_front;
uniform sampler2D u_back;
in float v_gap;
out vec4 frag;
vec4 sampleLayer(mat3 h, vec2 px, sampler2D tex) {
  vec3 q = h * vec3(px, 1.0);
  vec2 src = q.xy / q.z;
  if (q.z <= 0.0 || src.x < -0.5 || src.y < -0.5 ||
      src.x > u_size.x - 0.5 || src.y > u_size.y - 0.5) {
    return vec4(0.0);
  }
  return texture(tex, (src + 0.5) / u_size);
}
void main() {
  vec2 d = gl_PointCoord - 0.5;
  float r = length(d) * 2.0;
  float w = 1.0 - smoothstep(0.6, 1.0, r);
  if (w <= 0.0) {
    frag = vec4(0.0);
    return;
  }
  vec2 px = vec2(gl_FragCoord.x, u_size.y - gl_FragCoord.y);
  vec4 cf = sampleLayer(u_hf, px, u_front);
  vec4 cb = sampleLayer(u_hb, px, u_back);
  vec3 f = cf.a > 1e-4 ? cf.rgb / cf.a : cb.a > 1e-4 ? cb.rgb / cb.a : vec3(0.0);
  vec3 b = cb.a > 1e-4 ? cb.rgb / cb.a : f;
  // Blend toward the back color as the depth gap opens.
  vec3 mixed = mix(f, b, clamp(v_gap, 0.0, 1.0));
  frag = vec4(mixed * w, w);
}`;

function compile(gl: WebGL2RenderingContext, type: number, src: string): WebGLShader {
  const shader = gl.createShader(type);
  if (!shader) throw new Error("shader allocation failed");
  gl.shaderSource(shader, src);
  gl.compileShader(shader);
  if (!gl.getShaderParameter(shader, gl.COMPILE_STATUS)) {
    throw new Error(`shader compile: ${gl.getShaderInfoLog(shader)}`);
  }
  return shader;
}

function link(gl: WebGL2RenderingContext, vert: string, frag: string): WebGLProgram {
  const prog = gl.createProgram();
  if (!prog) throw new Error("program allocation failed");
  gl.attachShader(prog, compile(gl, gl.VERTEX_SHADER, vert));
  gl.attachShader(prog, compile(gl, gl.FRAGMENT_SHADER, frag));
  gl.linkProgram(prog);
  if (!gl.getProgramParameter(prog, gl.LINK_STATUS)) {
    throw new Error(`program link: ${gl.getProgramInfoLog(prog)}`);
  }
  return prog;
}

/** Column-major 3x3 for uniformMatrix3fv from a row-major Mat3. */
function columnMajor(h: Mat3): Float32Array {
  return new Float32Array([
    h[0], h[3], h[6],
    h[1], h[4], h[7],
    h[2], h[5], h[8],
  ]);
}

function toBytes(frame: LayerFrame): Uint8Array {
  const out = new Uint8Array(frame.rgba.length);
  for (let i = 0; i < out.length; i++) {
    out[i] = Math.round(Math.min(Math.max(frame.rgba[i], 0), 1) * 255);
  }
  return out;
}

export function cameraFromManifest(bundle: Bundle): Camera {
  const c = bundle.manifest.camera;
  return {
    fx: c.fx, fy: c.fy, cx: c.cx, cy: c.cy,
    rotation: c.rotation.slice(),
    translation: [c.translation[0], c.translation[1], c.translation[2]],
  };
}

/** Viewer pose -> camera orbiting the median layer depth, as the CLI does. */
export function poseCamera(bundle: Bundle, frame: number, pose: Pose): Camera {
  const src = cameraFromManifest(bundle);
  const depths = bundle.manifest.frames[frame].layer_depths;
  const pivot = median(depths) || 2.0;
  return orbitCamera(src, pose.yaw, pose.pitch, pose.baseline, pivot);
}

export class Renderer {
  private gl: WebGL2RenderingContext;
  private layerProg: WebGLProgram;
  private stripProg: WebGLProgram;
  private bundle: Bundle | null = null;
  private textures = new Map<number, WebGLTexture[]>();
  private stripBuffer: WebGLBuffer;
  private stripVao: WebGLVertexArrayObject;
  bandWidth = 8.0;

  constructor(canvas: HTMLCanvasElement) {
    const gl = canvas.getContext("webgl2", {
      premultipliedAlpha: true, alpha: false, antialias: false,
    });
    if (!gl) throw new Error("WebGL2 unavailable");
    this.gl = gl;
    this.layerProg = link(gl, LAYER_VERT, LAYER_FRAG);
    this.stripProg = link(gl, STRIP_VERT, STRIP_FRAG);
    const buf = gl.createBuffer();
    const vao = gl.createVertexArray();
    if (!buf || !vao) throw new Error("buffer allocation failed");
    this.stripBuffer = buf;
    this.stripVao = vao;
  }

  setBundle(bundle: Bundle): void {
    for (const textures of this.textures.values()) {
      for (const tex of textures) this.gl.deleteTexture(tex);
    }
    this.textures.clear();
    this.bundle = bundle;
    const canvas = this.gl.canvas as HTMLCanvasElement;
    canvas.width = bundle.manifest.width;
    canvas.height = bundle.manifest.height;
  }

  /** Upload (or fetch cached) textures for one frame; lazy per playhead. */
  private frameTextures(frame: number): WebGLTexture[] {
    const cached = this.textures.get(frame);
    if (cached) return cached;
    const gl = this.gl;
    const layers = this.bundle!.frames[frame];
    const textures = layers.map((layer) => {
      const tex = gl.createTexture();
      if (!tex) throw new Error("texture allocation failed");
      gl.bindTexture(gl.TEXTURE_2D, tex);
      gl.texImage2D(gl.TEXTURE_2D, 0, gl.RGBA8, layer.width, layer.height, 0,
                    gl.RGBA, gl.UNSIGNED_BYTE, toBytes(layer));
      gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_MIN_FILTER, gl.LINEAR);
      gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_MAG_FILTER, gl.LINEAR);
      gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_WRAP_S, gl.CLAMP_TO_EDGE);
      gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_WRAP_T, gl.CLAMP_TO_EDGE);
      return tex;
    });
    // Keep at most one GOP's worth of frames resident.
    const gop = this.bundle!.manifest.gop_table;
    const maxResident = Math.max(
      8, gop.filter((g) => g.type === "P").length + 1);
    if (this.textures.size >= maxResident) {
      const oldest = this.textures.keys().next().value as number;
      for (const tex of this.textures.get(oldest)!) gl.deleteTexture(tex);
      this.textures.delete(oldest);
    }
    this.textures.set(frame, textures);
    return textures;
  }

  render(state: ViewerState): void {
    const bundle = this.bundle;
    if (!bundle) return;
    const gl = this.gl;
    const { width, height } = bundle.manifest;
    const frame = state.playhead;
    const src = cameraFromManifest(bundle);
    const viewer = poseCamera(bundle, frame, state.pose);
    const depths = bundle.manifest.frames[frame].layer_depths;
    const textures = this.frameTextures(frame);
    const homs = depths.map((z) => planeHomography(src, viewer, z));

    gl.viewport(0, 0, width, height);
    gl.clearColor(0, 0, 0, 0);
    gl.clear(gl.COLOR_BUFFER_BIT);
    gl.enable(gl.BLEND);
    // Under-compositing: front-to-back, destination alpha holds coverage.
    gl.blendFuncSeparate(gl.ONE_MINUS_DST_ALPHA, gl.ONE,
                         gl.ONE_MINUS_DST_ALPHA, gl.ONE);

    gl.useProgram(this.layerProg);
    gl.uniform2f(gl.getUniformLocation(this.layerProg, "u_size"), width, height);
    gl.uniform1i(gl.getUniformLocation(this.layerProg, "u_tex"), 0);
    const hLoc = gl.getUniformLocation(this.layerProg, "u_h");
    const order = depths.map((z, k) => [z, k] as const).sort((a, b) => a[0] - b[0]);
    for (const [, k] of order) {
      gl.activeTexture(gl.TEXTURE0);
      gl.bindTexture(gl.TEXTURE_2D, textures[k]);
      gl.uniformMatrix3fv(hLoc, false, columnMajor(homs[k]));
      gl.drawArrays(gl.TRIANGLES, 0, 3);
    }

    if (state.dpsEnabled && bundle.edc.length > frame) {
      this.renderStrip(bundle.edc[frame], homs, textures, width, height);
    }
  }

  private renderStrip(
    samples: EdcSample[], homs: Mat3[], textures: WebGLTexture[],
    width: number, height: number,
  ): void {
    if (samples.length === 0) return;
    const gl = this.gl;
    // Group by (front, back) pair so each draw binds two textures.
    const groups = new Map<number, EdcSample[]>();
    for (const s of samples) {
      if (s.frontLayer >= homs.length || s.backLayer >= homs.length) continue;
      const key = s.frontLayer * 16 + s.backLayer;
      let list = groups.get(key);
      if (!list) groups.set(key, (list = []));
      list.push(s);
    }
    gl.useProgram(this.stripProg);
    gl.uniform2f(gl.getUniformLocation(this.stripProg, "u_size"), width, height);
    gl.uniform1f(gl.getUniformLocation(this.stripProg, "u_width"), this.bandWidth);
    gl.uniform1i(gl.getUniformLocation(this.stripProg, "u_front"), 0);
    gl.uniform1i(gl.getUniformLocation(this.stripProg, "u_back"), 1);
    gl.bindVertexArray(this.stripVao);
    gl.bindBuffer(gl.ARRAY_BUFFER, this.stripBuffer);
    for (const [key, list] of groups) {
      const front = key >> 4;
      const back = key & 0xf;
      const fwd = mat3Inv(homs[front]);  // source -> target for positions
      const data = new Float32Array(3 * list.length);
      for (let i = 0; i < list.length; i++) {
        const [tx, ty] = applyHomography(fwd, list[i].x, list[i].y);
        data[3 * i] = tx;
        data[3 * i + 1] = ty;
        data[3 * i + 2] = list[i].dzQuant / 255;
      }
      gl.bufferData(gl.ARRAY_BUFFER, data, gl.STREAM_DRAW);
      gl.enableVertexAttribArray(0);
      gl.vertexAttribPointer(0, 2, gl.FLOAT, false, 12, 0);
      gl.enableVertexAttribArray(1);
      gl.vertexAttribPointer(1, 1, gl.FLOAT, false, 12, 8);
      gl.activeTexture(gl.TEXTURE0);
      gl.bindTexture(gl.TEXTURE_2D, textures[front]);
      gl.activeTexture(gl.TEXTURE1);
      gl.bindTexture(gl.TEXTURE_2D, textures[back]);
      gl.uniformMatrix3fv(gl.getUniformLocation(this.stripProg, "u_hf"),
                          false, columnMajor(homs[front]));
      gl.uniformMatrix3fv(gl.getUniformLocation(this.stripProg, "u_hb"),
                          false, columnMajor(homs[back]));
      gl.drawArrays(gl.POINTS, 0, list.length);
    }
    gl.bindVertexArray(null);
  }
}
