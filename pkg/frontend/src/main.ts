/**
 * Browser entry point: fetch the bundle named in the URL, wire pointer /
 * wheel / keyboard input through the pure reducer, and re-render on every
 * state change. URL query params preset pose and frame for reproducible
 * screenshots: ?bundle=&yaw=&pitch=&baseline=&frame=&dps=&play=
 */

import { loadBundle, Bundle } from "./bundle.js";
import { Renderer } from "./renderer.js";
import {
  DEFAULT_LIMITS, InputEvent, Limits, ViewerState, stateFromQuery, steer,
} from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function showError(message: string): void {
  const banner = el<HTMLDivElement>("error");
  banner.textContent = message;
  banner.style.display = "block";
}

function debugPanel(bundle: Bundle): string {
  const m = bundle.manifest;
  const lines = [
    `${m.width}x${m.height}, ${m.frame_count} frames, codec ${m.codec}`,
    ...m.frames[0].layer_depths.map(
      (z, k) => `layer ${k}: depth ${z.toFixed(3)}`),
  ];
  return lines.join("\n");
}

async function run(): Promise<void> {
  const canvas = el<HTMLCanvasElement>("view");
  const stats = el<HTMLPreElement>("stats");
  const url = new URLSearchParams(location.search).get("bundle")
    ?? "/bundles/0/raw";

  let bundle: Bundle;
  try {
    bundle = await loadBundle(url);
  } catch (e) {
    showError(`failed to load ${url}: ${e}`);
    return;
  }

  const limits: Limits = {
    ...DEFAULT_LIMITS,
    frameCount: bundle.manifest.frame_count,
  };
  let state: ViewerState = stateFromQuery(location.search, limits);
  const renderer = new Renderer(canvas);
  renderer.setBundle(bundle);

  let dirty = true;
  const dispatch = (event: InputEvent) => {
    const next = steer(state, event, limits);
    if (next !== state) {
      state = next;
      dirty = true;  // every pose change re-renders the same frame
    }
  };

  let dragging = false;
  canvas.addEventListener("pointerdown", (e) => {
    dragging = true;
    canvas.setPointerCapture(e.pointerId);
  });
  canvas.addEventListener("pointerup", () => { dragging = false; });
  canvas.addEventListener("pointermove", (e) => {
    if (dragging) dispatch({ type: "drag", dx: e.movementX, dy: e.movementY });
  });
  canvas.addEventListener("wheel", (e) => {
    e.preventDefault();
    dispatch({ type: "scroll", delta: Math.sign(e.deltaY) });
  }, { passive: false });
  window.addEventListener("keydown", (e) => {
    dispatch({ type: "key", key: e.key });
  });

  const frameInterval = 1000 / 12;  // playback rate
  let lastTick = performance.now();
  let lastFrame = performance.now();
  const loop = (now: number) => {
    if (state.playing && now - lastTick >= frameInterval) {
      lastTick = now;
      dispatch({ type: "tick" });
    }
    if (dirty) {
      dirty = false;
      const t0 = performance.now();
      renderer.render(state);
      const ms = performance.now() - t0;
      const fps = 1000 / Math.max(now - lastFrame, 1e-3);
      lastFrame = now;
      state = {
        ...state,
        stats: { fps: Math.round(fps * 10) / 10, frameMs: Math.round(ms * 100) / 100 },
      };
      const p = state.pose;
      stats.textContent =
        `yaw ${p.yaw.toFixed(1)}°  pitch ${p.pitch.toFixed(1)}°  ` +
        `baseline ${p.baseline.toFixed(3)}\n` +
        `frame ${state.playhead}/${limits.frameCount - 1}  ` +
        `dps ${state.dpsEnabled ? "on" : "off"}  ` +
        `${state.stats.frameMs} ms (${state.stats.fps} fps)\n\n` +
        debugPanel(bundle);
    }
    requestAnimationFrame(loop);
  };
  requestAnimationFrame(loop);
}

run().catch((e) => showError(String(e)));
