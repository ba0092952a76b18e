/**
 * Viewer state and the pure input reducer. Rendering is a function of
 * (bundle, ViewerState) only, so replaying a recorded input trace through
 * `steer` reproduces an identical pose log.
 */

export interface Pose {
  yaw: number;
  pitch: number;
  baseline: number;
}

export interface ViewerState {
  pose: Pose;
  playhead: number;
  playing: boolean;
  dpsEnabled: boolean;
  stats: { fps: number; frameMs: number };
}

export interface Limits {
  yaw: number;       // |yaw| max, degrees
  pitch: number;     // |pitch| max, degrees
  baseline: number;  // |baseline| max, world units
  frameCount: number;
  dragSensitivity: number;    // degrees per pixel
  scrollSensitivity: number;  // baseline units per wheel notch
}

export const DEFAULT_LIMITS: Limits = {
  yaw: 30,
  pitch: 20,
  baseline: 0.5,
  frameCount: 1,
  dragSensitivity: 0.1,
  scrollSensitivity: 0.02,
};

export type InputEvent =
  | { type: "drag"; dx: number; dy: number }
  | { type: "scroll"; delta: number }
  | { type: "key"; key: string }
  | { type: "seek"; frame: number }
  | { type: "tick" };  // playback advance, one frame

export function initialState(): ViewerState {
  return {
    pose: { yaw: 0, pitch: 0, baseline: 0 },
    playhead: 0,
    playing: false,
    dpsEnabled: true,
    stats: { fps: 0, frameMs: 0 },
  };
}

function clamp(v: number, lim: number): number {
  return Math.min(Math.max(v, -lim), lim);
}

function clampFrame(f: number, limits: Limits): number {
  return Math.min(Math.max(Math.round(f), 0), limits.frameCount - 1);
}

/** Map one input event to the next state. Pure: never mutates the input. */
export function steer(
  state: ViewerState, event: InputEvent, limits: Limits = DEFAULT_LIMITS,
): ViewerState {
  switch (event.type) {
    case "drag":
      return {
        ...state,
        pose: {
          ...state.pose,
          yaw: clamp(state.pose.yaw + event.dx * limits.dragSensitivity,
                     limits.yaw),
          pitch: clamp(state.pose.pitch + event.dy * limits.dragSensitivity,
                       limits.pitch),
        },
      };
    case "scroll":
      return {
        ...state,
        pose: {
          ...state.pose,
          baseline: clamp(
            state.pose.baseline + event.delta * limits.scrollSensitivity,
            limits.baseline),
        },
      };
    case "key":
      if (event.key === " ") {
        return { ...state, playing: !state.playing };
      }
      if (event.key === "d") {
        return { ...state, dpsEnabled: !state.dpsEnabled };
      }
      if (event.key === "ArrowRight") {
        return { ...state, playhead: clampFrame(state.playhead + 1, limits) };
      }
      if (event.key === "ArrowLeft") {
        return { ...state, playhead: clampFrame(state.playhead - 1, limits) };
      }
      if (event.key === "Home") {
        return { ...state, pose: { yaw: 0, pitch: 0, baseline: 0 } };
      }
      return state;
    case "seek":
      return { ...state, playhead: clampFrame(event.frame, limits) };
    case "tick": {
      if (!state.playing) return state;
      const next = state.playhead + 1;
      return {
        ...state,
        playhead: next >= limits.frameCount ? 0 : next,
      };
    }
  }
}

/** One line per event: the pose/playhead after applying it. */
export function poseLog(
  events: InputEvent[], limits: Limits = DEFAULT_LIMITS,
  start: ViewerState = initialState(),
): string[] {
  const log: string[] = [];
  let state = start;
  for (const event of events) {
    state = steer(state, event, limits);
    const p = state.pose;
    log.push(
      `yaw=${p.yaw.toFixed(6)} pitch=${p.pitch.toFixed(6)} ` +
      `baseline=${p.baseline.toFixed(6)} frame=${state.playhead}`);
  }
  return log;
}

/** Apply ?yaw=&pitch=&baseline=&frame=&dps=&play= presets to a fresh state. */
export function stateFromQuery(
  query: string, limits: Limits = DEFAULT_LIMITS,
): ViewerState {
  const params = new URLSearchParams(query);
  let state = initialState();
  const num = (key: string) => {
    const raw = params.get(key);
    if (raw === null) return null;
    const v = Number(raw);
    return Number.isFinite(v) ? v : null;
  };
  const yaw = num("yaw");
  const pitch = num("pitch");
  const baseline = num("baseline");
  state = {
    ...state,
    pose: {
      yaw: yaw !== null ? clamp(yaw, limits.yaw) : 0,
      pitch: pitch !== null ? clamp(pitch, limits.pitch) : 0,
      baseline: baseline !== null ? clamp(baseline, limits.baseline) : 0,
    },
  };
  const frame = num("frame");
  if (frame !== null) state = { ...state, playhead: clampFrame(frame, limits) };
  if (params.get("dps") !== null) {
    state = { ...state, dpsEnabled: params.get("dps") !== "0" };
  }
  if (params.get("play") === "1") state = { ...state, playing: true };
  return state;
}
