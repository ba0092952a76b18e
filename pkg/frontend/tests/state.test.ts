/**
 * Input reducer: linear drag/scroll mappings, clamping, playback keys, URL
 * presets, and the determinism property that makes input-trace replay
 * reproduce identical pose logs.
 */

import { describe, expect, it } from "vitest";

import {
  DEFAULT_LIMITS, InputEvent, initialState, poseLog, stateFromQuery, steer,
} from "../src/state.js";

const limits = { ...DEFAULT_LIMITS, frameCount: 10 };

describe("steer", () => {
  it("maps a 100 px drag at 0.1°/px to yaw +10°", () => {
    const s = steer(initialState(), { type: "drag", dx: 100, dy: 0 }, limits);
    expect(s.pose.yaw).toBeCloseTo(10, 12);
    expect(s.pose.pitch).toBe(0);
  });

  it("clamps yaw and pitch to the configured limits", () => {
    let s = initialState();
    for (let i = 0; i < 20; i++) {
      s = steer(s, { type: "drag", dx: 500, dy: -500 }, limits);
    }
    expect(s.pose.yaw).toBe(limits.yaw);
    expect(s.pose.pitch).toBe(-limits.pitch);
  });

  it("clamps scrolled baseline to the limits", () => {
    let s = initialState();
    for (let i = 0; i < 100; i++) {
      s = steer(s, { type: "scroll", delta: 1 }, limits);
    }
    expect(s.pose.baseline).toBe(limits.baseline);
    s = steer(s, { type: "scroll", delta: -1 }, limits);
    expect(s.pose.baseline).toBeCloseTo(
      limits.baseline - limits.scrollSensitivity, 12);
  });

  it("space toggles play/pause", () => {
    let s = initialState();
    s = steer(s, { type: "key", key: " " }, limits);
    expect(s.playing).toBe(true);
    s = steer(s, { type: "key", key: " " }, limits);
    expect(s.playing).toBe(false);
  });

  it("keeps the playhead inside the GOP table", () => {
    let s = steer(initialState(), { type: "seek", frame: 99 }, limits);
    expect(s.playhead).toBe(9);
    s = steer(s, { type: "seek", frame: -5 }, limits);
    expect(s.playhead).toBe(0);
    s = steer(s, { type: "key", key: "ArrowLeft" }, limits);
    expect(s.playhead).toBe(0);
  });

  it("ticks advance and wrap only while playing", () => {
    let s = initialState();
    expect(steer(s, { type: "tick" }, limits).playhead).toBe(0);
    s = steer(s, { type: "key", key: " " }, limits);
    s = steer(s, { type: "seek", frame: 9 }, limits);
    s = steer(s, { type: "tick" }, limits);
    expect(s.playhead).toBe(0);
  });

  it("never mutates its input", () => {
    const s = initialState();
    const frozen = JSON.stringify(s);
    steer(s, { type: "drag", dx: 50, dy: 50 }, limits);
    steer(s, { type: "scroll", delta: 3 }, limits);
    expect(JSON.stringify(s)).toBe(frozen);
  });
});

describe("trace replay", () => {
  it("replaying a recorded trace reproduces an identical pose log", () => {
    let s = 42;
    const rand = () => (s = (s * 48271) % 2147483647) / 2147483647;
    const trace: InputEvent[] = [];
    for (let i = 0; i < 300; i++) {
      const r = rand();
      if (r < 0.5) {
        trace.push({ type: "drag", dx: Math.floor(rand() * 40) - 20,
                     dy: Math.floor(rand() * 40) - 20 });
      } else if (r < 0.7) {
        trace.push({ type: "scroll", delta: rand() < 0.5 ? 1 : -1 });
      } else if (r < 0.85) {
        trace.push({ type: "key",
                     key: [" ", "d", "ArrowRight", "ArrowLeft"][Math.floor(rand() * 4)] });
      } else {
        trace.push({ type: "tick" });
      }
    }
    const first = poseLog(trace, limits);
    const second = poseLog(trace, limits);
    expect(first.length).toBe(trace.length);
    expect(second).toEqual(first);
  });
});

describe("stateFromQuery", () => {
  it("applies pose, frame and toggles from the URL", () => {
    const s = stateFromQuery(
      "?yaw=5&pitch=-3&baseline=0.1&frame=4&dps=0&play=1", limits);
    expect(s.pose.yaw).toBe(5);
    expect(s.pose.pitch).toBe(-3);
    expect(s.pose.baseline).toBeCloseTo(0.1, 12);
    expect(s.playhead).toBe(4);
    expect(s.dpsEnabled).toBe(false);
    expect(s.playing).toBe(true);
  });

  it("clamps presets and ignores junk", () => {
    const s = stateFromQuery("?yaw=999&pitch=abc&frame=-3", limits);
    expect(s.pose.yaw).toBe(limits.yaw);
    expect(s.pose.pitch).toBe(0);
    expect(s.playhead).toBe(0);
    expect(s.playing).toBe(false);
  });
});
