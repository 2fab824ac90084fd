import { describe, expect, it } from "vitest";
import { GazeThrottle, frameRect, pointerToNorm } from "../src/gaze.js";

const exact = { left: 0, top: 0, width: 768, height: 384 };

describe("frameRect letterboxing", () => {
  it("fills a box that already has the frame aspect", () => {
    expect(frameRect(exact)).toEqual(exact);
  });

  it("pillarboxes a wide box", () => {
    const rect = frameRect({ left: 0, top: 0, width: 1000, height: 400 });
    expect(rect.height).toBe(400);
    expect(rect.width).toBe(800);
    expect(rect.left).toBe(100);
  });

  it("letterboxes a tall box", () => {
    const rect = frameRect({ left: 10, top: 20, width: 400, height: 400 });
    expect(rect.width).toBe(400);
    expect(rect.height).toBe(200);
    expect(rect.top).toBe(120);
  });
});

describe("pointerToNorm", () => {
  it("maps the canvas center to (0.5, 0.5) within one-pixel quantization", () => {
    const p = pointerToNorm(384, 192, exact);
    expect(p).not.toBeNull();
    expect(Math.abs(p!.x - 0.5)).toBeLessThanOrEqual(1 / 768);
    expect(Math.abs(p!.y - 0.5)).toBeLessThanOrEqual(1 / 384);
  });

  it("is relative to the frame, not the window", () => {
    // Same physical point inside a pillarboxed canvas.
    const box = { left: 0, top: 0, width: 1000, height: 400 };
    const p = pointerToNorm(100 + 200, 100, box); // frame spans x in [100, 900]
    expect(p!.x).toBeCloseTo(0.25, 12);
    expect(p!.y).toBeCloseTo(0.25, 12);
  });

  it("returns null outside the frame and in the letterbox bars", () => {
    expect(pointerToNorm(-5, 100, exact)).toBeNull();
    expect(pointerToNorm(50, 100, { left: 0, top: 0, width: 1000, height: 400 })).toBeNull();
  });
});

describe("GazeThrottle", () => {
  it("caps a 120 Hz pointer stream at 60 messages per second", () => {
    let clock = 0;
    const throttle = new GazeThrottle(60, () => clock);
    let sent = 0;
    for (let i = 0; i < 120; i++) {
      if (throttle.offer()) sent += 1;
      clock += 1000 / 120;
    }
    expect(sent).toBeLessThanOrEqual(60);
    expect(sent).toBeGreaterThanOrEqual(59);
  });

  it("never bursts after idle gaps", () => {
    let clock = 0;
    const throttle = new GazeThrottle(60, () => clock);
    expect(throttle.offer()).toBe(true);
    clock += 5000; // long idle earns no credit
    expect(throttle.offer()).toBe(true);
    expect(throttle.offer()).toBe(false);
  });

  it("passes a slow stream through untouched", () => {
    let clock = 0;
    const throttle = new GazeThrottle(60, () => clock);
    let sent = 0;
    for (let i = 0; i < 30; i++) {
      if (throttle.offer()) sent += 1;
      clock += 50;
    }
    expect(sent).toBe(30);
  });
});
