// Pointer-as-gaze mapping: letterboxed frame geometry plus a send throttle.
//
// The frame keeps its 2:1 equirectangular aspect inside whatever box the
// canvas occupies; normalized gaze coordinates are relative to the frame,
// not the window, so resizing the page never skews the data.

export interface Box {
  left: number;
  top: number;
  width: number;
  height: number;
}

/** The frame's letterboxed rectangle inside a canvas box. */
export function frameRect(box: Box, frameAspect = 2): Box {
  const boxAspect = box.width / box.height;
  if (boxAspect >= frameAspect) {
    const width = box.height * frameAspect;
    return { left: box.left + (box.width - width) / 2, top: box.top, width, height: box.height };
  }
  const height = box.width / frameAspect;
  return { left: box.left, top: box.top + (box.height - height) / 2, width: box.width, height };
}

/**
 * Map a pointer position to normalized frame coordinates.
 * Returns null when the pointer misses the (letterboxed) frame.
 */
export function pointerToNorm(
  clientX: number,
  clientY: number,
  canvasBox: Box,
  frameAspect = 2,
): { x: number; y: number } | null {
  const rect = frameRect(canvasBox, frameAspect);
  if (rect.width <= 0 || rect.height <= 0) return null;
  const x = (clientX - rect.left) / rect.width;
  const y = (clientY - rect.top) / rect.height;
  if (x < 0 || x >= 1 || y < 0 || y >= 1) return null;
  return { x, y };
}

/** Rate limiter: at most `maxHz` accepted offers per second.

 * Accepts advance a fixed slot grid (`next = max(next, t) + interval`), so
 * idle time earns no burst credit. Arrivals up to 1 ms ahead of their slot
 * are forgiven; otherwise timer jitter makes a 2:1 input stream beat
 * against the grid and the effective rate decays well below the cap. */
export class GazeThrottle {
  private intervalMs: number;
  private nextMs = -Infinity;
  private static JITTER_MS = 1;

  constructor(maxHz = 60, private now: () => number = () => performance.now()) {
    this.intervalMs = 1000 / maxHz;
  }

  /** True when this offer may be sent; false drops it. */
  offer(): boolean {
    const t = this.now();
    if (t < this.nextMs - GazeThrottle.JITTER_MS) return false;
    this.nextMs = Math.max(this.nextMs, t) + this.intervalMs;
    return true;
  }
}
