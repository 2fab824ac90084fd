// Viewer-side session state: connection status, last frame, state badges.
//
// The session is transport-agnostic (anything with send/close works) and
// stateless with respect to the pipeline: closing the viewer only pauses
// playback on the server, so reconnecting resumes where things stood.

import { GazeThrottle } from "./gaze.js";
import {
  AuxWindowBadge,
  FrameMessage,
  ServerMessage,
  controlMessage,
  gazeMessage,
  parseServerMessage,
} from "./protocol.js";

export type ConnectionStatus = "connecting" | "open" | "closed";

export interface SocketLike {
  send(data: string): void;
  close(): void;
}

export interface SessionEvents {
  onFrame?(frame: FrameMessage): void;
  onBadges?(windows: AuxWindowBadge[]): void;
  onStatus?(status: ConnectionStatus): void;
  onServerError?(detail: string): void;
  onEnd?(framesPlayed: number): void;
}

export class ViewerSession {
  status: ConnectionStatus = "connecting";
  lastFrame: FrameMessage | null = null;
  badges: AuxWindowBadge[] = [];
  framesReceived = 0;
  gazeSent = 0;

  private socket: SocketLike | null = null;
  private throttle: GazeThrottle;
  private epochMs: number;
  private lastGazeT = 0;

  constructor(
    private events: SessionEvents = {},
    maxGazeHz = 60,
    private now: () => number = () => performance.now(),
  ) {
    this.throttle = new GazeThrottle(maxGazeHz, this.now);
    this.epochMs = this.now();
  }

  attach(socket: SocketLike): void {
    this.socket = socket;
    this.status = "connecting";
    this.events.onStatus?.(this.status);
  }

  handleOpen(): void {
    this.status = "open";
    this.events.onStatus?.(this.status);
  }

  handleClose(): void {
    this.status = "closed";
    this.socket = null;
    this.events.onStatus?.(this.status);
  }

  handleMessage(text: string): ServerMessage | null {
    const msg = parseServerMessage(text);
    if (msg === null) return null;
    switch (msg.type) {
      case "frame":
        this.lastFrame = msg;
        this.framesReceived += 1;
        this.events.onFrame?.(msg);
        break;
      case "aux_state":
        this.badges = msg.windows;
        this.events.onBadges?.(msg.windows);
        break;
      case "error":
        this.events.onServerError?.(msg.detail);
        break;
      case "control":
        if (msg.action === "end") this.events.onEnd?.(msg.value);
        break;
    }
    return msg;
  }

  /**
   * Offer one pointer-derived gaze point; sends immediately unless the
   * 60 Hz throttle drops it or nothing is connected. Returns true when
   * the message went out.
   */
  offerGaze(xNorm: number, yNorm: number): boolean {
    if (this.socket === null || this.status !== "open") return false;
    if (!this.throttle.offer()) return false;
    // t_ms is monotone: the clock only moves forward and rounding is too.
    const t = Math.max(this.lastGazeT, Math.round(this.now() - this.epochMs));
    this.lastGazeT = t;
    this.socket.send(gazeMessage(t, xNorm, yNorm));
    this.gazeSent += 1;
    return true;
  }

  play(): void {
    this.socket?.send(controlMessage("play"));
  }

  pause(): void {
    this.socket?.send(controlMessage("pause"));
  }

  seek(frame: number): void {
    this.socket?.send(controlMessage("seek", frame));
  }

  end(): void {
    this.socket?.send(controlMessage("end"));
  }
}
