// Wire protocol of the windb session service: one JSON object per message.

export type AuxState = "B" | "C" | "R";

export interface AuxWindowBadge {
  id: number;
  state: AuxState;
  alpha: number;
}

export interface FrameMessage {
  type: "frame";
  index: number;
  t_ms: number;
  png_b64: string;
}

export interface AuxStateMessage {
  type: "aux_state";
  windows: AuxWindowBadge[];
}

export interface ControlEcho {
  type: "control";
  action: "play" | "pause" | "seek" | "end";
  value: number;
}

export interface ErrorMessage {
  type: "error";
  detail: string;
}

export type ServerMessage = FrameMessage | AuxStateMessage | ControlEcho | ErrorMessage;

const AUX_STATES = new Set(["B", "C", "R"]);

/** Parse and validate one server message; null for anything malformed. */
export function parseServerMessage(text: string): ServerMessage | null {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof raw !== "object" || raw === null) return null;
  const msg = raw as Record<string, unknown>;
  switch (msg.type) {
    case "frame":
      if (
        typeof msg.index === "number" &&
        typeof msg.t_ms === "number" &&
        typeof msg.png_b64 === "string"
      ) {
        return { type: "frame", index: msg.index, t_ms: msg.t_ms, png_b64: msg.png_b64 };
      }
      return null;
    case "aux_state": {
      if (!Array.isArray(msg.windows)) return null;
      const windows: AuxWindowBadge[] = [];
      for (const w of msg.windows) {
        if (
          typeof w !== "object" || w === null ||
          typeof w.id !== "number" ||
          typeof w.state !== "string" || !AUX_STATES.has(w.state) ||
          typeof w.alpha !== "number"
        ) {
          return null;
        }
        windows.push({ id: w.id, state: w.state as AuxState, alpha: w.alpha });
      }
      return { type: "aux_state", windows };
    }
    case "control":
      if (
        (msg.action === "play" || msg.action === "pause" ||
         msg.action === "seek" || msg.action === "end") &&
        typeof msg.value === "number"
      ) {
        return { type: "control", action: msg.action, value: msg.value };
      }
      return null;
    case "error":
      if (typeof msg.detail === "string") return { type: "error", detail: msg.detail };
      return null;
    default:
      return null;
  }
}

export function gazeMessage(tMs: number, xNorm: number, yNorm: number): string {
  return JSON.stringify({ type: "gaze", t_ms: tMs, x_norm: xNorm, y_norm: yNorm });
}

export function controlMessage(action: ControlEcho["action"], value = 0): string {
  return JSON.stringify({ type: "control", action, value });
}
