// Browser wiring: canvas, state badges, playback controls, pointer-as-gaze.

import { frameRect, pointerToNorm } from "./gaze.js";
import { AuxWindowBadge, FrameMessage } from "./protocol.js";
import { ViewerSession } from "./session.js";

const params = new URLSearchParams(location.search);
const port = Number(params.get("port") ?? "8390");

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const banner = document.getElementById("banner")!;
const badgeBar = document.getElementById("badges")!;
const statusLine = document.getElementById("status")!;

let bitmap: ImageBitmap | null = null;
let drawQueued = false;

function scheduleDraw(): void {
  if (drawQueued) return;
  drawQueued = true;
  requestAnimationFrame(() => {
    drawQueued = false;
    if (bitmap === null) return;
    if (canvas.width !== bitmap.width || canvas.height !== bitmap.height) {
      canvas.width = bitmap.width;
      canvas.height = bitmap.height;
    }
    const rect = frameRect({ left: 0, top: 0, width: canvas.width, height: canvas.height });
    ctx.fillStyle = "#000";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    ctx.drawImage(bitmap, rect.left, rect.top, rect.width, rect.height);
  });
}

async function onFrame(frame: FrameMessage): Promise<void> {
  const bytes = Uint8Array.from(atob(frame.png_b64), (c) => c.charCodeAt(0));
  bitmap = await createImageBitmap(new Blob([bytes], { type: "image/png" }));
  statusLine.textContent = `frame ${frame.index} @ ${(frame.t_ms / 1000).toFixed(2)} s`;
  scheduleDraw();
}

function onBadges(windows: AuxWindowBadge[]): void {
  badgeBar.replaceChildren(
    ...windows.map((w) => {
      const el = document.createElement("span");
      el.className = `badge state-${w.state.toLowerCase()}`;
      el.textContent = `${w.id}:${w.state} ${w.alpha.toFixed(2)}`;
      el.title = w.state === "B" ? "blurred" : w.state === "C" ? "clear" : "re-blurring";
      return el;
    }),
  );
}

const session = new ViewerSession({
  onFrame: (f) => void onFrame(f),
  onBadges,
  onStatus(status) {
    banner.classList.toggle("hidden", status === "open");
    banner.textContent =
      status === "connecting"
        ? "connecting…"
        : status === "closed"
          ? "disconnected — session paused on the server"
          : "";
    if (status !== "open") {
      const retry = document.createElement("button");
      retry.textContent = "reconnect";
      retry.onclick = connect;
      if (status === "closed") banner.append(" ", retry);
    }
  },
  onServerError(detail) {
    statusLine.textContent = `server: ${detail}`;
  },
  onEnd(frames) {
    statusLine.textContent = `clip finished (${frames} frames); gaze log written`;
  },
});

function connect(): void {
  const socket = new WebSocket(`ws://127.0.0.1:${port}/ws`);
  session.attach({ send: (d) => socket.send(d), close: () => socket.close() });
  socket.onopen = () => session.handleOpen();
  socket.onclose = () => session.handleClose();
  socket.onmessage = (ev) => session.handleMessage(String(ev.data));
}

canvas.addEventListener("pointermove", (ev) => {
  const box = canvas.getBoundingClientRect();
  const p = pointerToNorm(ev.clientX, ev.clientY, box);
  if (p !== null) session.offerGaze(p.x, p.y);
});

(document.getElementById("play") as HTMLButtonElement).onclick = () => session.play();
(document.getElementById("pause") as HTMLButtonElement).onclick = () => session.pause();
(document.getElementById("restart") as HTMLButtonElement).onclick = () => session.seek(0);
(document.getElementById("end") as HTMLButtonElement).onclick = () => session.end();

connect();
