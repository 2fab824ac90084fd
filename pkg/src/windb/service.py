"""Local session service: streams composed display frames to one viewer,
ingests gaze, advances the dynamic-blur state machine, records the log.

The :class:`Session` core is transport-free and single-writer: gaze events
queue up and are applied in batches at frame boundaries, which makes a
recorded log replayable bit-for-bit. The FastAPI layer adds exactly one
WebSocket endpoint (``/ws``) speaking one-JSON-object-per-message:

server to client::

    {"type":"frame","index":int,"t_ms":int,"png_b64":str}
    {"type":"aux_state","windows":[{"id":int,"state":"B"|"C"|"R","alpha":float}]}
    {"type":"control","action":"end","value":int}      # end-of-clip echo
    {"type":"error","detail":str}

client to server::

    {"type":"gaze","t_ms":int,"x_norm":float,"y_norm":float}
    {"type":"control","action":"play"|"pause"|"seek"|"end","value":int}

Unknown message types and malformed JSON draw an error reply; the session
keeps running. Only one client may attach at a time; a second connection
is refused as busy. A disconnect pauses playback but never loses state.
"""

from __future__ import annotations

import asyncio
import base64
import json
import time
from pathlib import Path

import cv2
import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .io_formats import GazeRecord, ToolConfig, read_config, sidecar_bytes, write_gaze_log
from .pipeline import build_aux_layout, grid_for_dims, render_windb_frame, step_dynamic_blur

__all__ = ["ServiceError", "Session", "load_clip_frames", "create_app", "serve", "DEFAULT_PORT"]

DEFAULT_PORT = 8390


class ServiceError(RuntimeError):
    pass


def load_clip_frames(clip_dir) -> list[np.ndarray]:
    """Load the numbered frame images of a clip directory, sorted by name."""
    clip_dir = Path(clip_dir)
    if not clip_dir.is_dir():
        raise ServiceError(f"clip directory {clip_dir} does not exist")
    paths = sorted(p for p in clip_dir.iterdir() if p.suffix.lower() == ".png")
    if not paths:
        raise ServiceError(f"no .png frames in {clip_dir}")
    frames = []
    for p in paths:
        img = cv2.imread(str(p), cv2.IMREAD_COLOR)
        if img is None:
            raise ServiceError(f"unreadable frame {p}")
        if frames and img.shape != frames[0].shape:
            raise ServiceError(f"{p} has shape {img.shape}, expected {frames[0].shape}")
        frames.append(img)
    return frames


class Session:
    """One playback session over a decoded clip.

    ``gaze_source`` switches the session into replay mode: gaze comes from
    the given log records (grouped by their frame index) and network gaze
    is refused, so replays are deterministic.
    """

    def __init__(self, clip_dir, cfg: ToolConfig | None = None, out_dir=None,
                 gaze_source=None, user_id: str = "live", render_frames: bool = True,
                 frame_sink=None, emit_messages: bool = True):
        self.cfg = cfg or read_config(None)
        self.frame_sink = frame_sink
        self.emit_messages = emit_messages
        self.frames = load_clip_frames(clip_dir)
        h, w = self.frames[0].shape[:2]
        self.grid = grid_for_dims(w, h, self.cfg.pipeline.grid_interval_deg)
        self.states = build_aux_layout(self.cfg.pipeline)
        self.frame_index = 0
        self.playing = False
        self.finished = False
        self.render_frames = render_frames
        self.user_id = user_id
        self.out_dir = Path(out_dir) if out_dir is not None else None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        self.recorded: list[GazeRecord] = []
        self.pending: list[GazeRecord] = []
        self._last_live_t: int | None = None
        self.replay = None
        if gaze_source is not None:
            self.replay = {}
            for rec in gaze_source:
                self.replay.setdefault(rec.frame_index, []).append(rec)

    # ── message handling ─────────────────────────────────────────────

    def handle_message(self, text: str) -> list[dict]:
        """Apply one wire message; returns reply messages (errors only)."""
        try:
            msg = json.loads(text)
        except json.JSONDecodeError:
            return [_error("malformed JSON")]
        if not isinstance(msg, dict) or "type" not in msg:
            return [_error("message must be an object with a 'type'")]
        if msg["type"] == "gaze":
            return self._on_gaze(msg)
        if msg["type"] == "control":
            return self._on_control(msg)
        return [_error(f"unknown message type {msg['type']!r}")]

    def _on_gaze(self, msg) -> list[dict]:
        if self.replay is not None:
            return [_error("gaze rejected: session is replaying a recorded log")]
        try:
            t_ms = int(msg["t_ms"])
            x, y = float(msg["x_norm"]), float(msg["y_norm"])
        except (KeyError, TypeError, ValueError):
            return [_error("gaze message needs integer t_ms and numeric x_norm/y_norm")]
        if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
            return [_error(f"gaze ({x}, {y}) outside the display")]
        if self._last_live_t is not None and t_ms < self._last_live_t:
            return [_error(f"gaze t_ms {t_ms} decreases")]
        self._last_live_t = t_ms
        self.pending.append(GazeRecord(self.user_id, self.frame_index, t_ms, x, y, True))
        return []

    def _on_control(self, msg) -> list[dict]:
        action = msg.get("action")
        if action == "play":
            if self.finished:
                return [_error("clip already ended")]
            self.playing = True
            return []
        if action == "pause":
            self.playing = False
            return []
        if action == "seek":
            try:
                target = int(msg["value"])
            except (KeyError, TypeError, ValueError):
                return [_error("seek needs an integer 'value'")]
            if not 0 <= target < len(self.frames):
                return [_error(f"seek target {target} outside 0..{len(self.frames) - 1}")]
            self.frame_index = target
            return []
        if action == "end":
            return self.finish()
        return [_error(f"unknown control action {action!r}")]

    # ── playback ─────────────────────────────────────────────────────

    def aux_state_message(self) -> dict:
        return {
            "type": "aux_state",
            "windows": [
                {"id": s.id, "state": s.state, "alpha": s.reblur_alpha} for s in self.states
            ],
        }

    def advance(self) -> list[dict]:
        """One tick: apply queued gaze, step the state machine, render.

        The aux_state message always precedes its frame message so a client
        sees the states a frame was drawn with before the frame itself.
        """
        if self.finished or self.frame_index >= len(self.frames):
            return []
        k = self.frame_index
        if self.replay is not None:
            batch = self.replay.get(k, [])
        else:
            batch, self.pending = self.pending, []
            batch = [GazeRecord(r.user_id, k, r.t_ms, r.x_norm, r.y_norm, r.valid)
                     for r in batch]
        self.recorded.extend(batch)
        dt = 0.0 if k == 0 else 1.0 / self.cfg.pipeline.playback_fps
        self.states = step_dynamic_blur(
            self.states, [(r.x_norm, r.y_norm) for r in batch], dt, self.cfg.pipeline
        )
        t_ms = round(1000.0 * k / self.cfg.pipeline.playback_fps)
        messages = [self.aux_state_message()]
        if self.render_frames:
            composed = render_windb_frame(
                self.frames[k], self.grid, self.states, self.cfg.pipeline, k, t_ms
            )
            if self.frame_sink is not None:
                self.frame_sink(k, composed.raster)
            if self.emit_messages:
                ok, buf = cv2.imencode(".png", composed.raster)
                if not ok:
                    raise ServiceError(f"failed to encode frame {k}")
                messages.append({
                    "type": "frame",
                    "index": k,
                    "t_ms": t_ms,
                    "png_b64": base64.b64encode(buf.tobytes()).decode("ascii"),
                })
        if self.out_dir is not None:
            path = self.out_dir / f"state_{k:06d}.json"
            path.write_bytes(sidecar_bytes(k, [(s.id, s.state, s.reblur_alpha) for s in self.states]))
        self.frame_index += 1
        if self.frame_index >= len(self.frames):
            messages.extend(self.finish())
        return messages

    def run_to_end(self) -> int:
        """Headless drive: tick until the clip ends; returns frames played."""
        self.playing = True
        played = 0
        while not self.finished:
            self.advance()
            played += 1
        return played

    def finish(self) -> list[dict]:
        if self.finished:
            return []
        self.finished = True
        self.playing = False
        if self.out_dir is not None:
            write_gaze_log(self.recorded, self.out_dir / "gaze.csv")
        return [{"type": "control", "action": "end", "value": self.frame_index}]


def _error(detail: str) -> dict:
    return {"type": "error", "detail": detail}


# ── network layer ────────────────────────────────────────────────────


def create_app(session: Session):
    """FastAPI app exposing the session on ``/ws`` (one client at a time)."""
    app = FastAPI()
    app.state.session = session
    app.state.attached = False

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket):
        await websocket.accept()
        if app.state.attached:
            await websocket.send_text(json.dumps(_error("session busy: another client is attached")))
            await websocket.close()
            return
        app.state.attached = True
        period = 1.0 / session.cfg.pipeline.playback_fps
        receive = asyncio.ensure_future(websocket.receive_text())
        try:
            await websocket.send_text(json.dumps(session.aux_state_message()))
            next_tick = time.monotonic()
            while True:
                active = session.playing and not session.finished
                timeout = max(0.0, next_tick - time.monotonic()) if active else None
                done, _ = await asyncio.wait({receive}, timeout=timeout)
                if receive in done:
                    text = receive.result()
                    for reply in session.handle_message(text):
                        await websocket.send_text(json.dumps(reply))
                    receive = asyncio.ensure_future(websocket.receive_text())
                    if session.playing and not active:
                        next_tick = time.monotonic()  # play just started
                    continue
                if session.playing and not session.finished:
                    for msg in session.advance():
                        await websocket.send_text(json.dumps(msg))
                    next_tick += period
        except WebSocketDisconnect:
            pass
        finally:
            receive.cancel()
            session.playing = False  # a departing viewer only pauses playback
            app.state.attached = False

    return app


def serve(clip_dir, port: int = DEFAULT_PORT, out_dir=None, cfg: ToolConfig | None = None,
          gaze_source=None) -> None:
    """Run the session service on localhost until interrupted."""
    import uvicorn

    session = Session(clip_dir, cfg=cfg, out_dir=out_dir, gaze_source=gaze_source)
    app = create_app(session)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
