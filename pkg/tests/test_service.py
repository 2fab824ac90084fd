import dataclasses
import json

import cv2
import numpy as np
import pytest
from starlette.testclient import TestClient

from windb.io_formats import GazeRecord, read_config, read_gaze_log, write_gaze_log
from windb.pipeline import PipelineConfig, build_aux_layout
from windb.service import ServiceError, Session, create_app


def make_clip(tmp_path, n=5, w=96, h=48):
    clip = tmp_path / "clip"
    clip.mkdir(exist_ok=True)
    rng = np.random.default_rng(7)
    for k in range(n):
        frame = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
        cv2.imwrite(str(clip / f"frame_{k:06d}.png"), frame)
    return clip


def fast_cfg(fps=240.0):
    cfg = read_config(None)
    return dataclasses.replace(cfg, pipeline=PipelineConfig(playback_fps=fps))


def window_center(state):
    x0, y0, x1, y1 = state.display_rect
    return (x0 + x1) / 2, (y0 + y1) / 2


def gaze_msg(t_ms, x, y):
    return json.dumps({"type": "gaze", "t_ms": t_ms, "x_norm": x, "y_norm": y})


def control(action, value=0):
    return json.dumps({"type": "control", "action": action, "value": value})


class TestSessionCore:
    def test_fresh_session_all_blurred(self, tmp_path):
        session = Session(make_clip(tmp_path), cfg=fast_cfg())
        msg = session.aux_state_message()
        assert all(w["state"] == "B" and w["alpha"] == 1.0 for w in msg["windows"])
        assert len(msg["windows"]) == 6

    def test_empty_clip_dir_rejected(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        with pytest.raises(ServiceError, match="no .png frames"):
            Session(empty, cfg=fast_cfg())

    def test_gaze_hit_clears_before_next_frame(self, tmp_path):
        session = Session(make_clip(tmp_path), cfg=fast_cfg(), render_frames=False)
        x, y = window_center(session.states[0])
        assert session.handle_message(gaze_msg(0, x, y)) == []
        msgs = session.advance()
        aux = msgs[0]
        assert aux["type"] == "aux_state"
        assert aux["windows"][0]["state"] == "C"
        assert aux["windows"][0]["alpha"] == 0.0
        assert all(w["state"] == "B" for w in aux["windows"][1:])

    def test_gaze_outside_windows_changes_nothing_but_timers(self, tmp_path):
        session = Session(make_clip(tmp_path), cfg=fast_cfg(), render_frames=False)
        session.handle_message(gaze_msg(0, 0.5, 0.5))
        aux = session.advance()[0]
        assert all(w["state"] == "B" for w in aux["windows"])

    def test_malformed_json_is_error_but_session_lives(self, tmp_path):
        session = Session(make_clip(tmp_path), cfg=fast_cfg(), render_frames=False)
        replies = session.handle_message("{not json")
        assert replies[0]["type"] == "error"
        assert session.advance()  # still ticking

    def test_unknown_type_and_action_errors(self, tmp_path):
        session = Session(make_clip(tmp_path), cfg=fast_cfg(), render_frames=False)
        assert "unknown message type" in session.handle_message('{"type":"nope"}')[0]["detail"]
        assert "unknown control action" in session.handle_message(control("warp"))[0]["detail"]

    def test_out_of_range_gaze_rejected(self, tmp_path):
        session = Session(make_clip(tmp_path), cfg=fast_cfg(), render_frames=False)
        replies = session.handle_message(gaze_msg(0, 1.4, 0.2))
        assert replies[0]["type"] == "error"
        assert session.pending == []

    def test_playback_clock_exact_at_sixty_fps(self, tmp_path):
        session = Session(make_clip(tmp_path, n=61), cfg=fast_cfg(fps=60.0), render_frames=False)
        session.playing = True
        t_last = None
        for _ in range(61):
            session.advance()
        assert session.frame_index == 61
        # frame 60 sits exactly one second into the clip
        assert round(1000.0 * 60 / 60.0) == 1000

    def test_seek_bounds_checked(self, tmp_path):
        session = Session(make_clip(tmp_path), cfg=fast_cfg(), render_frames=False)
        assert session.handle_message(control("seek", 99))[0]["type"] == "error"
        assert session.handle_message(control("seek", 2)) == []
        assert session.frame_index == 2

    def test_end_finalizes_gaze_log(self, tmp_path):
        out = tmp_path / "out"
        session = Session(make_clip(tmp_path), cfg=fast_cfg(), out_dir=out, render_frames=False)
        x, y = window_center(session.states[1])
        session.handle_message(gaze_msg(5, x, y))
        session.run_to_end()
        assert session.finished
        log = read_gaze_log(out / "gaze.csv")
        assert len(log) == 1 and log[0].user_id == "live"
        sidecars = sorted(out.glob("state_*.json"))
        assert len(sidecars) == 5

    def test_frame_message_carries_png(self, tmp_path):
        session = Session(make_clip(tmp_path, n=1), cfg=fast_cfg())
        msgs = session.advance()
        frame_msgs = [m for m in msgs if m["type"] == "frame"]
        assert len(frame_msgs) == 1
        import base64
        png = base64.b64decode(frame_msgs[0]["png_b64"])
        decoded = cv2.imdecode(np.frombuffer(png, np.uint8), cv2.IMREAD_COLOR)
        assert decoded.shape == (48, 96, 3)


class TestReplay:
    def make_log(self, session, tmp_path):
        states = session.states
        recs = [
            GazeRecord("u0", 1, 20, *window_center(states[0]), True),
            GazeRecord("u0", 2, 40, 0.5, 0.5, True),
            GazeRecord("u1", 2, 41, *window_center(states[4]), True),
        ]
        path = tmp_path / "trace.csv"
        write_gaze_log(recs, path)
        return path

    def test_replay_rejects_network_gaze(self, tmp_path):
        clip = make_clip(tmp_path)
        probe = Session(clip, cfg=fast_cfg(), render_frames=False)
        log = self.make_log(probe, tmp_path)
        session = Session(clip, cfg=fast_cfg(), gaze_source=read_gaze_log(log), render_frames=False)
        replies = session.handle_message(gaze_msg(0, 0.5, 0.5))
        assert "replay" in replies[0]["detail"]

    def test_headless_replay_deterministic(self, tmp_path):
        clip = make_clip(tmp_path)
        probe = Session(clip, cfg=fast_cfg(), render_frames=False)
        log = self.make_log(probe, tmp_path)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            s = Session(clip, cfg=fast_cfg(), out_dir=out,
                        gaze_source=read_gaze_log(log), render_frames=False)
            s.run_to_end()
            outs.append(out)
        for f in sorted(outs[0].glob("state_*.json")):
            assert f.read_bytes() == (outs[1] / f.name).read_bytes()

    def test_replay_applies_gaze_at_recorded_frames(self, tmp_path):
        clip = make_clip(tmp_path)
        probe = Session(clip, cfg=fast_cfg(), render_frames=False)
        log = self.make_log(probe, tmp_path)
        session = Session(clip, cfg=fast_cfg(), gaze_source=read_gaze_log(log), render_frames=False)
        session.advance()  # frame 0: nothing yet
        assert all(s.state == "B" for s in session.states)
        session.advance()  # frame 1: window 0 hit
        assert session.states[0].state == "C"
        session.advance()  # frame 2: window 4 hit
        assert session.states[4].state == "C"


class TestWebSocket:
    def collect_until_end(self, ws, limit=200):
        messages = []
        for _ in range(limit):
            msg = json.loads(ws.receive_text())
            messages.append(msg)
            if msg["type"] == "control" and msg["action"] == "end":
                break
        return messages

    def test_initial_state_then_stream_and_end(self, tmp_path):
        clip = make_clip(tmp_path, n=4)
        out = tmp_path / "out"
        session = Session(clip, cfg=fast_cfg(), out_dir=out)
        client = TestClient(create_app(session))
        with client.websocket_connect("/ws") as ws:
            first = json.loads(ws.receive_text())
            assert first["type"] == "aux_state"
            assert all(w["state"] == "B" and w["alpha"] == 1.0 for w in first["windows"])
            ws.send_text(control("play"))
            messages = self.collect_until_end(ws)
        frame_indices = [m["index"] for m in messages if m["type"] == "frame"]
        assert frame_indices == [0, 1, 2, 3]
        # every frame message is preceded by the aux_state it was drawn with
        for i, m in enumerate(messages):
            if m["type"] == "frame":
                assert messages[i - 1]["type"] == "aux_state"
        assert (out / "gaze.csv").exists()

    def test_gaze_over_websocket_clears_window(self, tmp_path):
        clip = make_clip(tmp_path, n=30)
        session = Session(clip, cfg=fast_cfg(fps=120.0))
        client = TestClient(create_app(session))
        target = window_center(session.states[2])
        with client.websocket_connect("/ws") as ws:
            ws.receive_text()
            ws.send_text(gaze_msg(1, *target))
            ws.send_text(control("play"))
            seen_clear = False
            for _ in range(40):
                msg = json.loads(ws.receive_text())
                if msg["type"] == "aux_state" and msg["windows"][2]["state"] == "C":
                    seen_clear = True
                    break
            ws.send_text(control("pause"))
        assert seen_clear

    def test_second_client_refused_busy(self, tmp_path):
        clip = make_clip(tmp_path, n=3)
        session = Session(clip, cfg=fast_cfg())
        client = TestClient(create_app(session))
        with client.websocket_connect("/ws") as a:
            a.receive_text()
            with client.websocket_connect("/ws") as b:
                reply = json.loads(b.receive_text())
                assert reply["type"] == "error"
                assert "busy" in reply["detail"]

    def test_disconnect_only_pauses(self, tmp_path):
        clip = make_clip(tmp_path, n=50)
        session = Session(clip, cfg=fast_cfg(fps=240.0))
        client = TestClient(create_app(session))
        with client.websocket_connect("/ws") as ws:
            ws.receive_text()
            ws.send_text(control("play"))
            ws.receive_text()
        assert session.playing is False
        assert not session.finished
        with client.websocket_connect("/ws") as ws:
            first = json.loads(ws.receive_text())
            assert first["type"] == "aux_state"
