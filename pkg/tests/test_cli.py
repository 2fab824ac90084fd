import json
import math

import cv2
import numpy as np
import pytest

from windb.analytics import ClusterConfig, shifted_ground_truth
from windb.cli import main
from windb.geometry import GridSpec, build_grid
from windb.io_formats import GazeRecord, read_map, write_gaze_log, write_map
from windb.pipeline import PipelineConfig, build_aux_layout, build_mesh_mask


def make_clip(tmp_path, name="clip", n=4, w=96, h=48, constant=None):
    clip = tmp_path / name
    clip.mkdir()
    rng = np.random.default_rng(3)
    for k in range(n):
        if constant is None:
            frame = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
        else:
            frame = np.full((h, w, 3), constant, dtype=np.uint8)
        cv2.imwrite(str(clip / f"frame_{k:06d}.png"), frame)
    return clip


def load_frames(out_dir):
    return [cv2.imread(str(p), cv2.IMREAD_COLOR) for p in sorted(out_dir.glob("*.png"))]


class TestRender:
    def test_erp_star_constant_clip_identity(self, tmp_path, capsys):
        clip = make_clip(tmp_path, constant=120)
        out = tmp_path / "out"
        rc = main(["render", "--input-dir", str(clip), "--out-dir", str(out), "--stage", "erp-star"])
        assert rc == 0
        for frame in load_frames(out):
            assert np.all(frame == 120)
        assert "resolved configuration" in capsys.readouterr().err

    def test_mesh_stage_blacks_exact_bands(self, tmp_path):
        clip = make_clip(tmp_path, constant=77)
        out = tmp_path / "out"
        assert main(["render", "--input-dir", str(clip), "--out-dir", str(out), "--stage", "mesh"]) == 0
        gm = build_grid(GridSpec(96, 48, 30.0))
        mesh = build_mesh_mask(gm, 5)
        for frame in load_frames(out):
            assert np.all(frame[~mesh.mask] == 0)
            assert np.all(frame[mesh.mask] == 77)

    def test_windb_without_gaze_warns_and_keeps_blur(self, tmp_path, capsys):
        clip = make_clip(tmp_path, n=2)
        out = tmp_path / "out"
        rc = main(["render", "--input-dir", str(clip), "--out-dir", str(out), "--stage", "windb"])
        assert rc == 0
        assert "stay blurred" in capsys.readouterr().err
        sidecars = sorted(out.glob("state_*.json"))
        assert len(sidecars) == 2
        for p in sidecars:
            payload = json.loads(p.read_text())
            assert all(w["state"] == "B" for w in payload["windows"])

    def test_windb_replay_matches_simulate_sidecars(self, tmp_path):
        clip = make_clip(tmp_path, n=5)
        states = build_aux_layout(PipelineConfig())
        x0, y0, x1, y1 = states[0].display_rect
        recs = [
            GazeRecord("u", 1, 10, (x0 + x1) / 2, (y0 + y1) / 2, True),
            GazeRecord("u", 3, 40, 0.5, 0.5, True),
        ]
        gaze = tmp_path / "gaze.csv"
        write_gaze_log(recs, gaze)
        out_render = tmp_path / "render_out"
        out_sim = tmp_path / "sim_out"
        assert main(["render", "--input-dir", str(clip), "--out-dir", str(out_render),
                     "--stage", "windb", "--gaze", str(gaze)]) == 0
        assert main(["simulate", "--clip-dir", str(clip), "--gaze", str(gaze),
                     "--out-dir", str(out_sim)]) == 0
        render_sidecars = sorted(out_render.glob("state_*.json"))
        assert len(render_sidecars) == 5
        for p in render_sidecars:
            assert p.read_bytes() == (out_sim / p.name).read_bytes()
        assert len(list(out_render.glob("frame_*.png"))) == 5

    def test_missing_input_dir_exit_one(self, tmp_path, capsys):
        rc = main(["render", "--input-dir", str(tmp_path / "nope"), "--out-dir", str(tmp_path / "o")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestAnalyzeSplit:
    def write_trace(self, tmp_path, jump_deg):
        recs = []
        t = 0
        for frame in range(20):
            lon_deg = jump_deg if frame >= 10 else 0.0
            x = (lon_deg + 180.0) / 360.0
            for u in range(3):
                recs.append(GazeRecord(f"u{u}", frame, t, x, 0.5 + 0.001 * u, True))
            t += 33
        path = tmp_path / f"trace_{int(jump_deg)}.csv"
        write_gaze_log(sorted(recs, key=lambda r: (r.user_id, r.t_ms)), path)
        return path

    def test_big_jump_blind(self, tmp_path, capsys):
        path = self.write_trace(tmp_path, 120.0)
        assert main(["analyze", "split", "--gaze", str(path), "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["label"] == "blind"
        assert payload["max_shift_deg"] == pytest.approx(120.0, abs=1.0)

    def test_constant_trace_ordinary(self, tmp_path, capsys):
        path = self.write_trace(tmp_path, 0.0)
        assert main(["analyze", "split", "--gaze", str(path)]) == 0
        assert capsys.readouterr().out.startswith("ordinary")

    def test_ninety_degree_ordinary(self, tmp_path, capsys):
        path = self.write_trace(tmp_path, 90.0)
        assert main(["analyze", "split", "--gaze", str(path), "--json"]) == 0
        assert json.loads(capsys.readouterr().out)["label"] == "ordinary"

    def test_too_few_frames_exit_one(self, tmp_path, capsys):
        recs = [GazeRecord("u", f, f * 33, 0.5, 0.5, True) for f in range(5)]
        path = tmp_path / "short.csv"
        write_gaze_log(recs, path)
        assert main(["analyze", "split", "--gaze", str(path)]) == 1


class TestAnalyzeMetrics:
    def test_self_metrics_perfect(self, tmp_path, capsys):
        rng = np.random.default_rng(5)
        m = rng.random((16, 32))
        p = tmp_path / "m.pgm"
        write_map(m, p)
        rc = main(["analyze", "metrics", "--pred", str(p), "--gt", str(p), "--json"])
        assert rc == 0
        scores = json.loads(capsys.readouterr().out)
        assert scores["CC"] == pytest.approx(1.0, abs=1e-12)
        assert scores["SIM"] == pytest.approx(1.0, abs=1e-12)

    def test_text_table_format(self, tmp_path, capsys):
        m = np.zeros((8, 16))
        m[3, 7] = 1.0
        p = tmp_path / "m.pgm"
        write_map(m, p)
        assert main(["analyze", "metrics", "--pred", str(p), "--gt", str(p)]) == 0
        lines = capsys.readouterr().out.strip().split("\n")
        assert lines[0].startswith("SIM\t")
        assert lines[1].startswith("CC\t")

    def test_nothing_to_evaluate_exit_one(self, tmp_path):
        p = tmp_path / "m.pgm"
        write_map(np.ones((4, 4)), p)
        assert main(["analyze", "metrics", "--pred", str(p)]) == 1


class TestAnalyzeLossAndSpots:
    def build_sequences(self, tmp_path):
        # Single-cell maps so the filter spot and the cluster spot coincide.
        cells = [(4, 6), (4, 20), (10, 28)]
        cluster = ClusterConfig(eps_deg=5.0, min_pts=1)
        gts, omegas = [], []
        for r, c in cells:
            g = np.zeros((16, 32))
            g[r, c] = 1.0
            gts.append(g)
        gt_dir = tmp_path / "gt"
        pred_dir = tmp_path / "pred"
        gt_dir.mkdir()
        pred_dir.mkdir()
        from windb.analytics import gt_shift_sequence
        _, omega_star = gt_shift_sequence(gts, 1, cluster)
        for t, g in enumerate(gts):
            w_star = omega_star[t] if t < len(omega_star) else 0.0
            gt_star, _ = shifted_ground_truth(g, w_star, cluster)
            write_map(g, gt_dir / f"m_{t:03d}.pgm")
            write_map(gt_star, pred_dir / f"m_{t:03d}.pgm")
        return pred_dir, gt_dir

    def test_loss_zero_when_pred_is_lit_gt(self, tmp_path, capsys):
        pred_dir, gt_dir = self.build_sequences(tmp_path)
        cfgfile = tmp_path / "c.cfg"
        cfgfile.write_text("cluster_min_pts = 1\ncluster_eps_deg = 5\n")
        rc = main(["analyze", "loss", "--pred-dir", str(pred_dir), "--gt-dir", str(gt_dir),
                   "--config", str(cfgfile), "--json"])
        assert rc == 0
        assert json.loads(capsys.readouterr().out)["loss"] == 0.0

    def test_spots_output(self, tmp_path, capsys):
        pred_dir, _ = self.build_sequences(tmp_path)
        rc = main(["analyze", "spots", "--maps-dir", str(pred_dir), "--json"])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert len(payload["spots"]) == 3
        assert len(payload["omegas"]) == 2
        assert payload["spots"][0]["cells"] == 1

    def test_mismatched_sequence_lengths_exit_one(self, tmp_path):
        pred_dir, gt_dir = self.build_sequences(tmp_path)
        extra = np.zeros((16, 32))
        extra[0, 0] = 1.0
        write_map(extra, gt_dir / "m_999.pgm")
        assert main(["analyze", "loss", "--pred-dir", str(pred_dir), "--gt-dir", str(gt_dir)]) == 1


class TestCliContract:
    def test_unknown_flag_exit_one(self, capsys):
        assert main(["render", "--frobnicate"]) == 1
        assert "error:" in capsys.readouterr().err

    def test_serve_defaults_to_port_8390(self):
        from windb.cli import build_parser

        args = build_parser().parse_args(["serve", "--clip-dir", "clip"])
        assert args.port == 8390

    def test_unknown_subcommand_exit_one(self):
        assert main(["transmogrify"]) == 1

    def test_config_flows_into_run(self, tmp_path, capsys):
        clip = make_clip(tmp_path, constant=10, n=1)
        out = tmp_path / "out"
        cfgfile = tmp_path / "c.cfg"
        cfgfile.write_text("mesh_thickness_px = 3\n")
        rc = main(["render", "--input-dir", str(clip), "--out-dir", str(out),
                   "--stage", "mesh", "--config", str(cfgfile)])
        assert rc == 0
        err = capsys.readouterr().err
        assert "mesh_thickness_px = 3" in err
        gm = build_grid(GridSpec(96, 48, 30.0))
        mesh = build_mesh_mask(gm, 3)
        frame = load_frames(out)[0]
        assert np.all(frame[~mesh.mask] == 0)
        assert np.all(frame[mesh.mask] == 10)

    def test_serve_busy_port_exit_one(self, tmp_path, capsys):
        import socket

        clip = make_clip(tmp_path, n=1)
        sock = socket.socket()
        sock.bind(("127.0.0.1", 0))
        port = sock.getsockname()[1]
        try:
            rc = main(["serve", "--clip-dir", str(clip), "--port", str(port)])
        finally:
            sock.close()
        assert rc == 1
        assert "port" in capsys.readouterr().err
