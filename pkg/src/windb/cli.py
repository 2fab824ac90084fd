"""Command-line entry point.

Subcommands:

* ``render``   -- offline synthesis of a clip at a selectable stage
* ``serve``    -- run the local session service (WebSocket on localhost)
* ``simulate`` -- headless replay of a recorded gaze log (no network)
* ``analyze``  -- split / metrics / loss / spots over logs and map files

Every run prints the resolved configuration to stderr; stdout carries the
data. Exit codes: 0 ok, 1 input error, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import traceback
from pathlib import Path

import cv2

from .analytics import (
    AnalyticsError,
    classify_clip,
    frame_fixation_centers,
    gt_shift_sequence,
    max_window_shift,
    shifting_loss,
    spot_shift_sequence,
)
from .geometry import GeometryError
from .io_formats import FormatError, format_config, read_config, read_gaze_log, read_map, records_to_samples
from .metrics import directions_to_cells, evaluate_all
from .pipeline import (
    apply_mesh,
    blur_overlaps_frame,
    build_aux_layout,
    build_mesh_mask,
    compose_aux_overlays,
    grid_for_dims,
    project_distortion_free,
)
from .service import DEFAULT_PORT, ServiceError, Session, load_clip_frames
from .validation import FrameError

STAGES = ("erp-star", "mesh", "dvb", "windb-minus", "windb")


class CliInputError(ValueError):
    """Bad flags or unusable inputs (exit code 1)."""


_INPUT_ERRORS = (
    CliInputError,
    AnalyticsError,
    FormatError,
    FrameError,
    GeometryError,
    ServiceError,
    FileNotFoundError,
    NotADirectoryError,
)


class _Parser(argparse.ArgumentParser):
    # Flag mistakes are input errors (exit 1), not argparse's default 2.
    def error(self, message):
        raise CliInputError(f"{message}\n{self.format_usage()}".rstrip())


def build_parser() -> _Parser:
    parser = _Parser(prog="windb", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    render = sub.add_parser("render", parents=[_config_parent()],
                            help="render a clip offline at a pipeline stage")
    render.add_argument("--input-dir", required=True, type=Path)
    render.add_argument("--out-dir", required=True, type=Path)
    render.add_argument("--stage", choices=STAGES, default="windb")
    render.add_argument("--gaze", type=Path, default=None,
                        help="recorded gaze log to replay (stage windb)")
    render.set_defaults(func=cmd_render)

    serve = sub.add_parser("serve", parents=[_config_parent()],
                           help="run the local session service")
    serve.add_argument("--port", type=int, default=DEFAULT_PORT)
    serve.add_argument("--clip-dir", required=True, type=Path)
    serve.add_argument("--out-dir", type=Path, default=None)
    serve.add_argument("--replay-gaze", type=Path, default=None,
                       help="serve in replay mode from this gaze log")
    serve.set_defaults(func=cmd_serve)

    simulate = sub.add_parser("simulate", parents=[_config_parent()],
                              help="headless session replay")
    simulate.add_argument("--clip-dir", required=True, type=Path)
    simulate.add_argument("--gaze", required=True, type=Path)
    simulate.add_argument("--out-dir", required=True, type=Path)
    simulate.set_defaults(func=cmd_simulate)

    analyze = sub.add_parser("analyze", help="dataset and map analytics")
    averb = analyze.add_subparsers(dest="verb", required=True)

    split = averb.add_parser("split", parents=[_config_parent()],
                             help="blind/ordinary clip classification")
    split.add_argument("--gaze", required=True, type=Path)
    split.add_argument("--json", action="store_true")
    split.set_defaults(func=cmd_split)

    metrics = averb.add_parser("metrics", parents=[_config_parent()],
                               help="saliency metrics of a map pair")
    metrics.add_argument("--pred", required=True, type=Path)
    metrics.add_argument("--gt", type=Path, default=None)
    metrics.add_argument("--fixations", type=Path, default=None,
                         help="gaze log supplying fixation points")
    metrics.add_argument("--json", action="store_true")
    metrics.set_defaults(func=cmd_metrics)

    loss = averb.add_parser("loss", parents=[_config_parent()],
                            help="shifting loss over prediction/gt map sequences")
    loss.add_argument("--pred-dir", required=True, type=Path)
    loss.add_argument("--gt-dir", required=True, type=Path)
    loss.add_argument("--pair-step", type=int, default=1)
    loss.add_argument("--json", action="store_true")
    loss.set_defaults(func=cmd_loss)

    spots = averb.add_parser("spots", parents=[_config_parent()],
                             help="per-frame spot centroids and shift weights")
    spots.add_argument("--maps-dir", required=True, type=Path)
    spots.add_argument("--pair-step", type=int, default=1)
    spots.add_argument("--json", action="store_true")
    spots.set_defaults(func=cmd_spots)

    return parser


def _config_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", type=Path, default=None,
                        help="key = value configuration file")
    return parent


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = read_config(args.config)
        print("resolved configuration:", file=sys.stderr)
        for line in format_config(cfg).rstrip().split("\n"):
            print(f"  {line}", file=sys.stderr)
        return args.func(args, cfg) or 0
    except _INPUT_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        # bind failures, unwritable outputs and friends
        print(f"error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1
    except Exception:
        traceback.print_exc()
        return 2


# ── subcommands ──────────────────────────────────────────────────────


def cmd_render(args, cfg) -> int:
    out_dir = args.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.stage == "windb":
        if args.gaze is not None:
            source = read_gaze_log(args.gaze)
        else:
            print("warning: no --gaze given; auxiliary windows stay blurred",
                  file=sys.stderr)
            source = []
        session = Session(
            args.input_dir, cfg=cfg, out_dir=out_dir, gaze_source=source,
            emit_messages=False,
            frame_sink=lambda k, raster: cv2.imwrite(str(out_dir / f"frame_{k:06d}.png"), raster),
        )
        n = session.run_to_end()
        print(f"rendered {n} frames to {out_dir}")
        return 0
    frames = load_clip_frames(args.input_dir)
    h, w = frames[0].shape[:2]
    gm = grid_for_dims(w, h, cfg.pipeline.grid_interval_deg)
    clear_states = None
    if args.stage == "windb-minus":
        clear_states = build_aux_layout(cfg.pipeline)
        for s in clear_states:
            s.state, s.reblur_alpha = "C", 0.0
    for k, frame in enumerate(frames):
        out = project_distortion_free(frame, gm)
        if args.stage in ("dvb", "windb-minus"):
            out = blur_overlaps_frame(out, gm, cfg.pipeline)
        if args.stage != "erp-star":
            out = apply_mesh(out, build_mesh_mask(gm, cfg.pipeline.mesh_thickness_px))
        if args.stage == "windb-minus":
            out = compose_aux_overlays(out, clear_states, frame, cfg.pipeline)
        cv2.imwrite(str(out_dir / f"frame_{k:06d}.png"), out)
    print(f"rendered {len(frames)} frames to {out_dir}")
    return 0


def cmd_serve(args, cfg) -> int:
    from .service import serve

    source = read_gaze_log(args.replay_gaze) if args.replay_gaze is not None else None
    print(f"serving on ws://127.0.0.1:{args.port}/ws", file=sys.stderr)
    try:
        serve(args.clip_dir, port=args.port, out_dir=args.out_dir, cfg=cfg, gaze_source=source)
    except SystemExit as e:
        # uvicorn exits like this when it cannot bind the port
        if e.code:
            raise CliInputError(f"could not serve on 127.0.0.1:{args.port} (port busy?)") from None
    return 0


def cmd_simulate(args, cfg) -> int:
    session = Session(
        args.clip_dir, cfg=cfg, out_dir=args.out_dir,
        gaze_source=read_gaze_log(args.gaze), render_frames=False,
    )
    n = session.run_to_end()
    print(f"simulated {n} frames; sidecars in {args.out_dir}")
    return 0


def cmd_split(args, cfg) -> int:
    records = read_gaze_log(args.gaze)
    samples = records_to_samples(records, build_aux_layout(cfg.pipeline))
    centers = [c for _, c in frame_fixation_centers(samples, cfg.cluster)]
    label = classify_clip(centers, cfg.shift_window, cfg.shift_threshold_deg)
    peak_deg = math.degrees(max_window_shift(centers, cfg.shift_window))
    if args.json:
        print(json.dumps({"label": label, "max_shift_deg": peak_deg, "frames": len(centers)}))
    else:
        print(f"{label}\tmax_shift_deg={peak_deg:.3f}\tframes={len(centers)}")
    return 0


def cmd_metrics(args, cfg) -> int:
    pred = read_map(args.pred)
    gt = read_map(args.gt) if args.gt is not None else None
    fixations = None
    if args.fixations is not None:
        records = read_gaze_log(args.fixations)
        samples = records_to_samples(records, build_aux_layout(cfg.pipeline))
        fixations = directions_to_cells(
            [s.direction for s in samples if s.valid], pred.shape
        )
    scores = evaluate_all(pred, gt=gt, fixations=fixations)
    if not scores:
        raise CliInputError("nothing to evaluate: give --gt and/or --fixations")
    if args.json:
        print(json.dumps(scores))
    else:
        for name in ("AUC-J", "SIM", "CC", "NSS"):
            if name in scores:
                print(f"{name}\t{scores[name]:.6f}")
    return 0


def _load_map_dir(path: Path) -> list:
    files = sorted(p for p in Path(path).iterdir() if p.suffix in (".pgm", ".pnm"))
    if not files:
        raise CliInputError(f"no .pgm map files in {path}")
    return [read_map(p) for p in files]


def cmd_loss(args, cfg) -> int:
    preds = _load_map_dir(args.pred_dir)
    gts = _load_map_dir(args.gt_dir)
    if len(preds) != len(gts):
        raise CliInputError(f"{len(preds)} prediction maps vs {len(gts)} ground-truth maps")
    _, omegas = spot_shift_sequence(preds, args.pair_step, cfg.spot_filter)
    _, omega_star = gt_shift_sequence(gts, args.pair_step, cfg.cluster)
    value = shifting_loss(preds, gts, omegas, omega_star, cfg.loss, cfg.cluster)
    if args.json:
        print(json.dumps({"loss": value, "frames": len(preds), "pair_step": args.pair_step}))
    else:
        print(f"{value:.6f}")
    return 0


def cmd_spots(args, cfg) -> int:
    maps = _load_map_dir(args.maps_dir)
    spots, omegas = spot_shift_sequence(maps, args.pair_step, cfg.spot_filter)
    if args.json:
        payload = {
            "spots": [
                None if s is None else {
                    "frame": t,
                    "lat_deg": math.degrees(s.centroid.lat),
                    "lon_deg": math.degrees(s.centroid.lon),
                    "mean_response": s.mean_response,
                    "cells": len(s.cells),
                }
                for t, s in enumerate(spots)
            ],
            "omegas": omegas,
            "pair_step": args.pair_step,
        }
        print(json.dumps(payload))
        return 0
    for t, s in enumerate(spots):
        if s is None:
            print(f"spot\t{t}\t-\t-\t-")
        else:
            print(f"spot\t{t}\t{math.degrees(s.centroid.lat):.3f}"
                  f"\t{math.degrees(s.centroid.lon):.3f}\t{s.mean_response:.6f}")
    for t, w in enumerate(omegas):
        print(f"omega\t{t}\t{t + args.pair_step}\t{w:.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
