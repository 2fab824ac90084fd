"""File formats: gaze logs, fixation-map files, config files, state sidecars.

All readers reject malformed input with the offending line or byte offset;
none of them guess. Round-trip identities:

* Gaze logs: ``write(read(x)) == x`` byte-exactly for canonical logs
  (floats are written as their shortest round-trip decimal).
* Map files: 16-bit quantization, per-cell error at most ``max / 65535``.

Gaze log (CSV, one record per line)::

    user_id,frame_index,t_ms,x_norm,y_norm,valid
    u0,0,0,0.5,0.5,1

``x_norm``/``y_norm`` are normalized display coordinates in [0, 1];
``t_ms`` must be non-decreasing within a user; ``valid`` is 0 or 1.

Map file (binary, 16-bit single-channel PNM)::

    P5\\n# scale <max>\\n<width> <height>\\n65535\\n<rows of big-endian uint16>

Row 0 is the north edge. The scale comment records the value the maximal
code 65535 maps back to; readers without it get values in [0, 1].

State sidecar (one canonical JSON object per frame)::

    {"frame_index":3,"windows":[{"id":0,"state":"B","alpha":1.0},...]}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .validation import check_map

__all__ = [
    "FormatError",
    "GazeRecord",
    "GAZE_HEADER",
    "read_gaze_log",
    "write_gaze_log",
    "read_map",
    "write_map",
    "read_config",
    "format_config",
    "ToolConfig",
    "sidecar_bytes",
    "write_sidecar",
    "read_sidecar",
    "records_to_samples",
]

GAZE_HEADER = "user_id,frame_index,t_ms,x_norm,y_norm,valid"


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class GazeRecord:
    """One gaze log row; coordinates are normalized display space."""

    user_id: str
    frame_index: int
    t_ms: int
    x_norm: float
    y_norm: float
    valid: bool = True


def _check_record(rec: GazeRecord, where: str) -> None:
    if "," in rec.user_id or not rec.user_id:
        raise FormatError(f"{where}: bad user id {rec.user_id!r}")
    if rec.frame_index < 0:
        raise FormatError(f"{where}: negative frame index {rec.frame_index}")
    for name, v in (("x_norm", rec.x_norm), ("y_norm", rec.y_norm)):
        if not (math.isfinite(v) and 0.0 <= v <= 1.0):
            raise FormatError(f"{where}: {name}={v!r} outside [0, 1]")


def read_gaze_log(path) -> list[GazeRecord]:
    """Parse a gaze log; every complaint names its line number."""
    text = Path(path).read_text(encoding="ascii")
    lines = text.split("\n")
    if not lines or lines[0] != GAZE_HEADER:
        raise FormatError(f"line 1: expected header {GAZE_HEADER!r}")
    records = []
    last_t: dict[str, int] = {}
    for n, line in enumerate(lines[1:], start=2):
        if line == "":
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise FormatError(f"line {n}: expected 6 fields, got {len(parts)}")
        try:
            rec = GazeRecord(
                user_id=parts[0],
                frame_index=int(parts[1]),
                t_ms=int(parts[2]),
                x_norm=float(parts[3]),
                y_norm=float(parts[4]),
                valid=_parse_valid(parts[5]),
            )
        except FormatError:
            raise
        except ValueError as e:
            raise FormatError(f"line {n}: {e}") from None
        _check_record(rec, f"line {n}")
        if rec.user_id in last_t and rec.t_ms < last_t[rec.user_id]:
            raise FormatError(
                f"line {n}: t_ms {rec.t_ms} decreases for user {rec.user_id!r}"
            )
        last_t[rec.user_id] = rec.t_ms
        records.append(rec)
    return records


def _parse_valid(token: str) -> bool:
    if token == "1":
        return True
    if token == "0":
        return False
    raise FormatError(f"valid flag must be 0 or 1, got {token!r}")


def write_gaze_log(records, path) -> None:
    """Write records in canonical form (shortest round-trip decimals)."""
    lines = [GAZE_HEADER]
    last_t: dict[str, int] = {}
    for i, rec in enumerate(records):
        where = f"record {i}"
        _check_record(rec, where)
        if rec.user_id in last_t and rec.t_ms < last_t[rec.user_id]:
            raise FormatError(f"{where}: t_ms decreases for user {rec.user_id!r}")
        last_t[rec.user_id] = rec.t_ms
        lines.append(
            f"{rec.user_id},{rec.frame_index},{rec.t_ms},"
            f"{rec.x_norm!r},{rec.y_norm!r},{1 if rec.valid else 0}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


# ── fixation map files ───────────────────────────────────────────────


def write_map(grid, path) -> None:
    g = check_map(grid)
    h, w = g.shape
    scale = float(g.max())
    if scale > 0:
        codes = np.rint(g / scale * 65535.0).astype(">u2")
    else:
        codes = np.zeros((h, w), dtype=">u2")
    header = f"P5\n# scale {scale!r}\n{w} {h}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + codes.tobytes())


def read_map(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5\n"):
        raise FormatError("offset 0: not a P5 map file")
    pos = 3
    scale = None
    tokens = []
    while len(tokens) < 3:
        if pos >= len(raw):
            raise FormatError(f"offset {pos}: truncated header")
        if raw[pos:pos + 1] == b"#":
            end = raw.index(b"\n", pos)
            comment = raw[pos + 1:end].decode("ascii").strip()
            if comment.startswith("scale "):
                scale = float(comment[6:])
            pos = end + 1
            continue
        end = pos
        while end < len(raw) and not raw[end:end + 1].isspace():
            end += 1
        if end == pos:
            pos += 1
            continue
        tokens.append((pos, raw[pos:end].decode("ascii")))
        pos = end + 1
    try:
        w, h, maxval = (int(t) for _, t in tokens)
    except ValueError:
        raise FormatError(f"offset {tokens[0][0]}: non-numeric header field") from None
    if maxval != 65535:
        raise FormatError(f"offset {tokens[2][0]}: maxval must be 65535, got {maxval}")
    if w <= 0 or h <= 0:
        raise FormatError(f"offset {tokens[0][0]}: bad dimensions {w}x{h}")
    data = raw[pos:]
    if len(data) != w * h * 2:
        raise FormatError(
            f"offset {pos}: expected {w * h * 2} payload bytes, got {len(data)}"
        )
    codes = np.frombuffer(data, dtype=">u2").reshape(h, w).astype(np.float64)
    if scale is None:
        return codes / 65535.0
    if scale == 0.0:
        return np.zeros((h, w), dtype=np.float64)
    return codes / 65535.0 * scale


# ── configuration files ──────────────────────────────────────────────


@dataclass(frozen=True)
class ToolConfig:
    """Resolved configuration bundle for the CLI, service, and analytics."""

    pipeline: "PipelineConfig"
    spot_filter: "FilterConfig"
    loss: "LossConfig"
    cluster: "ClusterConfig"
    fixation_sigma_deg: float = 2.0
    shift_window: int = 15
    shift_threshold_deg: float = 110.0


_CONFIG_KEYS = {
    # key: (section, field, parser)
    "grid_interval_deg": ("pipeline", "grid_interval_deg", float),
    "mesh_thickness_px": ("pipeline", "mesh_thickness_px", int),
    "blur_ksize": ("pipeline", "blur_ksize", int),
    "blur_sigma": ("pipeline", "blur_sigma", float),
    "aux_vertical_deg": ("pipeline", "aux_vertical_deg", float),
    "aux_horizontal_deg": ("pipeline", "aux_horizontal_deg", float),
    "aux_count": ("pipeline", "aux_count", int),
    "clear_hold_s": ("pipeline", "clear_hold_s", float),
    "reblur_duration_s": ("pipeline", "reblur_duration_s", float),
    "playback_fps": ("pipeline", "playback_fps", float),
    "spot_threshold": ("filter", "threshold", float),
    "loss_lambda": ("loss", "weight", float),
    "cluster_eps_deg": ("cluster", "eps_deg", float),
    "cluster_min_pts": ("cluster", "min_pts", int),
    "fixation_sigma_deg": ("top", "fixation_sigma_deg", float),
    "shift_window": ("top", "shift_window", int),
    "shift_threshold_deg": ("top", "shift_threshold_deg", float),
}


def read_config(path=None) -> ToolConfig:
    """Parse a ``key = value`` config file; absent keys use the defaults.

    Unknown keys are rejected (typos must not silently fall back); ``#``
    starts a comment.
    """
    from .analytics import ClusterConfig, FilterConfig, LossConfig
    from .pipeline import PipelineConfig

    sections = {"pipeline": {}, "filter": {}, "loss": {}, "cluster": {}, "top": {}}
    if path is not None:
        for n, line in enumerate(Path(path).read_text(encoding="ascii").split("\n"), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise FormatError(f"line {n}: expected 'key = value', got {line!r}")
            key, value = (part.strip() for part in stripped.split("=", 1))
            if key not in _CONFIG_KEYS:
                raise FormatError(f"line {n}: unknown key {key!r}")
            section, field, parser = _CONFIG_KEYS[key]
            try:
                sections[section][field] = parser(value)
            except ValueError:
                raise FormatError(f"line {n}: bad value {value!r} for {key}") from None
    try:
        return ToolConfig(
            pipeline=PipelineConfig(**sections["pipeline"]),
            spot_filter=FilterConfig(**sections["filter"]),
            loss=LossConfig(**sections["loss"]),
            cluster=ClusterConfig(**sections["cluster"]),
            **sections["top"],
        )
    except ValueError as e:
        raise FormatError(f"invalid configuration: {e}") from None


def format_config(cfg: ToolConfig) -> str:
    """Render a config bundle in the file syntax (also the resolved-config
    printout of every CLI run)."""
    parts = {
        "pipeline": cfg.pipeline,
        "filter": cfg.spot_filter,
        "loss": cfg.loss,
        "cluster": cfg.cluster,
        "top": cfg,
    }
    lines = []
    for key, (section, field, _) in _CONFIG_KEYS.items():
        lines.append(f"{key} = {getattr(parts[section], field)}")
    return "\n".join(lines) + "\n"


# ── state sidecars ───────────────────────────────────────────────────


def sidecar_bytes(frame_index: int, windows) -> bytes:
    """Canonical one-line JSON snapshot; identical states yield identical
    bytes, which is what replay-determinism checks compare."""
    payload = {
        "frame_index": int(frame_index),
        "windows": [
            {"id": int(i), "state": str(st), "alpha": float(a)} for i, st, a in windows
        ],
    }
    return (json.dumps(payload, separators=(",", ":")) + "\n").encode("ascii")


def write_sidecar(frame_index: int, windows, path) -> None:
    Path(path).write_bytes(sidecar_bytes(frame_index, windows))


def read_sidecar(path) -> dict:
    try:
        payload = json.loads(Path(path).read_text(encoding="ascii"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: {e}") from None
    if set(payload) != {"frame_index", "windows"}:
        raise FormatError(f"{path}: unexpected sidecar fields {sorted(payload)}")
    return payload


def records_to_samples(records, aux_states=()):
    """Resolve gaze log records to spherical directions for analytics.

    Points inside an auxiliary window map through that window's
    perspective view; the invalid flag is carried through.
    """
    from .analytics import GazeSample
    from .pipeline import display_to_sphere

    return [
        GazeSample(
            user_id=r.user_id,
            frame_index=r.frame_index,
            t_ms=r.t_ms,
            direction=display_to_sphere(r.x_norm, r.y_norm, aux_states),
            valid=r.valid,
        )
        for r in records
    ]
