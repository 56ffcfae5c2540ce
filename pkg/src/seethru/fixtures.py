"""Golden fixtures shared between the engine tests and the operator console.

The console never computes geometry, so its tests check byte-level fidelity
against these files:
    overlay_frames.bin   concatenated Overlay wire frames from a live session
    metrics_frames.bin   the paired Metrics wire frames
    expected_counts.json per-frame point counts by color class
    steer_script.json    a scripted keyboard-state sequence
    steer_expected.bin   the SteerCmd byte stream that script must produce
    map_snapshot.xyz     refined-map export (x y z per record)
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import link, mapping
from .bridge import LiveSession, steer_payload
from .scenario import ScenarioConfig

STEER_RATE_HZ = 10.0
STEER_SPEED = 1.0       # m/s forward/strafe
STEER_TURN = 0.8        # rad/s

# keyboard state per sample: subset of {fwd, back, left, right, turn_l, turn_r}
STEER_SCRIPT = [
    ["fwd"], ["fwd"], ["fwd", "turn_l"], ["turn_l"], [],
    ["back"], ["fwd", "back"], ["left"], ["right", "turn_r"], [],
]


def steer_from_keys(keys) -> tuple[float, float, float] | None:
    """Key state -> (vx, vy, omega); conflicting keys cancel; idle -> None."""
    vx = (STEER_SPEED if "fwd" in keys else 0.0) - (STEER_SPEED if "back" in keys else 0.0)
    vy = (STEER_SPEED if "left" in keys else 0.0) - (STEER_SPEED if "right" in keys else 0.0)
    om = (STEER_TURN if "turn_l" in keys else 0.0) - (STEER_TURN if "turn_r" in keys else 0.0)
    if vx == 0.0 and vy == 0.0 and om == 0.0:
        return None
    return vx, vy, om


def expected_steer_stream(script, start_stamp: float = 0.0) -> bytes:
    """The exact byte stream a console must emit for a scripted key sequence."""
    out = b""
    for i, keys in enumerate(script):
        cmd = steer_from_keys(keys)
        if cmd is None:
            continue  # zero input sends nothing
        stamp = start_stamp + i / STEER_RATE_HZ
        out += link.encode_frame(link.KIND_STEER, stamp, steer_payload(*cmd))
    return out


def write_fixtures(out_dir, n_frames: int = 4, seed: int = 0) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = ScenarioConfig(preset="corridor_door", seeds=(seed,), duration=4.0)
    session = LiveSession(cfg, seed=seed)

    overlay_buf = b""
    metrics_buf = b""
    counts = []
    for _ in range(n_frames):
        overlay_frame, metrics_frame, _pose_frame = session.step()
        overlay_buf += overlay_frame
        metrics_buf += metrics_frame
        kind, stamp, payload, _ = link.decode_frame(overlay_frame)
        assert kind == link.KIND_OVERLAY
        pts, classes = link.unpack_overlay(payload)
        counts.append({
            "stamp": stamp,
            "total": int(len(pts)),
            "default": int(np.sum(classes == link.COLOR_DEFAULT)),
            "red": int(np.sum(classes == link.COLOR_RED)),
            "box_corners": int(np.sum(classes == link.COLOR_BOX)),
        })

    paths = {
        "overlay_frames": out / "overlay_frames.bin",
        "metrics_frames": out / "metrics_frames.bin",
        "expected_counts": out / "expected_counts.json",
        "steer_script": out / "steer_script.json",
        "steer_expected": out / "steer_expected.bin",
        "map_snapshot": out / "map_snapshot.xyz",
    }
    paths["overlay_frames"].write_bytes(overlay_buf)
    paths["metrics_frames"].write_bytes(metrics_buf)
    paths["expected_counts"].write_text(json.dumps(counts, indent=2, sort_keys=True) + "\n")
    paths["steer_script"].write_text(json.dumps({
        "rate_hz": STEER_RATE_HZ, "speed": STEER_SPEED, "turn": STEER_TURN,
        "script": STEER_SCRIPT}, indent=2, sort_keys=True) + "\n")
    paths["steer_expected"].write_bytes(expected_steer_stream(STEER_SCRIPT))
    mapping.save_xyz(paths["map_snapshot"], session.state.refined.points)
    return {k: str(v) for k, v in paths.items()}
