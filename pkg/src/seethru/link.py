"""Two-node message transport on virtual time, clock sync and Eq-style
latency accounting, plus the length-prefixed binary wire format shared with
the operator console.

Wire frame layout (little-endian):
    4 bytes  frame length = 1 + 8 + len(payload)
    1 byte   kind
    8 bytes  stamp in microseconds (unsigned)
    payload
Scan payloads are packed float32 (x, y, z) records; Overlay payloads are
13-byte records (float32 x, y, z + 1 color-class byte: 0 default, 1 red
human point, 2 box-wireframe corner). Metrics and SteerCmd payloads are
UTF-8 JSON records.
"""

from __future__ import annotations

import bisect
import json
import struct
from dataclasses import dataclass, replace

import numpy as np

from . import geom
from .geom import Pose


class SyncFailedError(RuntimeError):
    pass


class IncompleteBreakdownError(ValueError):
    pass


# ---------------------------------------------------------------------------
# clocks


@dataclass(frozen=True)
class NodeClock:
    """A node's local clock: local = true + offset + drift_rate * true."""

    offset: float = 0.0
    drift_rate: float = 0.0
    sync_bound: float = 5e-3   # promised residual skew after sync, seconds
    correction: float = 0.0    # applied by sync

    def local_time(self, true_t: float) -> float:
        return true_t + self.offset + self.drift_rate * true_t - self.correction

    def corrected(self, offset_estimate: float) -> "NodeClock":
        return replace(self, correction=self.correction + offset_estimate)


@dataclass(frozen=True)
class SyncResult:
    offset_estimate: float     # estimated (clock_b local - clock_a local)
    best_rtt: float
    exchanges_used: int


def sync(clock_a: NodeClock, clock_b: NodeClock, channel: "Channel",
         exchanges: int = 32, start: float = 0.0, interval: float = 0.05) -> SyncResult:
    """Two-way timestamp exchange with a minimum-RTT filter.

    Estimates clock_b's offset relative to clock_a; the residual is bounded
    by the channel asymmetry plus jitter of the best exchange. Raises
    SyncFailedError when every exchange is dropped.
    """
    best = None
    used = 0
    for k in range(exchanges):
        t0 = start + k * interval
        la = channel.sample_transit()
        lb = channel.sample_transit()
        if la is None or lb is None:
            continue
        used += 1
        ta1 = clock_a.local_time(t0)
        tb1 = clock_b.local_time(t0 + la)
        tb2 = tb1  # immediate reply
        ta2 = clock_a.local_time(t0 + la + lb)
        rtt = ta2 - ta1
        estimate = ((tb1 - ta1) + (tb2 - ta2)) / 2.0
        if best is None or rtt < best[0]:
            best = (rtt, estimate)
    if best is None:
        raise SyncFailedError("all sync exchanges dropped")
    return SyncResult(offset_estimate=best[1], best_rtt=best[0], exchanges_used=used)


# ---------------------------------------------------------------------------
# wire format

KIND_SCAN = 1
KIND_POSE = 2
KIND_MAP = 3
KIND_DETECTIONS = 4
KIND_OVERLAY = 5
KIND_STEER = 6
KIND_METRICS = 7

KIND_NAMES = {
    KIND_SCAN: "Scan", KIND_POSE: "PoseUpdate", KIND_MAP: "MapSnapshot",
    KIND_DETECTIONS: "Detections", KIND_OVERLAY: "Overlay",
    KIND_STEER: "SteerCmd", KIND_METRICS: "Metrics",
}

COLOR_DEFAULT = 0
COLOR_RED = 1
COLOR_BOX = 2

_HEADER = struct.Struct("<IBQ")


def encode_frame(kind: int, stamp: float, payload: bytes) -> bytes:
    micros = max(0, int(round(stamp * 1e6)))
    return struct.pack("<I", 1 + 8 + len(payload)) + struct.pack("<BQ", kind, micros) + payload


def decode_frame(buf: bytes, offset: int = 0) -> tuple[int, float, bytes, int]:
    """(kind, stamp seconds, payload, next offset); raises on truncation."""
    if len(buf) - offset < 4:
        raise ValueError("truncated frame header")
    (length,) = struct.unpack_from("<I", buf, offset)
    if length < 9 or len(buf) - offset - 4 < length:
        raise ValueError("truncated frame body")
    kind, micros = struct.unpack_from("<BQ", buf, offset + 4)
    payload = bytes(buf[offset + 13: offset + 4 + length])
    return kind, micros / 1e6, payload, offset + 4 + length


def decode_frames(buf: bytes) -> list[tuple[int, float, bytes]]:
    out = []
    off = 0
    while off < len(buf):
        kind, stamp, payload, off = decode_frame(buf, off)
        out.append((kind, stamp, payload))
    return out


def pack_points(points: np.ndarray) -> bytes:
    return np.ascontiguousarray(points, dtype="<f4").tobytes()


def unpack_points(payload: bytes) -> np.ndarray:
    return np.frombuffer(payload, dtype="<f4").reshape(-1, 3).astype(float)


def pack_overlay(points: np.ndarray, classes: np.ndarray) -> bytes:
    pts = np.ascontiguousarray(points, dtype="<f4")
    cls = np.ascontiguousarray(classes, dtype=np.uint8)
    if len(pts) != len(cls):
        raise ValueError("points/classes length mismatch")
    rec = np.zeros(len(pts), dtype=[("xyz", "<f4", 3), ("c", "u1")])
    rec["xyz"] = pts
    rec["c"] = cls
    return rec.tobytes()


def unpack_overlay(payload: bytes) -> tuple[np.ndarray, np.ndarray]:
    rec = np.frombuffer(payload, dtype=[("xyz", "<f4", 3), ("c", "u1")])
    return rec["xyz"].astype(float), rec["c"].copy()


def pack_record(obj: dict) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def unpack_record(payload: bytes) -> dict:
    return json.loads(payload.decode("utf-8"))


def pack_pose(pose: Pose) -> bytes:
    """PoseUpdate payload: frames, stamp, quaternion and translation."""
    return pack_record({
        "from": pose.from_frame, "to": pose.to_frame, "stamp": pose.stamp,
        "quat": [float(v) for v in pose.quat],
        "trans": [float(v) for v in pose.trans],
    })


def unpack_pose(payload: bytes) -> Pose:
    rec = unpack_record(payload)
    return Pose(np.array(rec["quat"]), np.array(rec["trans"]), rec["stamp"],
                rec["from"], rec["to"])


def pack_detections(stamp: float, boxes, source_ids) -> bytes:
    """Detections payload: oriented boxes with their source-human ids."""
    return pack_record({
        "stamp": stamp,
        "boxes": [
            {
                "center": [float(v) for v in b.center],
                "rotation": [[float(v) for v in row] for row in b.rotation],
                "size": [float(v) for v in b.size],
                "source": sid,
            }
            for b, sid in zip(boxes, source_ids)
        ],
    })


# ---------------------------------------------------------------------------
# channel


@dataclass
class WireMessage:
    kind: int
    payload: bytes
    send_stamp: float
    seq: int = 0


class Channel:
    """Simulated link: base latency plus half-normal jitter, seeded drops,
    optional FIFO delivery. All times are true (simulation) time."""

    def __init__(self, base_latency: float = 0.0, jitter: float = 0.0,
                 drop_probability: float = 0.0, seed: int = 0,
                 in_order: bool = True):
        if base_latency < 0 or jitter < 0 or not (0.0 <= drop_probability <= 1.0):
            raise ValueError("bad channel parameters")
        self.base_latency = base_latency
        self.jitter = jitter
        self.drop_probability = drop_probability
        self.in_order = in_order
        self._rng = np.random.default_rng(seed)
        self._pending: list[tuple[float, int, WireMessage]] = []
        self._next_seq = 0
        self._last_arrival = 0.0
        self.sent = 0
        self.dropped = 0
        self.delivered = 0

    def sample_transit(self) -> float | None:
        """One latency draw, or None for a drop; used by send() and sync()."""
        if self.drop_probability > 0.0 and self._rng.uniform() < self.drop_probability:
            return None
        return self.base_latency + abs(self._rng.normal(0.0, self.jitter)) if self.jitter > 0 \
            else self.base_latency

    def send(self, kind: int, payload: bytes, now: float) -> WireMessage:
        msg = WireMessage(kind, payload, now, self._next_seq)
        self._next_seq += 1
        self.sent += 1
        transit = self.sample_transit()
        if transit is None:
            self.dropped += 1
            return msg
        arrival = now + transit
        if self.in_order:
            # FIFO: an early arrival waits for everything sent before it
            arrival = max(arrival, self._last_arrival)
            self._last_arrival = arrival
        bisect.insort(self._pending, (arrival, msg.seq, msg))
        return msg

    def poll(self, now: float) -> list[tuple[float, WireMessage]]:
        """(arrival true-time, message) for everything arrived by `now`."""
        out = []
        while self._pending and self._pending[0][0] <= now:
            arrival, _, msg = self._pending.pop(0)
            out.append((arrival, msg))
            self.delivered += 1
        return out

    @property
    def in_flight(self) -> int:
        return len(self._pending)


# ---------------------------------------------------------------------------
# render-time pose selection


@dataclass(frozen=True)
class RenderPoses:
    robot: Pose
    fpv: Pose
    robot_stale: bool
    fpv_stale: bool


def _select(buffer: list[Pose], t_r: float) -> tuple[Pose, bool]:
    if not buffer:
        raise ValueError("empty pose buffer")
    stamps = [p.stamp for p in buffer]
    i = bisect.bisect_right(stamps, t_r)
    if i == 0:
        # nothing older: earliest pose, flagged stale
        return buffer[0], True
    if i >= len(buffer):
        last = buffer[-1]
        return (last, last.stamp != t_r)
    if stamps[i - 1] == t_r:
        return buffer[i - 1], False
    return geom.interpolate(buffer[i - 1], buffer[i], t_r), False


def render_select(robot_poses: list[Pose], fpv_poses: list[Pose],
                  t_r: float) -> RenderPoses:
    """Temporally consistent (robot, fpv) pose pair at render time t_r.

    Brackets interpolate; a buffer with no newer sample yields its latest
    pose with the stale flag set.
    """
    robot, rs = _select(robot_poses, t_r)
    fpv, fs = _select(fpv_poses, t_r)
    return RenderPoses(robot, fpv, rs, fs)


# ---------------------------------------------------------------------------
# latency accounting


@dataclass(frozen=True)
class FrameStamps:
    """Pipeline timestamps in the synchronized clock, seconds."""

    scan_in: float | None = None
    slam_out: float | None = None
    received: float | None = None
    overlay_out: float | None = None


@dataclass(frozen=True)
class LatencyBreakdown:
    l_slam: float    # milliseconds
    l_comm: float
    l_viz: float
    l_tot: float
    frame_id: int = 0

    def __post_init__(self):
        assert self.l_tot == self.l_slam + self.l_comm + self.l_viz


def account(stamps: FrameStamps, frame_id: int = 0) -> LatencyBreakdown:
    """Latency components from stamp differences; the total is their sum by
    construction, never an independent measurement."""
    for name in ("scan_in", "slam_out", "received", "overlay_out"):
        if getattr(stamps, name) is None:
            raise IncompleteBreakdownError(f"missing stamp {name!r}")
    l_slam = (stamps.slam_out - stamps.scan_in) * 1e3
    l_comm = (stamps.received - stamps.slam_out) * 1e3
    l_viz = (stamps.overlay_out - stamps.received) * 1e3
    return LatencyBreakdown(l_slam, l_comm, l_viz, l_slam + l_comm + l_viz, frame_id)
