"""Live operator bridge: a steerable wall-clock session over the wire format.

The scenario's mapping and anchoring phases run once at session start; from
then on the robot loops its loiter path while the FPV agent is driven by
SteerCmd records instead of the preset trajectory. Every step emits one
Overlay frame (base points, red human points, box corners as class-2
points) and one Metrics record, already encoded as wire frames.
"""

from __future__ import annotations

import threading
import time

import numpy as np

from . import engine, geom, link, perception, projection, worldsim
from .geom import Frame, Pose
from .scenario import ScenarioConfig


def overlay_payload(frame: projection.OverlayFrame) -> bytes:
    """Wire payload: base points (class 0), human points (class 1), box
    corners (class 2), all float32 triples + class byte."""
    corners = [b.corners() for b in frame.boxes]
    parts = [frame.base.points, frame.human.points] + corners
    points = np.vstack([p for p in parts if len(p)]) if any(len(p) for p in parts) else np.zeros((0, 3))
    classes = np.concatenate([
        np.full(len(frame.base), link.COLOR_DEFAULT, dtype=np.uint8),
        np.full(len(frame.human), link.COLOR_RED, dtype=np.uint8),
        np.full(8 * len(corners), link.COLOR_BOX, dtype=np.uint8),
    ]) if len(points) else np.zeros(0, dtype=np.uint8)
    return link.pack_overlay(points, classes)


def steer_payload(vx: float, vy: float, omega: float) -> bytes:
    return link.pack_record({"om": round(omega, 6), "vx": round(vx, 6), "vy": round(vy, 6)})


class LiveSession:
    """One running scenario with a steerable FPV agent.

    step() advances the scenario by one frame period and returns the encoded
    wire frames; subscribers receive them via thread-safe queues. The session
    survives client disconnects: it just keeps stepping.
    """

    def __init__(self, cfg: ScenarioConfig, seed: int | None = None):
        self.cfg = cfg
        self.seed = cfg.seeds[0] if seed is None else seed
        self.state, self._align_rows = engine.start_seed_run(cfg, self.seed)
        self.world = self.state.world
        self.t = self.world.mapping_end
        self.frame_index = 0
        self.realign_count = 0
        # steer-driven FPV: start at the preset spawn, move by body velocities
        self._fpv_truth = worldsim.truth_pose(self.world.fpv_traj, self.t) \
            .with_frames(Frame.FPV, Frame.WORLD)
        self._fpv_local = geom.identity(Frame.FPV, self.t)
        self.steer = (0.0, 0.0, 0.0)
        self._lock = threading.Lock()
        self._subs: list = []
        self._thread: threading.Thread | None = None
        self._stop = threading.Event()

    # -- steering -----------------------------------------------------------

    def apply_steer(self, vx: float, vy: float, omega: float) -> None:
        with self._lock:
            self.steer = (float(vx), float(vy), float(omega))

    def _integrate_fpv(self, dt: float) -> None:
        vx, vy, om = self.steer
        if vx == 0.0 and vy == 0.0 and om == 0.0:
            self._fpv_truth = self._fpv_truth.with_stamp(self.t)
            self._fpv_local = self._fpv_local.with_stamp(self.t)
            return
        step = geom.make_pose([vx * dt, vy * dt, 0.0], yaw=om * dt, stamp=self.t,
                              from_frame=Frame.FPV, to_frame=Frame.FPV)
        self._fpv_truth = geom.compose(self._fpv_truth, step).with_stamp(self.t)
        self._fpv_local = geom.compose(
            self._fpv_local, step.with_frames(Frame.FPV, Frame.FPV)).with_stamp(self.t)

    def _composed_fpv(self) -> tuple[Pose, bool]:
        # zero live drift: the composed pose is anchor * local motion
        anchor = self.state.anchor
        if anchor is None or not anchor.rendering_enabled:
            return self._fpv_truth, False
        rel = self._fpv_local.with_frames(Frame.FPV, Frame.FPV)
        return geom.compose(anchor.anchor.with_stamp(self.t), rel), True

    @property
    def fpv_position(self) -> np.ndarray:
        return self._fpv_truth.trans

    # -- stepping -----------------------------------------------------------

    def _robot_time(self) -> float:
        # loop the robot over its loiter tail forever
        t0 = self.world.mapping_end
        t1 = self.world.robot_traj.span[1]
        if self.t <= t1:
            return self.t
        return t0 + (self.t - t0) % (t1 - t0)

    def step(self) -> list[bytes]:
        dt = 1.0 / self.cfg.frame_rate
        self.t += dt
        self._integrate_fpv(dt)
        rt = self._robot_time()
        robot_truth = worldsim.truth_pose(self.world.robot_traj, rt)
        robot_scan = worldsim.raycast_scan(self.world.scene, robot_truth,
                                           self.world.robot_sensor,
                                           seed=engine._sub_seed(self.seed, 8, self.frame_index))
        robot_est = engine.robot_estimated_pose(self.world, self.state.robot_stream, rt)
        robot_est = robot_est.with_frames(robot_scan.frame, Frame.WORLD)
        detections = perception.detect(self.world.scene, robot_scan, robot_est,
                                       self.state.det_cfg)
        human_points = perception.extract_human_points(
            robot_scan, robot_est, detections, inflate=self.cfg.box_inflation)

        composed, enabled = self._composed_fpv()
        fpv_scan = worldsim.raycast_scan(self.world.scene, self._fpv_truth,
                                         self.world.fpv_sensor,
                                         seed=engine._sub_seed(self.seed, 9, self.frame_index))
        base = fpv_scan.replace(stamp=self.t, labels=None)  # already in F_fpv
        if enabled:
            human_fpv = projection.to_fpv(human_points.replace(stamp=self.t), None, composed)
            boxes = tuple(projection.project_box(b, composed) for b in detections.boxes)
        else:
            human_fpv = geom.empty_cloud(Frame.FPV, self.t)
            boxes = ()
        pixels, clipped = projection.pixel_project(human_fpv, self.state.intrinsics)
        frame = projection.OverlayFrame(stamp=self.t, base=base, human=human_fpv,
                                        boxes=boxes, pixels=pixels, clipped=clipped,
                                        rendering_enabled=enabled)

        anchor = self.state.anchor
        metrics = {
            "stamp": round(self.t, 6),
            "frame": self.frame_index,
            "eps": anchor.metrics[0] if anchor else None,
            "eta": anchor.metrics[1] if anchor else None,
            "degen": anchor.metrics[2] if anchor else None,
            "rendering_enabled": enabled,
            "realign_count": self.realign_count,
            "l_slam": self.cfg.latency.slam * 1e3,
            "l_comm": self.cfg.channel.base_latency * 1e3,
            "l_viz": self.cfg.latency.viz * 1e3,
            "l_tot": (self.cfg.latency.slam + self.cfg.channel.base_latency
                      + self.cfg.latency.viz) * 1e3,
            "fpv_xyz": [round(float(v), 4) for v in self._fpv_truth.trans],
        }
        frames = [
            link.encode_frame(link.KIND_OVERLAY, self.t, overlay_payload(frame)),
            link.encode_frame(link.KIND_METRICS, self.t, link.pack_record(metrics)),
            link.encode_frame(link.KIND_POSE, self.t, link.pack_pose(composed)),
        ]
        self.frame_index += 1
        self._publish(frames)
        return frames

    # -- subscriptions ------------------------------------------------------

    def subscribe(self):
        import queue

        q = queue.Queue(maxsize=64)
        with self._lock:
            self._subs.append(q)
        return q

    def unsubscribe(self, q) -> None:
        with self._lock:
            if q in self._subs:
                self._subs.remove(q)

    def _publish(self, frames: list[bytes]) -> None:
        with self._lock:
            subs = list(self._subs)
        for q in subs:
            for f in frames:
                try:
                    q.put_nowait(f)
                except Exception:
                    pass  # slow client: drop

    # -- wall-clock loop ----------------------------------------------------

    def start(self) -> None:
        if self._thread is not None:
            return
        self._stop.clear()

        def loop():
            period = 1.0 / self.cfg.frame_rate
            while not self._stop.is_set():
                t0 = time.monotonic()
                try:
                    self.step()
                except Exception:
                    pass  # keep the session alive; next step retries
                elapsed = time.monotonic() - t0
                self._stop.wait(max(0.0, period - elapsed))

        self._thread = threading.Thread(target=loop, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
            self._thread = None

    def handle_client_frame(self, data: bytes) -> int:
        """Decode client->server frames (SteerCmd); returns frames consumed.

        Malformed frames are discarded without killing the session."""
        consumed = 0
        off = 0
        try:
            while off < len(data):
                kind, _, payload, off = link.decode_frame(data, off)
                if kind == link.KIND_STEER:
                    rec = link.unpack_record(payload)
                    self.apply_steer(rec.get("vx", 0.0), rec.get("vy", 0.0),
                                     rec.get("om", 0.0))
                consumed += 1
        except (ValueError, KeyError):
            pass
        return consumed
