"""Simulated LiDAR-inertial odometry: ground truth plus parameterized drift.

Each agent's odometry is a chain of body-frame increments sampled from its
ground-truth trajectory with noise injected per step. Drift is dominated by
a per-stream bias direction (scaled by distance traveled and rotation
turned), which reproduces the roughly-linear error growth of real odometry;
a small white component rides on top. The world pose of the FPV device is
the registered anchor composed with the increment chain, and the drift
monitor triggers re-registration from the (epsilon, eta, degeneracy)
verification triple.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace

import numpy as np

from . import geom, registration, worldsim
from .geom import Frame, Pose, PointCloud
from .mapping import NdtVoxelGrid, RefinedMap
from .projection import PoseUnavailableError
from .registration import RegistrationConfig, RegistrationResult


@dataclass(frozen=True)
class DriftModel:
    trans_per_meter: float = 0.0   # fractional translation noise per meter traveled
    yaw_per_radian: float = 0.0    # fractional yaw noise per radian turned
    bias_twist: tuple[float, float, float, float, float, float] = (0.0,) * 6
    seed: int = 0

    def __post_init__(self):
        if self.trans_per_meter < 0 or self.yaw_per_radian < 0:
            raise ValueError("noise fractions must be non-negative")

    @property
    def is_zero(self) -> bool:
        return (self.trans_per_meter == 0 and self.yaw_per_radian == 0
                and all(b == 0 for b in self.bias_twist))


@functools.lru_cache(maxsize=256)
def _stream_bias_cached(seed: int) -> tuple[tuple[float, float, float], float]:
    rng = np.random.default_rng(seed)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    # gravity-referenced odometry keeps vertical drift small
    v = np.array([math.cos(phi), math.sin(phi), rng.uniform(-0.1, 0.1)])
    u = v / np.linalg.norm(v)
    yaw_sign = 1.0 if rng.uniform() < 0.5 else -1.0
    return (float(u[0]), float(u[1]), float(u[2])), yaw_sign


def _stream_bias(model: DriftModel) -> tuple[np.ndarray, float]:
    """Per-stream drift direction (mostly horizontal) and yaw sign."""
    u, yaw_sign = _stream_bias_cached(model.seed)
    return np.array(u), yaw_sign


def step_lio(truth_prev: Pose, truth_now: Pose, model: DriftModel,
             step_index: int = 0) -> Pose:
    """One odometry increment: the truth delta composed with seeded noise.

    A zero model returns the truth delta exactly; noise magnitude scales
    with the distance traveled and rotation turned in this step.
    """
    delta = geom.compose(geom.inverse(truth_prev), truth_now)
    if model.is_zero:
        return delta
    dist = float(np.linalg.norm(delta.trans))
    # signed yaw increment: scale-factor drift cancels over closed turns,
    # matching gyro behavior (an unsigned model would wind up error on loops)
    dyaw_signed = 2.0 * math.atan2(delta.quat[3], delta.quat[0])
    dt = truth_now.stamp - truth_prev.stamp
    u, yaw_sign = _stream_bias(model)
    rng = np.random.default_rng((model.seed * 2654435761 + step_index * 40503) & 0xFFFFFFFF)
    trans_noise = model.trans_per_meter * dist * (u + 0.3 * rng.normal(size=3))
    yaw_noise = model.yaw_per_radian * dyaw_signed * (yaw_sign + 0.3 * rng.normal())
    noise = geom.make_pose(trans_noise, yaw=yaw_noise, stamp=truth_now.stamp,
                           from_frame=delta.from_frame, to_frame=delta.from_frame)
    if any(b != 0.0 for b in model.bias_twist):
        bias = geom.se3_exp(np.asarray(model.bias_twist) * dt, stamp=truth_now.stamp,
                            from_frame=delta.from_frame, to_frame=delta.from_frame)
        noise = geom.compose(noise, bias)
    return geom.compose(delta, noise)


@dataclass(frozen=True)
class LioStream:
    """Odometry increment chain for one agent, with cumulative local poses."""

    agent: str
    origin_stamp: float
    stamps: np.ndarray                      # sample times, strictly increasing
    increments: tuple[Pose, ...]            # increments[i]: stamps[i] -> stamps[i+1]
    local_poses: tuple[Pose, ...]           # cumulative pose at each stamp

    def local_pose(self, t: float) -> Pose:
        """Local odometry pose at t (interpolating the partial last step)."""
        stamps = self.stamps
        if t < stamps[0] - 1e-9 or t > stamps[-1] + 1e-9:
            raise geom.ExtrapolationError(
                f"t={t} outside stream span [{stamps[0]}, {stamps[-1]}]")
        i = int(np.searchsorted(stamps, t, side="right")) - 1
        i = max(0, min(i, len(stamps) - 1))
        if i == len(stamps) - 1 or t == stamps[i]:
            return self.local_poses[i].with_stamp(t)
        return geom.interpolate(self.local_poses[i].with_stamp(stamps[i]),
                                self.local_poses[i + 1].with_stamp(stamps[i + 1]), t)


def make_stream(traj: worldsim.TruthTrajectory, model: DriftModel,
                rate_hz: float = 20.0, agent_frame: str = Frame.FPV) -> LioStream:
    """Sample a truth trajectory into a drifting odometry stream."""
    t0, t1 = traj.span
    n = max(2, int(round((t1 - t0) * rate_hz)) + 1)
    stamps = np.linspace(t0, t1, n)
    odom_frame = f"{agent_frame}_odom"
    poses = [worldsim.truth_pose(traj, float(t)) for t in stamps]
    increments = []
    local = [geom.identity(agent_frame, float(stamps[0])).with_frames(agent_frame, odom_frame)]
    for k in range(1, n):
        inc = step_lio(poses[k - 1], poses[k], model, step_index=k)
        increments.append(inc)
        local.append(geom.compose(local[-1], inc.with_frames(agent_frame, agent_frame)))
    return LioStream(agent_frame, float(stamps[0]), stamps,
                     tuple(increments), tuple(local))


@dataclass(frozen=True)
class AnchorState:
    """The transform tying the FPV odometry into the robot world frame."""

    anchor: Pose                  # F_fpv -> F_w at anchored_at
    anchored_at: float
    anchor_local: Pose            # stream local pose at anchored_at
    composed: Pose                # latest composed world pose
    metrics: tuple[float, float, float] = (0.0, 1.0, 1.0)  # (eps, eta, degen)
    rendering_enabled: bool = True


def make_anchor(result: RegistrationResult, stream: LioStream, t: float) -> AnchorState:
    local = stream.local_pose(t)
    return AnchorState(anchor=result.pose.with_stamp(t), anchored_at=t,
                       anchor_local=local, composed=result.pose.with_stamp(t),
                       metrics=(result.epsilon, result.eta, result.delta_degen),
                       rendering_enabled=result.accepted)


def compose_world_pose(anchor: AnchorState, stream: LioStream, t: float) -> Pose:
    """World pose of the FPV device at t: anchor composed with odometry.

    Raises PoseUnavailableError while rendering is disabled (the anchor is
    not trusted); queries before the anchor time are rejected.
    """
    if not anchor.rendering_enabled:
        raise PoseUnavailableError("rendering disabled: no trusted anchor")
    if t < anchor.anchored_at - 1e-9:
        raise ValueError(f"t={t} precedes anchor time {anchor.anchored_at}")
    rel = geom.compose(geom.inverse(anchor.anchor_local), stream.local_pose(t))
    return geom.compose(anchor.anchor.with_stamp(t), rel)


def monitor(metrics: tuple[float, float, float], cfg: RegistrationConfig) -> bool:
    """Drift trigger: the disjunction of the three quality violations."""
    eps, eta, degen = metrics
    return eps > cfg.epsilon_max or eta < cfg.eta_min or degen < cfg.lambda_deg


def probe(scan: PointCloud, grid: NdtVoxelGrid, pose: Pose,
          cfg: RegistrationConfig) -> tuple[float, float, float]:
    """Cheap verification pass at the composed pose; no update is applied."""
    return registration.verify(scan, grid, pose, cfg)


def realign(anchor: AnchorState, stream: LioStream, scan: PointCloud,
            refined: RefinedMap, cfg: RegistrationConfig,
            grids: list[NdtVoxelGrid] | None = None
            ) -> tuple[AnchorState, RegistrationResult]:
    """Re-register the FPV scan against the map, seeded by the composed pose.

    On acceptance the anchor is replaced so the composed pose at the scan
    stamp equals the registration result exactly; on rejection rendering is
    disabled (dead reckoning continues internally).
    """
    t = scan.stamp
    prior = compose_world_pose(replace(anchor, rendering_enabled=True), stream, t)
    result = registration.align(scan, refined, cfg, prior=prior, grids=grids)
    if result.accepted:
        return make_anchor(result, stream, t), result
    disabled = replace(anchor, rendering_enabled=False,
                       metrics=(result.epsilon, result.eta, result.delta_degen))
    return disabled, result
