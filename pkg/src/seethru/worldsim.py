"""Synthetic indoor scenes, LiDAR synthesis by ray casting, and truth masks.

Scenes are unions of oriented box solids (walls, floor/ceiling slabs,
furniture) plus humans modeled as capsule stacks. Capsules give closed-form
ray intersections and exact silhouettes, which keeps every derived quantity
(occlusion, visibility counts, masks) analytically checkable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import geom
from .geom import Frame, OrientedBox, PointCloud, Pose
from .projection import DisplayIntrinsics


class ConfigurationError(ValueError):
    pass


WALL_HEIGHT = 3.0
WALL_THICK = 0.12
# Interior partitions are mapped from both sides; keeping the two faces more
# than one finest NDT cell apart stops their points from sharing a voxel.
PARTITION_THICK = 0.6
DOOR_HEIGHT = 2.1


# ---------------------------------------------------------------------------
# scene elements


@dataclass(frozen=True)
class Capsule:
    """Segment (a -> b) swept by a sphere of radius r, in world coordinates."""

    a: np.ndarray
    b: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float).reshape(3))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(3))
        if self.radius <= 0:
            raise ValueError("capsule radius must be positive")


@dataclass(frozen=True)
class Solid:
    id: str
    box: OrientedBox


# local-frame capsule stacks; (a, b, radius) with origin at the ground point
_STANDING_CAPSULES = (
    ((0.0, 0.0, 0.40), (0.0, 0.0, 1.38), 0.17),   # torso
    ((0.0, 0.0, 1.52), (0.0, 0.0, 1.56), 0.11),   # head
)
_PRONE_CAPSULES = (
    ((-0.45, 0.0, 0.30), (0.45, 0.0, 0.30), 0.17),
    ((0.62, 0.0, 0.30), (0.66, 0.0, 0.30), 0.11),
)


@dataclass(frozen=True)
class HumanFigure:
    """Capsule-stack human with its ground-truth oriented box."""

    id: str
    position: np.ndarray        # ground point (x, y, z=floor)
    yaw: float
    posture: str = "standing"   # standing | prone
    capsules: tuple[Capsule, ...] = field(default=())
    gt_box: OrientedBox | None = None

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(3)
        object.__setattr__(self, "position", pos)
        if self.posture not in ("standing", "prone"):
            raise ValueError(f"unknown posture {self.posture!r}")
        if not self.capsules:
            local = _STANDING_CAPSULES if self.posture == "standing" else _PRONE_CAPSULES
            rot = geom.quat_to_matrix(geom.quat_from_axis_angle([0, 0, 1], self.yaw))
            caps = tuple(
                Capsule(rot @ np.asarray(a) + pos, rot @ np.asarray(b) + pos, r)
                for a, b, r in local
            )
            object.__setattr__(self, "capsules", caps)
            # tight local-frame AABB over the capsule surfaces
            lo = np.full(3, np.inf)
            hi = np.full(3, -np.inf)
            for a, b, r in local:
                lo = np.minimum(lo, np.minimum(a, b) - r)
                hi = np.maximum(hi, np.maximum(a, b) + r)
            center = rot @ ((lo + hi) / 2.0) + pos
            object.__setattr__(self, "gt_box", OrientedBox(center, rot, hi - lo, Frame.WORLD))


@dataclass(frozen=True)
class Scene:
    solids: tuple[Solid, ...]
    humans: tuple[HumanFigure, ...]
    bounds: tuple[np.ndarray, np.ndarray]
    ceiling_z: float = WALL_HEIGHT

    def __post_init__(self):
        lo, hi = self.bounds
        lo = np.asarray(lo, dtype=float).reshape(3)
        hi = np.asarray(hi, dtype=float).reshape(3)
        if np.any(lo >= hi):
            raise ValueError("degenerate scene bounds")
        object.__setattr__(self, "bounds", (lo, hi))
        ids = [s.id for s in self.solids] + [h.id for h in self.humans]
        if len(set(ids)) != len(ids):
            raise ValueError("scene element ids must be unique")
        for h in self.humans:
            if np.any(h.position[:2] < lo[:2]) or np.any(h.position[:2] > hi[:2]):
                raise ValueError(f"human {h.id} outside scene bounds")

    def human_by_id(self, hid: str) -> HumanFigure:
        for h in self.humans:
            if h.id == hid:
                return h
        raise KeyError(hid)


@dataclass(frozen=True)
class SensorModel:
    kind: str                 # spinning_360 | directional_cone
    h_fov_deg: float
    v_fov_deg: float
    az_res_deg: float
    el_res_deg: float
    max_range: float = 30.0
    range_sigma: float = 0.0
    sweep_duration: float = 0.1
    dropout: float = 0.0

    def __post_init__(self):
        if self.kind not in ("spinning_360", "directional_cone"):
            raise ConfigurationError(f"unknown sensor kind {self.kind!r}")
        if self.h_fov_deg <= 0 or self.v_fov_deg <= 0:
            raise ConfigurationError("zero or negative field of view")
        if self.h_fov_deg > 360.0:
            raise ConfigurationError("horizontal FOV exceeds 360 degrees")
        if self.az_res_deg <= 0 or self.el_res_deg <= 0:
            raise ConfigurationError("angular resolution must be positive")
        if self.range_sigma < 0 or not (0.0 <= self.dropout <= 1.0):
            raise ConfigurationError("bad noise parameters")

    def ray_directions(self) -> tuple[np.ndarray, np.ndarray]:
        """(dirs (N,3) unit vectors in the sensor frame, azimuth index (N,))."""
        if self.kind == "spinning_360":
            az = np.arange(0.0, 360.0, self.az_res_deg)
        else:
            n_az = max(2, int(round(self.h_fov_deg / self.az_res_deg)) + 1)
            az = np.linspace(-self.h_fov_deg / 2.0, self.h_fov_deg / 2.0, n_az)
        n_el = max(2, int(round(self.v_fov_deg / self.el_res_deg)) + 1)
        el = np.linspace(-self.v_fov_deg / 2.0, self.v_fov_deg / 2.0, n_el)
        azr = np.radians(az)[:, None]
        elr = np.radians(el)[None, :]
        ca, sa = np.cos(azr), np.sin(azr)
        ce, se = np.cos(elr), np.sin(elr)
        dirs = np.stack(
            [
                (ca * ce).ravel(),
                (sa * ce).ravel(),
                np.broadcast_to(se, (len(az), n_el)).ravel(),
            ],
            axis=1,
        )
        az_idx = np.repeat(np.arange(len(az)), n_el)
        return dirs, az_idx


def default_robot_sensor() -> SensorModel:
    return SensorModel("spinning_360", 360.0, 80.0, 1.8, 3.0,
                       max_range=30.0, range_sigma=0.01, sweep_duration=0.1)


def default_fpv_sensor() -> SensorModel:
    # 360-degree helmet unit; the AR display keeps its own narrower pinhole
    return SensorModel("spinning_360", 360.0, 59.0, 2.4, 2.4,
                       max_range=30.0, range_sigma=0.01, sweep_duration=0.1)


# ---------------------------------------------------------------------------
# ray intersection primitives (vectorized over rays)

_EPS = 1e-9


def ray_box_hits(origin: np.ndarray, dirs: np.ndarray, box: OrientedBox) -> np.ndarray:
    """Entry distance along each ray into an oriented box; +inf for misses.

    Rays starting inside the box do not register a hit (a sensor embedded in
    a solid sees out of it, not its own shell).
    """
    o = (origin - box.center) @ box.rotation
    d = dirs @ box.rotation
    half = box.size / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (-half - o) * inv
        t2 = (half - o) * inv
    near = np.minimum(t1, t2)
    far = np.maximum(t1, t2)
    # rays parallel to a slab: hit iff origin inside that slab
    par = np.abs(d) < 1e-12
    inside = np.abs(o) <= half
    near = np.where(par, np.where(inside, -np.inf, np.inf), near)
    far = np.where(par, np.where(inside, np.inf, -np.inf), far)
    tmin = near.max(axis=1)
    tmax = far.min(axis=1)
    hit = (tmax >= tmin) & (tmax > _EPS) & (tmin > _EPS)
    return np.where(hit, tmin, np.inf)


def ray_capsule_hits(origin: np.ndarray, dirs: np.ndarray, cap: Capsule,
                     radius_override: float | None = None) -> np.ndarray:
    """Nearest intersection distance of each ray with a capsule; +inf for misses."""
    r = cap.radius if radius_override is None else radius_override
    axis = cap.b - cap.a
    length = float(np.linalg.norm(axis))
    n = len(dirs)
    best = np.full(n, np.inf)

    if length > 1e-12:
        u = axis / length
        m = origin - cap.a
        md = m - np.dot(m, u) * u
        dd = dirs - np.outer(dirs @ u, u)
        a_coef = np.einsum("ij,ij->i", dd, dd)
        b_coef = 2.0 * (dd @ md)
        c_coef = float(np.dot(md, md)) - r * r
        disc = b_coef * b_coef - 4.0 * a_coef * c_coef
        ok = (disc >= 0) & (a_coef > 1e-14)
        sq = np.sqrt(np.where(ok, disc, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            t_cyl = (-b_coef - sq) / (2.0 * a_coef)
        # keep cylinder hits whose axial coordinate lies within the segment
        axial = (origin @ u - float(np.dot(cap.a, u))) + t_cyl * (dirs @ u)
        valid = ok & (t_cyl > _EPS) & (axial >= 0.0) & (axial <= length)
        best = np.where(valid, t_cyl, best)

    for end in (cap.a, cap.b):
        m = origin - end
        b_coef = 2.0 * (dirs @ m)
        c_coef = float(np.dot(m, m)) - r * r
        disc = b_coef * b_coef - 4.0 * c_coef
        ok = disc >= 0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t_sph = (-b_coef - sq) / 2.0
        valid = ok & (t_sph > _EPS)
        best = np.minimum(best, np.where(valid, t_sph, np.inf))
    return best


def _box_batch(scene: Scene):
    """Stacked box geometry for batched slab tests, cached per scene."""
    cached = getattr(scene, "_box_batch", None)
    if cached is None:
        centers = np.array([s.box.center for s in scene.solids]).reshape(-1, 3)
        rots = np.array([s.box.rotation for s in scene.solids]).reshape(-1, 3, 3)
        halves = np.array([s.box.size for s in scene.solids]).reshape(-1, 3) / 2.0
        cached = (centers, rots, halves)
        object.__setattr__(scene, "_box_batch", cached)
    return cached


def _all_box_hits(scene: Scene, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """(n_rays, n_solids) entry distances, +inf for misses; one slab pass."""
    centers, rots, halves = _box_batch(scene)
    if len(centers) == 0:
        return np.full((len(dirs), 0), np.inf)
    o = np.einsum("si,sij->sj", origin[None, :] - centers, rots)      # (S,3)
    d = np.einsum("ri,sij->rsj", dirs, rots)                           # (R,S,3)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (-halves[None] - o[None]) * inv
        t2 = (halves[None] - o[None]) * inv
    near = np.minimum(t1, t2)
    far = np.maximum(t1, t2)
    par = np.abs(d) < 1e-12
    if par.any():
        inside = (np.abs(o) <= halves)[None]
        near = np.where(par, np.where(inside, -np.inf, np.inf), near)
        far = np.where(par, np.where(inside, np.inf, -np.inf), far)
    tmin = near.max(axis=2)
    tmax = far.min(axis=2)
    hit = (tmax >= tmin) & (tmax > _EPS) & (tmin > _EPS)
    return np.where(hit, tmin, np.inf)


def scene_ray_hits(scene: Scene, origin: np.ndarray, dirs: np.ndarray,
                   include_humans: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-hit distance and element index per ray.

    Element indices address solids first, then humans (capsules of one human
    share its index); -1 marks a miss.
    """
    n = len(dirs)
    if len(scene.solids):
        box_t = _all_box_hits(scene, origin, dirs)
        best_i = np.argmin(box_t, axis=1)
        best_t = box_t[np.arange(n), best_i]
        best_i = np.where(np.isfinite(best_t), best_i, -1)
    else:
        best_t = np.full(n, np.inf)
        best_i = np.full(n, -1, dtype=int)
    if include_humans:
        for j, human in enumerate(scene.humans):
            for cap in human.capsules:
                t = ray_capsule_hits(origin, dirs, cap)
                closer = t < best_t
                best_t = np.where(closer, t, best_t)
                best_i = np.where(closer, len(scene.solids) + j, best_i)
    return best_t, best_i


def element_ids(scene: Scene) -> list[str]:
    return [s.id for s in scene.solids] + [h.id for h in scene.humans]


# ---------------------------------------------------------------------------
# scan synthesis


def raycast_scan(scene: Scene, sensor_pose: Pose, sensor: SensorModel, seed: int) -> PointCloud:
    """Cast one scan from `sensor_pose` (sensor frame -> F_w).

    One point per ray that hits a surface within max range, nearest hit only.
    Gaussian range noise is applied along the ray; per-point firing offsets
    follow the azimuth sweep. The returned cloud is in the sensor's own frame
    (tagged with sensor_pose.from_frame) and carries per-point element labels.
    """
    if sensor_pose.to_frame != Frame.WORLD:
        raise geom.FrameMismatchError("sensor pose must map into F_w")
    dirs_s, az_idx = sensor.ray_directions()
    rot = sensor_pose.rotation
    dirs_w = dirs_s @ rot.T
    origin = sensor_pose.trans

    t, idx = scene_ray_hits(scene, origin, dirs_w)
    rng = np.random.default_rng(seed)
    # draw per-ray noise/dropout for every ray (hit or not) so the stream is
    # independent of scene content for a fixed seed
    noise = rng.normal(0.0, 1.0, len(dirs_s)) * sensor.range_sigma
    drop = rng.uniform(0.0, 1.0, len(dirs_s)) < sensor.dropout

    hit = np.isfinite(t) & (t <= sensor.max_range) & ~drop
    t_noisy = np.maximum(t[hit] + noise[hit], 1e-6)
    pts = dirs_s[hit] * t_noisy[:, None]

    n_az = int(az_idx.max()) + 1 if len(az_idx) else 1
    offsets = sensor.sweep_duration * (az_idx[hit] / max(n_az, 1))
    names = element_ids(scene)
    labels = np.array([names[i] for i in idx[hit]], dtype=object)
    return PointCloud(pts, offsets, sensor_pose.from_frame, sensor_pose.stamp, labels)


# ---------------------------------------------------------------------------
# truth masks


def _pixel_dirs(k: DisplayIntrinsics, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Unit ray directions (camera frame) through the given pixel centers."""
    y = -(cols - k.cx) / k.fx
    z = -(rows - k.cy) / k.fy
    d = np.stack([np.ones_like(y), y, z], axis=1)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _capsule_pixel_roi(cap: Capsule, fpv_pose: Pose, k: DisplayIntrinsics,
                       pad_px: float) -> tuple[int, int, int, int] | None:
    """Conservative pixel rectangle covering the capsule silhouette, or None."""
    inv = geom.inverse(fpv_pose)
    ends = geom.apply(inv, np.stack([cap.a, cap.b]))
    depths = ends[:, 0]
    if np.all(depths + cap.radius < k.near):
        return None
    if np.any(depths - cap.radius < k.near):
        return 0, k.height, 0, k.width  # crosses the near plane: no tight bound
    from .projection import pixel_project

    uv, _ = pixel_project(ends, k)
    r_px = max(k.fx, k.fy) * cap.radius / float(depths.min()) + pad_px + 2.0
    u0 = int(np.floor(uv[:, 0].min() - r_px))
    u1 = int(np.ceil(uv[:, 0].max() + r_px)) + 1
    v0 = int(np.floor(uv[:, 1].min() - r_px))
    v1 = int(np.ceil(uv[:, 1].max() + r_px)) + 1
    u0, u1 = max(0, u0), min(k.width, u1)
    v0, v1 = max(0, v0), min(k.height, v1)
    if u0 >= u1 or v0 >= v1:
        return None
    return v0, v1, u0, u1


# Half-diagonal of a pixel footprint, in pixels. Dilating capsule silhouettes
# by at least this much guarantees that any surface point whose continuous
# projection is inside the exact silhouette also lands on a true mask pixel
# after nearest-pixel rounding.
FOOTPRINT_MARGIN_PX = 0.75


def render_truth_mask(scene: Scene, fpv_pose: Pose, intrinsics: DisplayIntrinsics,
                      include_occluders: bool) -> np.ndarray:
    """Binary human-silhouette image from the FPV viewpoint.

    include_occluders=True: a pixel is set iff a human capsule is the nearest
    surface along the pixel-center ray (walls hide humans).
    include_occluders=False: a pixel is set iff any human capsule intersects
    the pixel ray regardless of solids; this is the see-through reference and
    uses footprint dilation so it is closed under pixel rounding.
    """
    h, w = intrinsics.height, intrinsics.width
    mask = np.zeros((h, w), dtype=bool)
    if not scene.humans:
        return mask
    rot = fpv_pose.rotation
    origin = fpv_pose.trans

    if include_occluders:
        rows, cols = np.mgrid[0:h, 0:w]
        dirs = _pixel_dirs(intrinsics, rows.ravel().astype(float), cols.ravel().astype(float))
        dirs_w = dirs @ rot.T
        _, idx = scene_ray_hits(scene, origin, dirs_w)
        mask = (idx >= len(scene.solids)).reshape(h, w)
        return mask

    theta = FOOTPRINT_MARGIN_PX / min(intrinsics.fx, intrinsics.fy)
    for human in scene.humans:
        for cap in human.capsules:
            roi = _capsule_pixel_roi(cap, fpv_pose, intrinsics, FOOTPRINT_MARGIN_PX)
            if roi is None:
                continue
            v0, v1, u0, u1 = roi
            rows, cols = np.mgrid[v0:v1, u0:u1]
            dirs = _pixel_dirs(intrinsics, rows.ravel().astype(float), cols.ravel().astype(float))
            dirs_w = dirs @ rot.T
            d_far = max(np.linalg.norm(cap.a - origin), np.linalg.norm(cap.b - origin)) + cap.radius
            t = ray_capsule_hits(origin, dirs_w, cap,
                                 radius_override=cap.radius + theta * d_far)
            sub = np.isfinite(t).reshape(v1 - v0, u1 - u0)
            mask[v0:v1, u0:u1] |= sub
    return mask


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class TruthTrajectory:
    agent: str
    waypoints: tuple[tuple[float, Pose], ...]
    max_speed: float = 3.0

    def __post_init__(self):
        if len(self.waypoints) < 1:
            raise ValueError("trajectory needs at least one waypoint")
        prev_t = None
        prev_p = None
        for t, p in self.waypoints:
            if prev_t is not None:
                if t <= prev_t:
                    raise ValueError("waypoint stamps must be strictly increasing")
                step = np.linalg.norm(p.trans - prev_p.trans)
                if step > self.max_speed * (t - prev_t) + 1e-9:
                    raise ValueError(
                        f"teleport: {step:.2f} m in {t - prev_t:.2f} s exceeds "
                        f"max speed {self.max_speed} m/s"
                    )
            prev_t, prev_p = t, p

    @property
    def span(self) -> tuple[float, float]:
        return self.waypoints[0][0], self.waypoints[-1][0]


def truth_pose(traj: TruthTrajectory, t: float) -> Pose:
    """Interpolated ground-truth pose at time t; errors outside the span."""
    t0, t1 = traj.span
    if t < t0 or t > t1:
        raise geom.ExtrapolationError(f"t={t} outside trajectory span [{t0}, {t1}]")
    stamps = [w[0] for w in traj.waypoints]
    import bisect

    i = bisect.bisect_right(stamps, t)
    if i == 0:
        return traj.waypoints[0][1].with_stamp(t)
    if i >= len(stamps):
        return traj.waypoints[-1][1].with_stamp(t)
    (ta, pa), (tb, pb) = traj.waypoints[i - 1], traj.waypoints[i]
    return geom.interpolate(pa.with_stamp(ta), pb.with_stamp(tb), t)


# ---------------------------------------------------------------------------
# scene construction helpers


def make_box_solid(sid: str, center, size, yaw: float = 0.0) -> Solid:
    return Solid(sid, geom.yaw_box(center, size, yaw))


def make_leaning_panel(sid: str, center, yaw: float, tilt: float,
                       width: float = 1.6, length: float = 1.8,
                       thick: float = 0.06) -> Solid:
    """A thin panel propped against a wall: tilted about its horizontal axis.

    The big faces carry normals with a vertical component, which is what pins
    the z translation in a map whose floor and ceiling bands were removed.
    """
    q_yaw = geom.quat_from_axis_angle([0, 0, 1], yaw)
    q_tilt = geom.quat_from_axis_angle([0, 1, 0], tilt)
    rot = geom.quat_to_matrix(q_yaw) @ geom.quat_to_matrix(q_tilt)
    return Solid(sid, geom.OrientedBox(np.asarray(center, float), rot,
                                       np.array([thick, width, length])))


def leaning_panel_center(face_pos: float, along: float, tilt: float,
                         length: float = 1.8, toward: float = -1.0,
                         axis: int = 0) -> np.ndarray:
    """Center of a panel whose top edge touches a wall face and bottom edge
    rests on the floor, leaning into the room along `axis` (0=x, 1=y)."""
    off = toward * math.sin(abs(tilt)) * length / 2.0
    z = math.cos(abs(tilt)) * length / 2.0
    c = np.zeros(3)
    c[axis] = face_pos + off
    c[1 - axis] = along
    c[2] = z
    return c


def _wall_boxes(sid: str, p0, p1, door: tuple[float, float] | None = None,
                z0: float = 0.0, z1: float = WALL_HEIGHT,
                thick: float = WALL_THICK) -> list[Solid]:
    """Axis-aligned wall from p0 to p1 with an optional doorway span.

    `door` is (lo, hi) measured along the wall's running axis in world
    coordinates; the lintel above the opening is kept.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    run = p1 - p0
    if abs(run[0]) > 1e-9 and abs(run[1]) > 1e-9:
        raise ConfigurationError("walls must be axis-aligned")
    axis = 0 if abs(run[0]) > abs(run[1]) else 1
    lo, hi = sorted((p0[axis], p1[axis]))
    cross = p0[1 - axis]

    def seg(tag, a, b, zb, zt):
        center = [0.0, 0.0, (zb + zt) / 2.0]
        size = [0.0, 0.0, zt - zb]
        center[axis] = (a + b) / 2.0
        center[1 - axis] = cross
        size[axis] = b - a
        size[1 - axis] = thick
        return make_box_solid(tag, center, size)

    if door is None:
        return [seg(sid, lo, hi, z0, z1)]
    d0, d1 = door
    if not (lo < d0 < d1 < hi):
        raise ConfigurationError("door span must lie strictly inside the wall")
    out = [seg(f"{sid}_a", lo, d0, z0, z1), seg(f"{sid}_b", d1, hi, z0, z1)]
    if DOOR_HEIGHT < z1:
        out.append(seg(f"{sid}_lintel", d0, d1, DOOR_HEIGHT, z1))
    return out


def _floor_ceiling(lo, hi, ceiling_z: float) -> list[Solid]:
    cx, cy = (lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0
    sx, sy = hi[0] - lo[0], hi[1] - lo[1]
    return [
        make_box_solid("floor", [cx, cy, -WALL_THICK / 2.0], [sx, sy, WALL_THICK]),
        make_box_solid("ceiling", [cx, cy, ceiling_z + WALL_THICK / 2.0], [sx, sy, WALL_THICK]),
    ]


# Beams are sized like the partitions: faces further apart than the finest
# NDT cell, so opposite faces never share a voxel column.
BEAM_SECTION = 0.6
BEAM_Z = (2.1, 2.7)  # inside the refined band: bottom and side faces survive


def _beam(sid: str, axis: int, at: float, lo: float, hi: float) -> Solid:
    """Ceiling beam running along `axis` (0=x, 1=y) at cross position `at`.

    Beam undersides pin the z translation and their side faces pin the
    cross-axis translation in the refined (floor/ceiling-free) map.
    """
    center = [0.0, 0.0, (BEAM_Z[0] + BEAM_Z[1]) / 2.0]
    size = [0.0, 0.0, BEAM_Z[1] - BEAM_Z[0]]
    center[axis] = (lo + hi) / 2.0
    center[1 - axis] = at
    size[axis] = hi - lo
    size[1 - axis] = BEAM_SECTION
    return make_box_solid(sid, center, size)


def _lookat_yaw(pos, target) -> float:
    return math.atan2(target[1] - pos[1], target[0] - pos[0])


def _waypoints(points, speed: float, z: float, start_time: float = 0.0,
               yaw_target=None, hold_first: float = 0.0,
               hold_yaw_target=None) -> list[tuple[float, Pose]]:
    """Waypoint list from 2D path nodes at constant speed, yaw facing either
    a fixed look-at target or the direction of travel. The optional hold
    phase at the first node may use its own gaze target."""
    out = []
    t = start_time
    for i, p in enumerate(points):
        if yaw_target is not None:
            yaw = _lookat_yaw(p, yaw_target)
        elif i + 1 < len(points):
            yaw = _lookat_yaw(p, points[i + 1])
        elif len(points) > 1:
            yaw = _lookat_yaw(points[i - 1], p)
        else:
            yaw = 0.0
        pose = geom.make_pose([p[0], p[1], z], yaw=yaw, stamp=t,
                              from_frame="agent", to_frame=Frame.WORLD)
        if i == 0 and hold_first > 0.0:
            hold_yaw = yaw if hold_yaw_target is None else _lookat_yaw(p, hold_yaw_target)
            hold_pose = geom.make_pose([p[0], p[1], z], yaw=hold_yaw, stamp=t,
                                       from_frame="agent", to_frame=Frame.WORLD)
            out.append((t, hold_pose))
            t += hold_first
            out.append((t, hold_pose.with_stamp(t)))
            # brief turn from the hold gaze to the patrol gaze
            t += 1.0
            out.append((t, pose.with_stamp(t)))
        else:
            out.append((t, pose))
        if i + 1 < len(points):
            dist = math.hypot(points[i + 1][0] - p[0], points[i + 1][1] - p[1])
            t += max(dist / speed, 1e-3)
    return out


ROBOT_SENSOR_Z = 0.5
FPV_SENSOR_Z = 1.6


@dataclass(frozen=True)
class ScenarioWorld:
    name: str
    scene: Scene
    robot_traj: TruthTrajectory
    fpv_traj: TruthTrajectory
    robot_sensor: SensorModel
    fpv_sensor: SensorModel
    mapping_end: float          # robot coverage ready; FPV anchors here
    primary_human: str          # id of the headline occluded human


def _retag(waypoints, frame):
    return tuple((t, p.with_frames(frame, Frame.WORLD)) for t, p in waypoints)


def _loiter_waypoints(loop, speed, start_t, focus, laps=14):
    """Stream-phase loiter: the robot circles near a target, yaw on the target."""
    out = []
    t = start_t
    for _ in range(laps):
        for i in range(1, len(loop)):
            d = math.hypot(loop[i][0] - loop[i - 1][0], loop[i][1] - loop[i - 1][1])
            t += d / speed
            yaw = _lookat_yaw(loop[i], focus)
            out.append((t, geom.make_pose([loop[i][0], loop[i][1], ROBOT_SENSOR_Z],
                                          yaw=yaw, stamp=t,
                                          from_frame="agent", to_frame=Frame.WORLD)))
    return out


def _ring_around(center, radius=1.5):
    """Square loiter ring at a standoff that keeps the full figure in view."""
    cx, cy = float(center[0]), float(center[1])
    return [(cx, cy - radius), (cx + radius, cy), (cx, cy + radius),
            (cx - radius, cy), (cx, cy - radius)]


def _corridor_door(seed: int) -> ScenarioWorld:
    rng = np.random.default_rng(seed)
    lo = np.array([0.0, 0.0, 0.0])
    hi = np.array([9.5, 9.5, WALL_HEIGHT])
    solids: list[Solid] = []
    solids += _wall_boxes("wall_w", [0.06, 0.0], [0.06, 9.5])
    solids += _wall_boxes("wall_e", [9.44, 0.0], [9.44, 9.5])
    solids += _wall_boxes("wall_s", [0.0, 0.06], [9.5, 0.06])
    solids += _wall_boxes("wall_n", [0.0, 9.44], [9.5, 9.44])
    # corridor x in [0.12, 2.06], room x in [2.66, 9.38]
    solids += _wall_boxes("wall_div", [2.36, 0.0], [2.36, 9.5], door=(4.2, 5.2),
                          thick=PARTITION_THICK)
    solids.append(make_box_solid("cabinet", [0.55, 8.6, 0.6], [0.7, 0.8, 1.2]))
    solids.append(make_box_solid("crate_a", [7.5, 2.0, 0.5], [1.0, 1.2, 1.0]))
    solids.append(make_box_solid("crate_b", [4.5, 8.2, 0.4], [1.4, 0.8, 0.8]))
    solids.append(make_box_solid("pillar", [6.8, 6.8, WALL_HEIGHT / 2], [0.4, 0.4, WALL_HEIGHT]))
    solids.append(make_leaning_panel(
        "panel_corr", leaning_panel_center(2.06, 3.0, 0.45), yaw=0.0, tilt=0.45))
    solids.append(make_leaning_panel(
        "panel_corr_n", leaning_panel_center(2.06, 6.6, 0.45), yaw=0.0, tilt=0.45))
    solids.append(make_leaning_panel("panel_room", [4.1, 4.1, 0.79], yaw=0.6, tilt=-0.5))
    solids.append(make_box_solid("pilaster_a", [0.27, 3.2, WALL_HEIGHT / 2], [0.3, 0.3, WALL_HEIGHT]))
    solids.append(make_box_solid("pilaster_b", [0.27, 6.4, WALL_HEIGHT / 2], [0.3, 0.3, WALL_HEIGHT]))
    solids.append(make_box_solid("pilaster_c", [0.27, 4.9, WALL_HEIGHT / 2], [0.3, 0.3, WALL_HEIGHT]))
    solids.append(_beam("beam_c1", 0, 3.4, 0.12, 2.06))
    solids.append(_beam("beam_c2", 0, 6.8, 0.12, 2.06))
    solids.append(_beam("beam_r1", 0, 3.5, 2.66, 9.38))
    solids.append(_beam("beam_r2", 0, 6.5, 2.66, 9.38))
    solids += _floor_ceiling(lo, hi, WALL_HEIGHT)

    hpos = np.array([5.2, 6.2, 0.0]) + np.r_[rng.uniform(-0.25, 0.25, 2), 0.0]
    human = HumanFigure("human_1", hpos, yaw=float(rng.uniform(0, 2 * math.pi)))
    scene = Scene(tuple(solids), (human,), (lo, hi))

    robot_path = [(1.2, 0.8), (1.2, 8.2), (1.2, 4.7), (3.4, 4.7), (5.0, 3.2),
                  (7.2, 4.2), (7.0, 6.2), (5.4, 4.9)]
    robot_wp = _waypoints(robot_path, speed=1.0, z=ROBOT_SENSOR_Z)
    mapping_end = robot_wp[-1][0] + 0.5
    robot_wp += _loiter_waypoints(_ring_around(hpos, 1.5), 1.0, mapping_end,
                                  (hpos[0], hpos[1]))

    look = (5.2, 5.8)
    fpv_path = [(1.05, 1.6), (1.05, 7.8), (1.05, 1.6), (1.05, 7.8), (1.05, 1.6), (1.05, 7.8)]
    fpv_wp = _waypoints(fpv_path, speed=1.0, z=FPV_SENSOR_Z, yaw_target=look,
                        hold_first=mapping_end + 1.0, hold_yaw_target=(2.36, 4.7))

    return ScenarioWorld(
        "corridor_door", scene,
        TruthTrajectory(Frame.ROBOT, _retag(robot_wp, Frame.ROBOT)),
        TruthTrajectory(Frame.FPV, _retag(fpv_wp, Frame.FPV)),
        default_robot_sensor(), default_fpv_sensor(),
        mapping_end, "human_1",
    )


def _auditorium(seed: int) -> ScenarioWorld:
    rng = np.random.default_rng(seed)
    lo = np.array([0.0, 0.0, 0.0])
    hi = np.array([14.0, 10.0, WALL_HEIGHT])
    solids: list[Solid] = []
    solids += _wall_boxes("wall_w", [0.06, 0.0], [0.06, 10.0])
    solids += _wall_boxes("wall_e", [13.94, 0.0], [13.94, 10.0])
    solids += _wall_boxes("wall_s", [0.0, 0.06], [14.0, 0.06])
    solids += _wall_boxes("wall_n", [0.0, 9.94], [14.0, 9.94])
    # lobby x in [0.12, 2.76], hall x in [3.36, 13.88]; two entry doors
    solids += _wall_boxes("wall_lobby_a", [3.06, 0.0], [3.06, 5.0], door=(2.3, 3.3),
                          thick=PARTITION_THICK)
    solids += _wall_boxes("wall_lobby_b", [3.06, 5.0], [3.06, 10.0], door=(6.4, 7.4),
                          thick=PARTITION_THICK)
    for i, cx in enumerate((6.5, 8.5, 10.5)):
        solids.append(make_box_solid(f"seats_{i}", [cx, 5.0, 0.42], [1.0, 5.0, 0.84]))
    solids.append(make_box_solid("stage", [12.8, 2.0, 0.3], [1.6, 3.0, 0.6]))
    solids.append(make_leaning_panel(
        "panel_lobby", leaning_panel_center(2.76, 3.5, 0.45), yaw=0.0, tilt=0.45))
    solids.append(make_leaning_panel(
        "panel_lobby_n", leaning_panel_center(2.76, 5.6, 0.45), yaw=0.0, tilt=0.45))
    solids.append(make_leaning_panel("panel_hall", [4.6, 5.6, 0.79], yaw=0.5, tilt=-0.5))
    solids.append(make_box_solid("pilaster_a", [0.27, 3.4, WALL_HEIGHT / 2], [0.3, 0.3, WALL_HEIGHT]))
    solids.append(make_box_solid("pilaster_b", [0.27, 6.6, WALL_HEIGHT / 2], [0.3, 0.3, WALL_HEIGHT]))
    solids.append(_beam("beam_l1", 0, 3.6, 0.12, 2.76))
    solids.append(_beam("beam_l2", 0, 6.9, 0.12, 2.76))
    solids.append(_beam("beam_h1", 1, 5.5, 0.12, 9.88))
    solids.append(_beam("beam_h2", 1, 9.0, 0.12, 9.88))
    solids += _floor_ceiling(lo, hi, WALL_HEIGHT)

    h1 = HumanFigure("human_1", np.r_[np.array([5.8, 2.2]) + rng.uniform(-0.25, 0.25, 2), 0.0],
                     yaw=float(rng.uniform(0, 2 * math.pi)))
    h2 = HumanFigure("human_2", np.r_[np.array([11.5, 7.6]) + rng.uniform(-0.2, 0.2, 2), 0.0],
                     yaw=float(rng.uniform(0, 2 * math.pi)), posture="prone")
    scene = Scene(tuple(solids), (h1, h2), (lo, hi))

    robot_path = [(1.5, 0.55), (1.5, 9.0), (1.5, 2.8), (4.0, 2.8), (5.4, 3.2),
                  (9.0, 2.4), (12.0, 3.2), (12.2, 6.8), (10.8, 7.6), (8.0, 7.2),
                  (5.8, 3.6)]
    robot_wp = _waypoints(robot_path, speed=1.3, z=ROBOT_SENSOR_Z)
    mapping_end = robot_wp[-1][0] + 0.5
    robot_wp += _loiter_waypoints(_ring_around(h1.position, 1.5), 1.0, mapping_end,
                                  (float(h1.position[0]), float(h1.position[1])))

    look = (6.0, 3.0)
    fpv_path = [(1.4, 1.8), (1.4, 8.4), (1.4, 1.8), (1.4, 8.4), (1.4, 1.8), (1.4, 8.4)]
    fpv_wp = _waypoints(fpv_path, speed=1.0, z=FPV_SENSOR_Z, yaw_target=look,
                        hold_first=mapping_end + 1.0, hold_yaw_target=(3.06, 2.8))

    return ScenarioWorld(
        "auditorium", scene,
        TruthTrajectory(Frame.ROBOT, _retag(robot_wp, Frame.ROBOT)),
        TruthTrajectory(Frame.FPV, _retag(fpv_wp, Frame.FPV)),
        default_robot_sensor(), default_fpv_sensor(),
        mapping_end, "human_1",
    )


def _tactical(seed: int) -> ScenarioWorld:
    rng = np.random.default_rng(seed)
    lo = np.array([0.0, 0.0, 0.0])
    hi = np.array([12.0, 9.0, WALL_HEIGHT])
    solids: list[Solid] = []
    solids += _wall_boxes("wall_w", [0.06, 0.0], [0.06, 9.0])
    solids += _wall_boxes("wall_e", [11.94, 0.0], [11.94, 9.0])
    solids += _wall_boxes("wall_s", [0.0, 0.06], [12.0, 0.06])
    solids += _wall_boxes("wall_n", [0.0, 8.94], [12.0, 8.94])
    # south corridor y in [0.12, 2.06]; partitioned rooms north of it
    solids += _wall_boxes("wall_corr_a", [0.0, 2.36], [6.0, 2.36], door=(2.8, 3.7),
                          thick=PARTITION_THICK)
    solids += _wall_boxes("wall_corr_b", [6.0, 2.36], [12.0, 2.36], door=(8.3, 9.2),
                          thick=PARTITION_THICK)
    solids += _wall_boxes("wall_mid", [6.01, 2.66], [6.01, 9.0], door=(5.0, 5.9),
                          thick=PARTITION_THICK)
    solids += _wall_boxes("wall_nw", [0.0, 5.56], [4.2, 5.56], thick=PARTITION_THICK)
    solids.append(make_box_solid("table", [9.6, 7.4, 0.45], [1.6, 0.9, 0.9]))
    solids.append(make_box_solid("locker", [0.7, 4.4, 0.9], [0.6, 1.0, 1.8]))
    solids.append(make_leaning_panel(
        "panel_corr", leaning_panel_center(2.06, 4.6, 0.45, axis=1), yaw=math.pi / 2, tilt=0.45))
    solids.append(make_leaning_panel(
        "panel_corr_e", leaning_panel_center(2.06, 9.9, 0.45, axis=1), yaw=math.pi / 2, tilt=0.45))
    solids.append(make_leaning_panel("panel_ne", [8.2, 5.4, 0.79], yaw=0.4, tilt=-0.5))
    solids.append(make_box_solid("pilaster_a", [3.4, 0.27, WALL_HEIGHT / 2], [0.3, 0.3, WALL_HEIGHT]))
    solids.append(make_box_solid("pilaster_b", [7.6, 0.27, WALL_HEIGHT / 2], [0.3, 0.3, WALL_HEIGHT]))
    solids.append(_beam("beam_c1", 1, 3.0, 0.12, 2.06))
    solids.append(_beam("beam_c2", 1, 6.0, 0.12, 2.06))
    solids.append(_beam("beam_c3", 1, 9.0, 0.12, 2.06))
    solids.append(_beam("beam_r1", 0, 4.2, 0.12, 11.88))
    solids.append(_beam("beam_r2", 0, 7.4, 0.12, 11.88))
    solids += _floor_ceiling(lo, hi, WALL_HEIGHT)

    h1 = HumanFigure("human_1", np.r_[np.array([2.0, 7.2]) + rng.uniform(-0.25, 0.25, 2), 0.0],
                     yaw=float(rng.uniform(0, 2 * math.pi)))
    h2 = HumanFigure("human_2", np.r_[np.array([9.5, 4.4]) + rng.uniform(-0.2, 0.2, 2), 0.0],
                     yaw=float(rng.uniform(0, 2 * math.pi)), posture="prone")
    scene = Scene(tuple(solids), (h1, h2), (lo, hi))

    robot_path = [(0.45, 1.0), (11.45, 1.0), (3.25, 1.0), (3.25, 3.2), (4.8, 4.4),
                  (5.0, 6.5), (2.4, 6.4), (1.4, 7.4), (3.4, 7.8), (5.2, 6.4),
                  (5.45, 5.45), (6.6, 5.4), (8.6, 4.6), (9.4, 3.4)]
    robot_wp = _waypoints(robot_path, speed=1.4, z=ROBOT_SENSOR_Z)
    mapping_end = robot_wp[-1][0] + 0.5
    robot_wp += _loiter_waypoints(_ring_around(h2.position, 1.5), 1.2, mapping_end,
                                  (float(h2.position[0]), float(h2.position[1])))

    look = (8.6, 4.4)
    fpv_path = [(0.9, 1.0), (11.0, 1.0), (0.9, 1.0), (11.0, 1.0)]
    fpv_wp = _waypoints(fpv_path, speed=1.2, z=FPV_SENSOR_Z, yaw_target=look,
                        hold_first=mapping_end + 1.0, hold_yaw_target=(5.0, 2.36))

    return ScenarioWorld(
        "tactical", scene,
        TruthTrajectory(Frame.ROBOT, _retag(robot_wp, Frame.ROBOT)),
        TruthTrajectory(Frame.FPV, _retag(fpv_wp, Frame.FPV)),
        default_robot_sensor(), default_fpv_sensor(),
        mapping_end, "human_2",
    )


PRESETS = {
    "corridor_door": _corridor_door,
    "auditorium": _auditorium,
    "tactical": _tactical,
}


def build_scenario(preset: str, seed: int = 0,
                   robot_sensor: SensorModel | None = None,
                   fpv_sensor: SensorModel | None = None) -> ScenarioWorld:
    """Deterministic scenario for a named preset and seed.

    Every preset places at least one human occluded from the FPV start pose
    and visible from the robot path.
    """
    if preset not in PRESETS:
        raise ConfigurationError(
            f"unknown preset {preset!r}; available: {sorted(PRESETS)}"
        )
    world = PRESETS[preset](seed)
    if robot_sensor is not None or fpv_sensor is not None:
        world = replace(world,
                        robot_sensor=robot_sensor or world.robot_sensor,
                        fpv_sensor=fpv_sensor or world.fpv_sensor)
    return world
