"""Frame-tagged SE(3) pose algebra, point clouds, oriented boxes and motion de-skew.

Conventions used throughout the package:
    - A Pose maps points from `from_frame` into `to_frame`:  p_to = R @ p_from + t.
    - Orientation is stored as a unit quaternion (w, x, y, z), renormalized after
      every composition, hemisphere fixed to w >= 0.
    - se(3) tangent vectors are 6-vectors [rho; phi] with translation first,
      rotation (axis-angle) last.

All values are immutable after construction and every operation is a pure
function, so everything here is safe to call from concurrent workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np


class Frame:
    """Well-known frame tags. Free-form strings are allowed for scene objects."""

    WORLD = "world"
    ROBOT = "robot"
    FPV = "fpv"
    DISPLAY = "display"


FrameId = str


class FrameMismatchError(ValueError):
    """Raised when poses/clouds with incompatible frame tags are combined."""


class ExtrapolationError(ValueError):
    """Raised when a pose is queried outside its supporting time interval."""


_QUAT_TOL = 1e-9


def _quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = math.sqrt(float(np.dot(q, q)))
    if n == 0.0:
        raise ValueError("zero quaternion")
    q = q / n
    if q[0] < 0.0:
        q = -q
    return q


def _quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def _quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(r: np.ndarray) -> np.ndarray:
    """Shepperd-style extraction: picks the largest pivot, stable for any angle."""
    r = np.asarray(r, dtype=float)
    tr = r[0, 0] + r[1, 1] + r[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        )
    elif r[0, 0] >= r[1, 1] and r[0, 0] >= r[2, 2]:
        s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q = np.array(
            [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
        )
    elif r[1, 1] >= r[2, 2]:
        s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        q = np.array(
            [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        q = np.array(
            [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
        )
    return _quat_normalize(q)


def quat_from_axis_angle(axis: Sequence[float], angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return np.array([1.0, 0.0, 0.0, 0.0])
    half = 0.5 * angle
    return _quat_normalize(np.r_[math.cos(half), math.sin(half) * axis / n])


def _quat_rotate(q: np.ndarray, pts: np.ndarray) -> np.ndarray:
    return pts @ quat_to_matrix(q).T


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform mapping `from_frame` points into `to_frame` at `stamp`."""

    quat: np.ndarray
    trans: np.ndarray
    stamp: float = 0.0
    from_frame: FrameId = Frame.WORLD
    to_frame: FrameId = Frame.WORLD

    def __post_init__(self):
        q = _quat_normalize(np.asarray(self.quat, dtype=float))
        t = np.asarray(self.trans, dtype=float).reshape(3)
        if not np.all(np.isfinite(q)) or not np.all(np.isfinite(t)):
            raise ValueError("non-finite pose")
        if abs(np.linalg.norm(q) - 1.0) > _QUAT_TOL:
            raise ValueError("quaternion not unit norm")
        object.__setattr__(self, "quat", q)
        object.__setattr__(self, "trans", t)

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quat)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.trans
        return m

    def with_stamp(self, stamp: float) -> "Pose":
        return Pose(self.quat, self.trans, stamp, self.from_frame, self.to_frame)

    def with_frames(self, from_frame: FrameId, to_frame: FrameId) -> "Pose":
        return Pose(self.quat, self.trans, self.stamp, from_frame, to_frame)

    def __repr__(self):  # keep log lines short
        return (
            f"Pose({self.from_frame}->{self.to_frame} t={self.trans.round(4)} "
            f"q={self.quat.round(5)} @{self.stamp:.3f})"
        )


def identity(frame: FrameId = Frame.WORLD, stamp: float = 0.0) -> Pose:
    return Pose(np.array([1.0, 0, 0, 0]), np.zeros(3), stamp, frame, frame)


def make_pose(
    xyz: Sequence[float],
    yaw: float = 0.0,
    pitch: float = 0.0,
    roll: float = 0.0,
    stamp: float = 0.0,
    from_frame: FrameId = Frame.WORLD,
    to_frame: FrameId = Frame.WORLD,
) -> Pose:
    """Pose from translation + ZYX Euler angles (radians)."""
    qz = quat_from_axis_angle([0, 0, 1], yaw)
    qy = quat_from_axis_angle([0, 1, 0], pitch)
    qx = quat_from_axis_angle([1, 0, 0], roll)
    q = _quat_mul(_quat_mul(qz, qy), qx)
    return Pose(q, np.asarray(xyz, dtype=float), stamp, from_frame, to_frame)


def compose(a: Pose, b: Pose) -> Pose:
    """a after b: maps b.from_frame -> a.to_frame. Requires a.from_frame == b.to_frame."""
    if a.from_frame != b.to_frame:
        raise FrameMismatchError(
            f"compose: inner frames differ ({a.from_frame!r} vs {b.to_frame!r})"
        )
    q = _quat_normalize(_quat_mul(a.quat, b.quat))
    t = _quat_rotate(a.quat, b.trans[None, :])[0] + a.trans
    return Pose(q, t, b.stamp, b.from_frame, a.to_frame)


def inverse(t: Pose) -> Pose:
    qc = _quat_conj(t.quat)
    return Pose(qc, -_quat_rotate(qc, t.trans[None, :])[0], t.stamp, t.to_frame, t.from_frame)


def apply(t: Pose, points) -> "np.ndarray | PointCloud":
    """Transform raw (N,3)/(3,) arrays, or a PointCloud with frame checking."""
    if isinstance(points, PointCloud):
        if points.frame != t.from_frame:
            raise FrameMismatchError(
                f"apply: cloud frame {points.frame!r} != pose from_frame {t.from_frame!r}"
            )
        return points.replace(points=apply(t, points.points), frame=t.to_frame)
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    out = _quat_rotate(t.quat, pts) + t.trans
    return out[0] if single else out


def slerp(qa: np.ndarray, qb: np.ndarray, alpha: float) -> np.ndarray:
    """Shortest-arc spherical interpolation, exact at alpha 0 and 1."""
    dot = float(np.dot(qa, qb))
    if dot < 0.0:
        qb = -qb
        dot = -dot
    if alpha <= 0.0:
        return _quat_normalize(qa)
    if alpha >= 1.0:
        return _quat_normalize(qb)
    if dot > 1.0 - 1e-12:
        return _quat_normalize(qa + alpha * (qb - qa))
    theta = math.acos(min(1.0, dot))
    s = math.sin(theta)
    return _quat_normalize(
        (math.sin((1 - alpha) * theta) / s) * qa + (math.sin(alpha * theta) / s) * qb
    )


def interpolate(a: Pose, b: Pose, t: float) -> Pose:
    """Linear translation blend + shortest-arc rotation blend between two poses.

    Endpoints are exact. Degenerate brackets (equal stamps) return `a` restamped,
    so interpolating a constant pose is valid at any query time. Note that
    interpolate-then-apply equals apply-then-blend only for zero rotation;
    the blends live in different tangent spaces in general.
    """
    if a.from_frame != b.from_frame or a.to_frame != b.to_frame:
        raise FrameMismatchError("interpolate: frame pairs differ")
    if b.stamp == a.stamp:
        return a.with_stamp(t)
    if t < min(a.stamp, b.stamp) or t > max(a.stamp, b.stamp):
        raise ExtrapolationError(f"t={t} outside [{a.stamp}, {b.stamp}]")
    alpha = (t - a.stamp) / (b.stamp - a.stamp)
    if alpha == 0.0:
        return a.with_stamp(t)
    if alpha == 1.0:
        return b.with_stamp(t)
    q = slerp(a.quat, b.quat, alpha)
    tr = (1 - alpha) * a.trans + alpha * b.trans
    return Pose(q, tr, t, a.from_frame, a.to_frame)


# ---------------------------------------------------------------------------
# se(3) exp / log


def _skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]], dtype=float)


def so3_exp(phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = float(np.linalg.norm(phi))
    k = _skew(phi)
    if theta < 1e-8:
        return np.eye(3) + k + 0.5 * (k @ k)
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * k + b * (k @ k)


def so3_log(r: np.ndarray) -> np.ndarray:
    """Rotation vector from a rotation matrix via quaternion extraction.

    Well conditioned for all angles below the pi - 1e-6 cutoff; raises beyond it.
    """
    q = matrix_to_quat(r)
    vn = float(np.linalg.norm(q[1:]))
    angle = 2.0 * math.atan2(vn, q[0])
    if angle >= math.pi - 1e-6:
        raise ValueError("so3_log: rotation angle too close to pi")
    if vn < 1e-12:
        return 2.0 * q[1:]  # small-angle: q_vec ~ phi/2
    return (angle / vn) * q[1:]


def _so3_left_jacobian(phi: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(phi))
    k = _skew(phi)
    if theta < 1e-5:
        return np.eye(3) + 0.5 * k + (k @ k) / 6.0
    a = (1.0 - math.cos(theta)) / (theta * theta)
    b = (theta - math.sin(theta)) / (theta ** 3)
    return np.eye(3) + a * k + b * (k @ k)


def _so3_left_jacobian_inv(phi: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(phi))
    k = _skew(phi)
    if theta < 1e-5:
        return np.eye(3) - 0.5 * k + (k @ k) / 12.0
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    coef = (1.0 / (theta * theta)) * (1.0 - a / (2.0 * b))
    return np.eye(3) - 0.5 * k + coef * (k @ k)


def se3_exp(
    xi: np.ndarray,
    stamp: float = 0.0,
    from_frame: FrameId = Frame.WORLD,
    to_frame: FrameId = Frame.WORLD,
) -> Pose:
    """Pose from a 6-vector [rho; phi]."""
    xi = np.asarray(xi, dtype=float).reshape(6)
    rho, phi = xi[:3], xi[3:]
    r = so3_exp(phi)
    t = _so3_left_jacobian(phi) @ rho
    return Pose(matrix_to_quat(r), t, stamp, from_frame, to_frame)


def se3_log(t: Pose) -> np.ndarray:
    phi = so3_log(t.rotation)
    rho = _so3_left_jacobian_inv(phi) @ t.trans
    return np.r_[rho, phi]


def rotation_angle(a: Pose, b: Pose | None = None) -> float:
    """Geodesic rotation angle of `a` (or between `a` and `b`), in radians."""
    q = a.quat if b is None else _quat_mul(_quat_conj(b.quat), a.quat)
    vn = float(np.linalg.norm(q[1:]))
    return 2.0 * math.atan2(vn, abs(float(q[0])))


def pose_error(a: Pose, b: Pose) -> tuple[float, float]:
    """(translation error in meters, rotation error in radians) between two poses."""
    return float(np.linalg.norm(a.trans - b.trans)), rotation_angle(a, b)


# ---------------------------------------------------------------------------
# Point clouds


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Timestamped (N,3) points with per-point firing offsets and a frame tag.

    `labels` optionally carries the scene-element id each point was measured on
    (simulator ground truth); it is metadata and never affects geometry.
    """

    points: np.ndarray
    offsets: np.ndarray
    frame: FrameId
    stamp: float
    labels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        offs = np.asarray(self.offsets, dtype=float).reshape(-1)
        if pts.shape[0] != offs.shape[0]:
            raise ValueError("points/offsets length mismatch")
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite point coordinates")
        if offs.size and float(offs.min()) < 0.0:
            raise ValueError("negative firing offset")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "offsets", offs)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=object).reshape(-1)
            if lab.shape[0] != pts.shape[0]:
                raise ValueError("labels length mismatch")
            object.__setattr__(self, "labels", lab)

    def __len__(self):
        return self.points.shape[0]

    def replace(self, **kw) -> "PointCloud":
        args = dict(
            points=self.points, offsets=self.offsets, frame=self.frame,
            stamp=self.stamp, labels=self.labels,
        )
        args.update(kw)
        return PointCloud(**args)


def empty_cloud(frame: FrameId, stamp: float = 0.0) -> PointCloud:
    return PointCloud(np.zeros((0, 3)), np.zeros(0), frame, stamp)


def cloud_from_points(points, frame: FrameId, stamp: float = 0.0, labels=None) -> PointCloud:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    return PointCloud(pts, np.zeros(len(pts)), frame, stamp, labels)


def merge_clouds(clouds: Iterable[PointCloud]) -> PointCloud:
    clouds = list(clouds)
    if not clouds:
        raise ValueError("merge_clouds: empty input")
    frame, stamp = clouds[0].frame, clouds[0].stamp
    for c in clouds:
        if c.frame != frame:
            raise FrameMismatchError("merge_clouds: mixed frames")
    pts = np.vstack([c.points for c in clouds])
    offs = np.concatenate([c.offsets for c in clouds])
    labs = None
    if all(c.labels is not None for c in clouds):
        labs = np.concatenate([c.labels for c in clouds])
    return PointCloud(pts, offs, frame, stamp, labs)


def deskew(cloud: PointCloud, pose_at: Callable[[float], Pose]) -> PointCloud:
    """Motion-compensate a sweep: re-express every point in the sensor pose at
    the cloud stamp.

    A point fired at offset tau was measured in the sensor frame at
    `stamp + tau`; its coordinates in the stamp frame are
    T(stamp)^-1 * T(stamp+tau) * p. Zero motion over the sweep returns the
    input unchanged. Firing offsets are kept (they still record firing time).
    """
    if len(cloud) == 0:
        return cloud
    ref = pose_at(cloud.stamp)
    ref_inv = inverse(ref)
    out = np.empty_like(cloud.points)
    # group identical offsets so a uniform sweep costs one pose query per ring
    order = np.argsort(cloud.offsets, kind="stable")
    sorted_offs = cloud.offsets[order]
    start = 0
    while start < len(sorted_offs):
        end = start
        while end < len(sorted_offs) and sorted_offs[end] == sorted_offs[start]:
            end += 1
        idx = order[start:end]
        tau = float(sorted_offs[start])
        if tau == 0.0:
            out[idx] = cloud.points[idx]
        else:
            rel = compose(ref_inv, pose_at(cloud.stamp + tau))
            out[idx] = apply(rel, cloud.points[idx])
        start = end
    return cloud.replace(points=out)


# ---------------------------------------------------------------------------
# Oriented boxes


@dataclass(frozen=True, eq=False)
class OrientedBox:
    """Oriented 3D box: center, rotation matrix, full extents (all > 0)."""

    center: np.ndarray
    rotation: np.ndarray
    size: np.ndarray
    frame: FrameId = Frame.WORLD

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(3)
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        s = np.asarray(self.size, dtype=float).reshape(3)
        if np.any(s <= 0):
            raise ValueError("box size must be strictly positive")
        if not np.all(np.isfinite(c)) or not np.all(np.isfinite(r)):
            raise ValueError("non-finite box")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "size", s)

    def inflated(self, margin: float) -> "OrientedBox":
        return OrientedBox(self.center, self.rotation, self.size + 2.0 * margin, self.frame)

    def corners(self) -> np.ndarray:
        """(8,3) corners, fixed sign ordering."""
        half = self.size / 2.0
        signs = np.array(
            [
                [-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
                [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1],
            ],
            dtype=float,
        )
        return (signs * half) @ self.rotation.T + self.center


def box_contains(b: OrientedBox, p) -> "bool | np.ndarray":
    """Closed-box containment: |R^T (p - c)| <= s/2 componentwise (face points count)."""
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    local = (pts - b.center) @ b.rotation
    inside = np.all(np.abs(local) <= b.size / 2.0 + 0.0, axis=1)
    return bool(inside[0]) if single else inside


def yaw_box(center, size, yaw: float = 0.0, frame: FrameId = Frame.WORLD) -> OrientedBox:
    return OrientedBox(np.asarray(center, float), quat_to_matrix(quat_from_axis_angle([0, 0, 1], yaw)), np.asarray(size, float), frame)
