"""FPV-frame re-expression, box projection, pixel rasterization and inlier scoring.

Camera convention (single source of truth, shared with the mask renderer):
    - the FPV sensor frame has +x forward (optical axis), +y left, +z up;
    - pixel u grows to the image right  -> u = cx + fx * (-y / x)
    - pixel v grows downward            -> v = cy + fy * (-z / x)
Points with x below the near clip, or falling outside the image rectangle,
are flagged clipped and excluded from the evaluation count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geom
from .geom import Frame, FrameMismatchError, OrientedBox, PointCloud, Pose


class PoseUnavailableError(RuntimeError):
    """Raised when a projection is requested while FPV rendering is disabled."""


class UndefinedReportError(ValueError):
    """Raised when an inlier ratio is requested over zero evaluable points."""


@dataclass(frozen=True)
class DisplayIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    near: float = 0.05

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside image")


def default_intrinsics(width: int = 320, height: int = 240, h_fov_deg: float = 70.0) -> DisplayIntrinsics:
    f = (width / 2.0) / np.tan(np.radians(h_fov_deg) / 2.0)
    return DisplayIntrinsics(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0,
                             width=width, height=height)


def to_fpv(points: PointCloud, robot_pose: Pose | None, fpv_pose: Pose) -> PointCloud:
    """Re-express a cloud in the FPV frame: p_fpv = fpv_pose^-1 * (robot_pose * p).

    `fpv_pose` is the composed world pose of the FPV device (F_fpv -> F_w);
    it is inverted internally. World-frame input skips the robot factor.
    """
    if fpv_pose.from_frame != Frame.FPV or fpv_pose.to_frame != Frame.WORLD:
        raise FrameMismatchError("fpv_pose must map F_fpv -> F_w")
    if points.frame == Frame.WORLD:
        world = points
    else:
        if robot_pose is None:
            raise FrameMismatchError(f"cloud in {points.frame!r} needs a robot pose")
        world = geom.apply(robot_pose, points)
    return geom.apply(geom.inverse(fpv_pose), world)


def project_box(b: OrientedBox, fpv_pose: Pose) -> OrientedBox:
    """Re-express a world-frame box in the FPV frame; extents are unchanged."""
    if b.frame != Frame.WORLD:
        raise FrameMismatchError("project_box expects a world-frame box")
    inv = geom.inverse(fpv_pose)
    return OrientedBox(geom.apply(inv, b.center), inv.rotation @ b.rotation, b.size, Frame.FPV)


def pixel_project(points, k: DisplayIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Project FPV-frame points to pixel coordinates.

    Returns (pixels (N,2) float [u, v], clipped (N,) bool). A point is clipped
    when behind the near plane or its rounded pixel falls outside the image;
    clipped rows still carry their raw projection where finite.
    """
    pts = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    uv = np.zeros((n, 2))
    clipped = np.zeros(n, dtype=bool)
    x = pts[:, 0]
    behind = x < k.near
    clipped |= behind
    safe_x = np.where(behind, 1.0, x)
    uv[:, 0] = k.cx + k.fx * (-pts[:, 1] / safe_x)
    uv[:, 1] = k.cy + k.fy * (-pts[:, 2] / safe_x)
    col = np.round(uv[:, 0]).astype(int)
    row = np.round(uv[:, 1]).astype(int)
    outside = (col < 0) | (col >= k.width) | (row < 0) | (row >= k.height)
    clipped |= outside
    return uv, clipped


@dataclass(frozen=True)
class OverlayFrame:
    """One FPV render payload: base cloud, red human points, boxes, pixels."""

    stamp: float
    base: PointCloud          # F_fpv, default color class
    human: PointCloud         # F_fpv, red color class
    boxes: tuple[OrientedBox, ...]
    pixels: np.ndarray        # (N,2) projection of `human`
    clipped: np.ndarray       # (N,) bool
    latency: "object | None" = None
    rendering_enabled: bool = True

    @property
    def red_count(self) -> int:
        return len(self.human)


def colorize(base: PointCloud, human: PointCloud, stamp_tol: float = 1e-6) -> tuple[PointCloud, PointCloud]:
    """Partition the render payload: every human point is red, base stays default.

    Both clouds must be in F_fpv at the same render stamp. Returns the pair
    unchanged (the partition IS the color rule); counts are the contract.
    """
    if base.frame != Frame.FPV or human.frame != Frame.FPV:
        raise FrameMismatchError("colorize expects F_fpv clouds")
    if abs(base.stamp - human.stamp) > stamp_tol:
        raise ValueError(f"stamp mismatch: {base.stamp} vs {human.stamp}")
    return base, human


@dataclass(frozen=True)
class EvalReport:
    r_inlier: float
    r_outlier: float
    n_points: int
    scenario: str = ""

    def __post_init__(self):
        if self.n_points < 1:
            raise UndefinedReportError("inlier ratio undefined for zero points")


def eval_inliers(pixels: np.ndarray, clipped: np.ndarray, mask: np.ndarray,
                 scenario: str = "") -> EvalReport:
    """Fraction of unclipped projected pixels that land inside the truth mask.

    Clipped points are excluded from N (visibility is not the metric's job);
    zero evaluable points is an error, never a silent 0.
    """
    keep = ~np.asarray(clipped, dtype=bool)
    if int(keep.sum()) == 0:
        raise UndefinedReportError("no unclipped pixels to evaluate")
    uv = np.asarray(pixels, dtype=float)[keep]
    col = np.round(uv[:, 0]).astype(int)
    row = np.round(uv[:, 1]).astype(int)
    h, w = mask.shape
    col = np.clip(col, 0, w - 1)
    row = np.clip(row, 0, h - 1)
    inside = mask[row, col]
    r = float(np.count_nonzero(inside)) / float(len(uv))
    return EvalReport(r_inlier=r, r_outlier=1.0 - r, n_points=int(len(uv)), scenario=scenario)
