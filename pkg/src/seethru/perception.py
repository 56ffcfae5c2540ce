"""Human detection oracle and box-filter extraction of human points.

The oracle stands in for a learned 3D detector: any human with enough
surface points in the robot scan is detectable, and its ground-truth
oriented box is emitted with configurable center/yaw/size noise, misses and
free-space false positives. The boxes are never rendered directly; they act
as spatial filters selecting the human subset of the live scan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geom
from .geom import Frame, FrameMismatchError, OrientedBox, PointCloud, Pose
from .worldsim import Scene

FALSE_POSITIVE_SIZE = np.array([0.6, 0.6, 1.7])


@dataclass(frozen=True)
class DetectionOracleConfig:
    center_sigma: float = 0.0      # meters
    yaw_sigma_deg: float = 0.0
    size_sigma_frac: float = 0.0
    miss_probability: float = 0.0
    false_positive_rate: float = 0.0   # expected count per scan
    min_visible_points: int = 20
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.miss_probability <= 1.0):
            raise ValueError("miss probability must be in [0, 1]")
        if min(self.center_sigma, self.yaw_sigma_deg, self.size_sigma_frac,
               self.false_positive_rate) < 0:
            raise ValueError("noise parameters must be non-negative")


@dataclass(frozen=True)
class DetectionSet:
    stamp: float
    boxes: tuple[OrientedBox, ...]
    source_ids: tuple[str | None, ...]   # None marks a false positive

    def __len__(self):
        return len(self.boxes)


def _scan_rng(cfg: DetectionOracleConfig, stamp: float) -> np.random.Generator:
    # deterministic per (seed, scan stamp): microsecond-quantized entropy
    return np.random.default_rng([cfg.seed, int(round(stamp * 1e6)) & 0x7FFFFFFF])


def _point_free(scene: Scene, p: np.ndarray) -> bool:
    for solid in scene.solids:
        if geom.box_contains(solid.box, p):
            return False
    for human in scene.humans:
        if geom.box_contains(human.gt_box.inflated(0.3), p):
            return False
    return True


def detect(scene: Scene, robot_scan: PointCloud, robot_pose: Pose,
           cfg: DetectionOracleConfig) -> DetectionSet:
    """Emit noisy oriented boxes for every human visible in the robot scan.

    Visibility comes from the scan's ray-cast labels: a human needs at least
    `min_visible_points` surface returns. Zero-noise configs reproduce the
    ground-truth boxes exactly. Deterministic for a fixed seed and scan.
    """
    if robot_pose.from_frame != robot_scan.frame or robot_pose.to_frame != Frame.WORLD:
        raise FrameMismatchError("robot pose must lift the scan into F_w")
    rng = _scan_rng(cfg, robot_scan.stamp)
    boxes: list[OrientedBox] = []
    ids: list[str | None] = []
    labels = robot_scan.labels
    counts: dict[str, int] = {}
    if labels is not None:
        for l in labels:
            counts[l] = counts.get(l, 0) + 1
    for human in scene.humans:
        visible = counts.get(human.id, 0)
        if visible < cfg.min_visible_points:
            continue
        if cfg.miss_probability > 0.0 and rng.uniform() < cfg.miss_probability:
            continue
        box = human.gt_box
        # scale-zero draws are exactly 0.0, so a zero-noise config emits the
        # ground-truth box bit-for-bit while keeping the rng stream aligned
        center = box.center + rng.normal(0.0, cfg.center_sigma, 3)
        dyaw = math.radians(rng.normal(0.0, cfg.yaw_sigma_deg))
        rot = geom.quat_to_matrix(geom.quat_from_axis_angle([0, 0, 1], dyaw)) @ box.rotation
        scale = 1.0 + rng.normal(0.0, cfg.size_sigma_frac, 3)
        size = np.maximum(box.size * scale, 0.05)
        boxes.append(OrientedBox(center, rot, size, Frame.WORLD))
        ids.append(human.id)

    if cfg.false_positive_rate > 0.0:
        n_fp = rng.poisson(cfg.false_positive_rate)
        lo, hi = scene.bounds
        for k in range(n_fp):
            for _ in range(50):  # rejection-sample a free-space placement
                xy = rng.uniform(lo[:2] + 0.5, hi[:2] - 0.5)
                center = np.array([xy[0], xy[1], FALSE_POSITIVE_SIZE[2] / 2.0])
                if _point_free(scene, center):
                    yaw = rng.uniform(0, 2 * math.pi)
                    boxes.append(geom.yaw_box(center, FALSE_POSITIVE_SIZE, yaw))
                    ids.append(None)
                    break
    return DetectionSet(robot_scan.stamp, tuple(boxes), tuple(ids))


def extract_human_points(scan: PointCloud, pose: Pose, boxes: DetectionSet,
                         inflate: float = 0.0) -> PointCloud:
    """World-frame scan points lying inside at least one detection box.

    `inflate` grows every box symmetrically before the membership test so
    range-noise-displaced surface points are retained.
    """
    if pose.from_frame != scan.frame or pose.to_frame != Frame.WORLD:
        raise FrameMismatchError("pose must lift the scan into F_w")
    world = geom.apply(pose, scan.points)
    keep = np.zeros(len(world), dtype=bool)
    for box in boxes.boxes:
        b = box.inflated(inflate) if inflate > 0 else box
        keep |= geom.box_contains(b, world)
    labels = scan.labels[keep] if scan.labels is not None else None
    return PointCloud(world[keep], scan.offsets[keep], Frame.WORLD,
                      scan.stamp, labels)
