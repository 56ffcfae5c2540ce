"""Global map accumulation, ground/ceiling refinement and NDT voxel statistics.

The map is the registration target: per-voxel Gaussians (mean, covariance,
normal) summarize the refined map at one or more resolutions. Grids are
rebuilt from immutable map snapshots at alignment time; there is no
incremental NDT update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import geom
from .geom import Frame, FrameMismatchError, PointCloud, Pose

MIN_VOXEL_POINTS = 6
EIG_FLOOR_RATIO = 1e-3
DEFAULT_LEAF = 0.10


def _voxel_keys(points: np.ndarray, cell: float) -> np.ndarray:
    return np.floor(points / cell).astype(np.int64)


@dataclass(frozen=True)
class GlobalMap:
    """Accumulated world-frame points, voxel-downsampled at `leaf`."""

    points: np.ndarray
    leaf: float = DEFAULT_LEAF
    scan_count: int = 0
    key_set: frozenset = None  # occupied voxel keys; derived when omitted

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if self.leaf <= 0:
            raise ValueError("leaf size must be positive")
        if self.key_set is None:
            keys = frozenset(map(tuple, _voxel_keys(pts, self.leaf))) if len(pts) else frozenset()
            object.__setattr__(self, "key_set", keys)

    def __len__(self):
        return len(self.points)

    @property
    def coverage_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if len(self.points) == 0:
            return np.zeros(3), np.zeros(3)
        return self.points.min(axis=0), self.points.max(axis=0)


def empty_map(leaf: float = DEFAULT_LEAF) -> GlobalMap:
    return GlobalMap(np.zeros((0, 3)), leaf, 0)


def accumulate(m: GlobalMap, scan: PointCloud, pose: Pose) -> GlobalMap:
    """Merge a scan (sensor frame) into the map using pose (sensor -> F_w).

    One retained point per occupied voxel, first writer wins, so feeding the
    same scan twice at the same pose leaves the map unchanged.
    """
    if pose.from_frame != scan.frame or pose.to_frame != Frame.WORLD:
        raise FrameMismatchError(
            f"accumulate: pose {pose.from_frame}->{pose.to_frame} does not lift "
            f"scan frame {scan.frame!r} into {Frame.WORLD!r}"
        )
    if len(scan) == 0:
        return GlobalMap(m.points, m.leaf, m.scan_count + 1, m.key_set)
    world = geom.apply(pose, scan.points)
    keys = _voxel_keys(world, m.leaf)
    # first occurrence per new voxel, in scan order
    _, first_idx = np.unique(keys, axis=0, return_index=True)
    first_idx.sort()
    cand_pts = world[first_idx]
    cand_keys = [tuple(k) for k in keys[first_idx]]
    if m.key_set:
        fresh = np.array([k not in m.key_set for k in cand_keys], dtype=bool)
        cand_pts = cand_pts[fresh]
        new_keys = m.key_set | {k for k, f in zip(cand_keys, fresh) if f}
    else:
        new_keys = frozenset(cand_keys)
    merged = np.vstack([m.points, cand_pts]) if len(m.points) else cand_pts
    return GlobalMap(merged, m.leaf, m.scan_count + 1, frozenset(new_keys))


@dataclass(frozen=True)
class RefinedMap:
    """Map minus the ground band and ceiling band."""

    points: np.ndarray
    z_ground_band: float
    z_ceiling_cut: float

    def __post_init__(self):
        object.__setattr__(self, "points",
                           np.asarray(self.points, dtype=float).reshape(-1, 3))

    def __len__(self):
        return len(self.points)

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0) if len(self.points) else np.zeros(3)


def refine(m: GlobalMap, z_ground_band: float, z_ceiling_cut: float) -> RefinedMap:
    """Keep exactly the points with z in [z_ground_band, z_ceiling_cut]."""
    if z_ground_band >= z_ceiling_cut:
        raise ValueError("inverted z band")
    z = m.points[:, 2] if len(m.points) else np.zeros(0)
    keep = (z >= z_ground_band) & (z <= z_ceiling_cut)
    return RefinedMap(m.points[keep] if len(m.points) else m.points,
                      z_ground_band, z_ceiling_cut)


class NdtVoxelGrid:
    """Per-voxel Gaussian statistics of a refined map at one cell size.

    Voxels with fewer than MIN_VOXEL_POINTS points are dropped. Covariances
    are regularized by flooring eigenvalues at EIG_FLOOR_RATIO of the largest;
    normals are the smallest-eigenvalue eigenvectors, sign-fixed to point
    toward the map centroid.
    """

    def __init__(self, cell_size: float, keys: np.ndarray, counts: np.ndarray,
                 means: np.ndarray, covs: np.ndarray, normals: np.ndarray,
                 eigvals: np.ndarray):
        self.cell_size = float(cell_size)
        self.keys = keys
        self.counts = counts
        self.means = means
        self.covs = covs
        self.normals = normals
        self.eigvals = eigvals  # ascending, post-regularization
        self.inv_covs = np.linalg.inv(covs) if len(covs) else covs.reshape(0, 3, 3)
        self._index = {tuple(k): i for i, k in enumerate(keys)}
        self._tree: cKDTree | None = None

    def __len__(self):
        return len(self.means)

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.means)
        return self._tree

    def voxel_of(self, points: np.ndarray) -> np.ndarray:
        """Index of the voxel containing each point, -1 when unoccupied."""
        keys = _voxel_keys(points, self.cell_size)
        return np.array([self._index.get(tuple(k), -1) for k in keys], dtype=int)

    def nearest(self, points: np.ndarray, radius: float) -> np.ndarray:
        """Index of the nearest voxel mean within `radius`, -1 when none."""
        if len(self.means) == 0:
            return np.full(len(points), -1, dtype=int)
        dist, idx = self.tree.query(points, k=1, distance_upper_bound=radius)
        idx = np.asarray(idx, dtype=int)
        idx[~np.isfinite(dist)] = -1
        return idx

    def planar_view(self, max_ratio: float = 0.05) -> "NdtVoxelGrid":
        """Sub-grid of voxels whose smallest/largest eigenvalue ratio is below
        `max_ratio`: the clean planar patches. Point-to-plane residuals
        against mixed voxels (corners, double-sided slabs seen edge-on) are
        biased, so correspondence search is restricted to this view."""
        ratio = self.eigvals[:, 0] / np.maximum(self.eigvals[:, 2], 1e-300)
        keep = ratio <= max_ratio
        return NdtVoxelGrid(self.cell_size, self.keys[keep], self.counts[keep],
                            self.means[keep], self.covs[keep],
                            self.normals[keep], self.eigvals[keep])


def build_ndt(m: RefinedMap, cell_size: float) -> NdtVoxelGrid:
    if cell_size <= 0:
        raise ValueError("cell size must be positive")
    pts = m.points
    if len(pts) == 0:
        z = np.zeros((0, 3))
        return NdtVoxelGrid(cell_size, np.zeros((0, 3), dtype=np.int64),
                            np.zeros(0, dtype=int), z, np.zeros((0, 3, 3)),
                            z, np.zeros((0, 3)))
    keys = _voxel_keys(pts, cell_size)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    counts = np.bincount(inv, minlength=len(uniq))

    sums = np.zeros((len(uniq), 3))
    np.add.at(sums, inv, pts)
    means_all = sums / counts[:, None]
    centered = pts - means_all[inv]
    outer = centered[:, :, None] * centered[:, None, :]
    covs_all = np.zeros((len(uniq), 3, 3))
    np.add.at(covs_all, inv, outer)

    keep = counts >= MIN_VOXEL_POINTS
    uniq, counts = uniq[keep], counts[keep]
    means = means_all[keep]
    covs = covs_all[keep] / (counts - 1)[:, None, None]

    # regularize and extract normals
    w, v = np.linalg.eigh(covs)  # ascending eigenvalues per voxel
    floor = EIG_FLOOR_RATIO * w[:, -1:]
    w_reg = np.maximum(w, floor)
    covs_reg = np.einsum("nij,nj,nkj->nik", v, w_reg, v)
    normals = v[:, :, 0]
    centroid = m.centroid
    flip = np.einsum("ni,ni->n", normals, centroid[None, :] - means) < 0.0
    normals = np.where(flip[:, None], -normals, normals)
    normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    return NdtVoxelGrid(cell_size, uniq, counts, means, covs_reg, normals, w_reg)


def multi_res(grid_sizes, m: RefinedMap) -> list[NdtVoxelGrid]:
    """One grid per size, coarse to fine; sizes must be strictly decreasing."""
    sizes = list(grid_sizes)
    if not sizes:
        raise ValueError("empty grid size list")
    if any(b >= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("grid sizes must be strictly decreasing")
    return [build_ndt(m, s) for s in sizes]


# ---------------------------------------------------------------------------
# fixture I/O: flat text point list, one "x y z" per record


def save_xyz(path, points: np.ndarray) -> None:
    np.savetxt(path, np.asarray(points, dtype=float).reshape(-1, 3), fmt="%.9g")


def load_xyz(path) -> np.ndarray:
    pts = np.loadtxt(path, dtype=float)
    return pts.reshape(-1, 3)
