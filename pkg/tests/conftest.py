import numpy as np
import pytest

from seethru import geom, mapping, registration as reg, worldsim as ws
from seethru.geom import Frame


def build_truth_map(world, scan_period=0.8, leaf=0.1):
    """Accumulate robot scans at ground-truth poses into a refined map."""
    m = mapping.empty_map(leaf)
    t = 0.0
    while t <= world.mapping_end:
        pose = ws.truth_pose(world.robot_traj, t)
        scan = ws.raycast_scan(world.scene, pose, world.robot_sensor,
                               seed=int(t * 1000) + 1)
        m = mapping.accumulate(m, scan, pose)
        t += scan_period
    return mapping.refine(m, 0.3, world.scene.ceiling_z - 0.3)


def downsample_cloud(cloud, leaf=0.1):
    keys = np.floor(cloud.points / leaf).astype(int)
    _, first = np.unique(keys, axis=0, return_index=True)
    idx = np.sort(first)
    labels = cloud.labels[idx] if cloud.labels is not None else None
    return cloud.replace(points=cloud.points[idx], offsets=cloud.offsets[idx],
                         labels=labels)


def fpv_registration_scan(world, t=0.0, seed=77, z_band=(0.35, 2.65)):
    """A downsampled FPV scan plus its true world pose, band-filtered like
    the engine does before registration."""
    fpv_true = ws.truth_pose(world.fpv_traj, t).with_frames(Frame.FPV, Frame.WORLD)
    scan = downsample_cloud(ws.raycast_scan(world.scene, fpv_true, world.fpv_sensor, seed))
    zw = geom.apply(fpv_true, scan.points)[:, 2]
    keep = (zw > z_band[0]) & (zw < z_band[1])
    labels = scan.labels[keep] if scan.labels is not None else None
    scan = scan.replace(points=scan.points[keep], offsets=scan.offsets[keep],
                        labels=labels)
    return scan, fpv_true


@pytest.fixture(scope="session")
def corridor_world():
    return ws.build_scenario("corridor_door", seed=0)


@pytest.fixture(scope="session")
def corridor_map(corridor_world):
    return build_truth_map(corridor_world)


@pytest.fixture(scope="session")
def corridor_grids(corridor_map):
    cfg = reg.tuned_config()
    return mapping.multi_res(list(cfg.ndt_sizes), corridor_map)


@pytest.fixture(scope="session")
def corridor_fpv_scan(corridor_world):
    return fpv_registration_scan(corridor_world)
