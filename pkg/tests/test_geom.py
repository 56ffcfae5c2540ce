import math

import numpy as np
import pytest

from seethru import geom
from seethru.geom import (
    ExtrapolationError,
    Frame,
    FrameMismatchError,
    OrientedBox,
    Pose,
    PointCloud,
    apply,
    box_contains,
    compose,
    deskew,
    identity,
    interpolate,
    inverse,
    make_pose,
    se3_exp,
    se3_log,
)


def random_pose(rng, max_angle=3.0, from_frame="a", to_frame="b"):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(-max_angle, max_angle)
    q = geom.quat_from_axis_angle(axis, angle)
    return Pose(q, rng.uniform(-5, 5, size=3), 0.0, from_frame, to_frame)


def test_compose_identity_and_inverse():
    t = make_pose([1, 2, 3], yaw=0.7, pitch=-0.2, from_frame="a", to_frame="b")
    i_b = identity("b")
    got = compose(i_b, t)
    assert np.allclose(got.trans, t.trans)
    assert np.allclose(got.quat, t.quat)

    rt = compose(t, inverse(t))
    assert np.linalg.norm(rt.trans) < 1e-9
    assert geom.rotation_angle(rt) < 1e-9


def test_compose_two_yaw90_flips_x():
    # hand product: Rz(90)Rz(90) = Rz(180), (1,0,0) -> (-1,0,0)
    a = make_pose([0, 0, 0], yaw=math.pi / 2)
    b = make_pose([0, 0, 0], yaw=math.pi / 2)
    p = apply(compose(a, b), [1.0, 0.0, 0.0])
    assert np.allclose(p, [-1.0, 0.0, 0.0], atol=1e-12)


def test_compose_frame_mismatch():
    a = make_pose([0, 0, 0], from_frame="x", to_frame="y")
    b = make_pose([0, 0, 0], from_frame="p", to_frame="q")
    with pytest.raises(FrameMismatchError):
        compose(a, b)


def test_compose_stamp_comes_from_b():
    a = make_pose([1, 0, 0], from_frame="m", to_frame="w", stamp=9.0)
    b = make_pose([0, 1, 0], from_frame="s", to_frame="m", stamp=4.0)
    assert compose(a, b).stamp == 4.0


def test_inverse_pure_translation_and_involution():
    t = make_pose([1, 2, 3], from_frame="a", to_frame="b")
    inv = inverse(t)
    assert np.allclose(inv.trans, [-1, -2, -3])
    assert inv.from_frame == "b" and inv.to_frame == "a"

    rng = np.random.default_rng(0)
    for _ in range(20):
        t = random_pose(rng)
        tt = inverse(inverse(t))
        assert np.linalg.norm(tt.trans - t.trans) < 1e-12
        assert geom.rotation_angle(tt, t) < 1e-12


def test_apply_yaw90():
    assert np.allclose(apply(make_pose([0, 0, 0], yaw=math.pi / 2), [1, 0, 0]), [0, 1, 0])


def test_apply_composition_property():
    rng = np.random.default_rng(1)
    for _ in range(50):
        t1 = random_pose(rng, from_frame="b", to_frame="c")
        t2 = random_pose(rng, from_frame="a", to_frame="b")
        p = rng.uniform(-4, 4, size=3)
        lhs = apply(compose(t1, t2), p)
        rhs = apply(t1, apply(t2, p))
        assert np.linalg.norm(lhs - rhs) < 1e-9


def test_apply_preserves_pairwise_distances():
    rng = np.random.default_rng(2)
    pts = rng.uniform(-3, 3, size=(40, 3))
    t = random_pose(rng)
    out = apply(t, pts)
    d0 = np.linalg.norm(pts[:, None] - pts[None, :], axis=-1)
    d1 = np.linalg.norm(out[:, None] - out[None, :], axis=-1)
    assert np.max(np.abs(d0 - d1)) < 1e-9


def test_group_laws_associativity():
    rng = np.random.default_rng(3)
    for _ in range(30):
        a = random_pose(rng, from_frame="c", to_frame="d")
        b = random_pose(rng, from_frame="b", to_frame="c")
        c = random_pose(rng, from_frame="a", to_frame="b")
        lhs = compose(compose(a, b), c)
        rhs = compose(a, compose(b, c))
        assert np.linalg.norm(lhs.trans - rhs.trans) < 1e-9
        assert geom.rotation_angle(lhs, rhs) < 1e-9


def test_apply_cloud_frame_check():
    cloud = geom.cloud_from_points([[1, 2, 3]], frame=Frame.ROBOT)
    pose = make_pose([0, 0, 0], from_frame=Frame.ROBOT, to_frame=Frame.WORLD)
    out = apply(pose, cloud)
    assert out.frame == Frame.WORLD
    with pytest.raises(FrameMismatchError):
        apply(pose, out)


# ---------------------------------------------------------------------------
# interpolation


def test_interpolate_constant_pose_any_t():
    t = make_pose([1, 1, 1], yaw=0.3, stamp=5.0)
    got = interpolate(t, t, 99.0)
    assert got.stamp == 99.0
    assert np.allclose(got.trans, t.trans)


def test_interpolate_endpoints_exact():
    a = make_pose([0, 0, 0], yaw=0.0, stamp=1.0)
    b = make_pose([2, 0, 0], yaw=1.0, stamp=3.0)
    ga = interpolate(a, b, 1.0)
    gb = interpolate(a, b, 3.0)
    assert np.array_equal(ga.trans, a.trans) and np.array_equal(ga.quat, a.quat)
    assert np.array_equal(gb.trans, b.trans) and np.array_equal(gb.quat, b.quat)


def test_interpolate_midpoint_closed_form():
    # slerp midpoint of yaw 0 -> 90 is yaw 45; translation lerp midpoint is (1,0,0)
    a = make_pose([0, 0, 0], yaw=0.0, stamp=0.0)
    b = make_pose([2, 0, 0], yaw=math.pi / 2, stamp=2.0)
    mid = interpolate(a, b, 1.0)
    assert np.allclose(mid.trans, [1, 0, 0], atol=1e-12)
    expect_q = geom.quat_from_axis_angle([0, 0, 1], math.pi / 4)
    assert np.allclose(mid.quat, expect_q, atol=1e-12)


def test_interpolate_out_of_range():
    a = make_pose([0, 0, 0], stamp=0.0)
    b = make_pose([1, 0, 0], stamp=1.0)
    with pytest.raises(ExtrapolationError):
        interpolate(a, b, 1.5)


# ---------------------------------------------------------------------------
# boxes


def test_box_contains_center_and_face_point():
    b = geom.yaw_box([1, 2, 3], [2, 4, 6], yaw=0.5)
    assert box_contains(b, b.center)
    # face point: center + (s_x/2) * box x-axis -> closed box includes it
    face = b.center + b.rotation[:, 0] * (b.size[0] / 2.0)
    assert box_contains(b, face)


def test_box_contains_matches_bruteforce_oracle():
    rng = np.random.default_rng(4)
    b = OrientedBox(
        rng.uniform(-1, 1, 3),
        geom.quat_to_matrix(geom.quat_from_axis_angle(rng.normal(size=3), 1.1)),
        np.array([0.8, 1.6, 2.4]),
    )
    pts = rng.uniform(-3, 3, size=(10_000, 3))
    got = box_contains(b, pts)
    # oracle: inverse-transform into the box frame, axis-aligned closed test
    local = (pts - b.center) @ b.rotation
    expect = np.all(np.abs(local) <= b.size / 2.0, axis=1)
    assert np.array_equal(got, expect)
    assert expect.any() and not expect.all()


def test_box_corners_rigidity():
    rng = np.random.default_rng(5)
    b = geom.yaw_box([0.5, -1, 2], [1, 2, 3], yaw=0.8)
    t = random_pose(rng, from_frame=Frame.WORLD, to_frame=Frame.FPV)
    moved = OrientedBox(apply(t, b.center), t.rotation @ b.rotation, b.size, Frame.FPV)
    assert np.max(np.abs(moved.corners() - apply(t, b.corners()))) < 1e-9


# ---------------------------------------------------------------------------
# se(3)


def test_se3_exp_zero_and_pure_translation():
    p = se3_exp(np.zeros(6))
    assert np.linalg.norm(p.trans) == 0 and geom.rotation_angle(p) == 0
    p = se3_exp([1, 0, 0, 0, 0, 0])
    assert np.allclose(p.trans, [1, 0, 0])
    assert geom.rotation_angle(p) == 0


def test_se3_roundtrip_random():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(200):
        rot = rng.normal(size=3)
        rot *= rng.uniform(0, 3.0) / np.linalg.norm(rot)
        xi = np.r_[rng.uniform(-5, 5, 3), rot]
        back = se3_log(se3_exp(xi))
        worst = max(worst, float(np.max(np.abs(back - xi))))
    assert worst < 1e-9


def test_se3_log_near_pi_raises():
    p = make_pose([0, 0, 0], yaw=math.pi - 1e-9)
    with pytest.raises(ValueError):
        se3_log(p)


def test_se3_exp_log_near_pi_fallback_branch():
    # just below the cutoff must still round-trip accurately
    xi = np.r_[0.5, -0.2, 0.1, 0.0, 0.0, math.pi - 1e-5]
    back = se3_log(se3_exp(xi))
    assert np.max(np.abs(back - xi)) < 1e-9


# ---------------------------------------------------------------------------
# deskew


def _const_motion(trans_vel, yaw_rate=0.0):
    def pose_at(t):
        return make_pose(np.asarray(trans_vel) * t, yaw=yaw_rate * t, stamp=t,
                         from_frame="sensor", to_frame=Frame.WORLD)
    return pose_at


def test_deskew_stationary_unchanged():
    rng = np.random.default_rng(7)
    cloud = PointCloud(rng.uniform(-2, 2, (50, 3)), rng.uniform(0, 0.1, 50), "sensor", 0.0)
    out = deskew(cloud, _const_motion([0, 0, 0]))
    assert np.array_equal(out.points, cloud.points)
    assert np.array_equal(out.offsets, cloud.offsets)


def test_deskew_constant_velocity_closed_form():
    # Sensor moves +x at 1 m/s. A point fired at offset tau was measured in the
    # sensor frame at stamp+tau; re-expressed at the stamp its coordinates gain
    # T(0)^-1 T(tau) = translation by +tau * v. Derived by hand from the pose
    # chain; the rotation plane-fit test below confirms the sign independently.
    cloud = PointCloud(np.array([[4.9, 0.0, 0.0]]), np.array([0.1]), "sensor", 0.0)
    out = deskew(cloud, _const_motion([1.0, 0, 0]))
    assert np.allclose(out.points[0], [5.0, 0.0, 0.0], atol=1e-12)


def _plane_rms(points):
    centered = points - points.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    return sv[-1] / math.sqrt(len(points))


def test_deskew_rotating_sweep_reduces_plane_rms():
    # synthesize a sweep of a wall x=5 while the sensor yaws at 0.5 rad/s
    pose_at = _const_motion([0, 0, 0], yaw_rate=0.5)
    taus = np.linspace(0.0, 0.1, 64)
    ys = np.linspace(-1.5, 1.5, 8)
    zs = np.linspace(-0.8, 0.8, 8)
    grid = [(y, z) for y in ys for z in zs]
    meas = []
    for tau, (y, z) in zip(taus, grid):
        world_pt = np.array([5.0, y, z])
        meas.append(apply(inverse(pose_at(tau)), world_pt))
    raw = PointCloud(np.array(meas), taus, "sensor", 0.0)
    fixed = deskew(raw, pose_at)
    assert _plane_rms(fixed.points) < 1e-10
    assert _plane_rms(raw.points) > 100 * max(_plane_rms(fixed.points), 1e-12)


def test_pose_validation():
    with pytest.raises(ValueError):
        Pose(np.array([0.0, 0, 0, 0]), np.zeros(3))
    with pytest.raises(ValueError):
        PointCloud(np.array([[0, 0, np.inf]]), np.array([0.0]), "a", 0.0)
    with pytest.raises(ValueError):
        PointCloud(np.array([[0, 0, 0.0]]), np.array([-0.1]), "a", 0.0)
    with pytest.raises(ValueError):
        OrientedBox(np.zeros(3), np.eye(3), np.array([1.0, 0.0, 1.0]))
