import numpy as np
import pytest

from seethru import geom, link
from seethru.geom import Frame
from seethru.link import (
    Channel,
    FrameStamps,
    IncompleteBreakdownError,
    NodeClock,
    SyncFailedError,
    account,
    decode_frame,
    decode_frames,
    encode_frame,
    render_select,
    sync,
)


# ---------------------------------------------------------------------------
# sync


def test_sync_symmetric_zero_jitter_exact():
    a = NodeClock(offset=0.0)
    b = NodeClock(offset=0.1234)
    ch = Channel(base_latency=0.02, jitter=0.0, seed=0)
    res = sync(a, b, ch)
    assert res.offset_estimate == pytest.approx(0.1234, abs=1e-15)


def test_sync_jitter_min_filter():
    hits = 0
    for seed in range(100):
        a = NodeClock()
        b = NodeClock(offset=-0.05)
        ch = Channel(base_latency=0.02, jitter=0.002, seed=seed)
        res = sync(a, b, ch, exchanges=32)
        if abs(res.offset_estimate - (-0.05)) < 0.002:
            hits += 1
    assert hits >= 95


def test_sync_all_dropped():
    ch = Channel(base_latency=0.01, drop_probability=1.0, seed=1)
    with pytest.raises(SyncFailedError):
        sync(NodeClock(), NodeClock(offset=0.2), ch)


def test_clock_correction():
    b = NodeClock(offset=0.1)
    est = 0.1
    fixed = b.corrected(est)
    assert fixed.local_time(5.0) == pytest.approx(5.0)


# ---------------------------------------------------------------------------
# channel


def test_zero_latency_delivery():
    ch = Channel(base_latency=0.0, seed=0)
    ch.send(link.KIND_POSE, b"x", now=1.0)
    got = ch.poll(1.0)
    assert len(got) == 1
    assert got[0][0] == 1.0


def test_fixed_latency_exact():
    ch = Channel(base_latency=0.02, jitter=0.0, seed=0)
    ch.send(link.KIND_POSE, b"x", now=3.0)
    assert ch.poll(3.019) == []
    got = ch.poll(3.021)
    assert got[0][0] - 3.0 == pytest.approx(0.02, abs=1e-12)


def test_drop_fraction_and_conservation():
    ch = Channel(base_latency=0.001, drop_probability=0.1, seed=3)
    n = 10_000
    for i in range(n):
        ch.send(link.KIND_POSE, b"", now=i * 0.01)
    ch.poll(1e9)
    assert ch.sent == n
    assert ch.delivered + ch.dropped == n
    assert 0.88 <= ch.delivered / n <= 0.92


def test_causality_no_early_delivery():
    ch = Channel(base_latency=0.05, jitter=0.01, seed=4, in_order=False)
    arrivals = []
    for i in range(500):
        t = i * 0.02
        ch.send(link.KIND_POSE, b"", now=t)
        for arr, msg in ch.poll(t + 10.0):
            arrivals.append((msg.send_stamp, arr))
    for send, arr in arrivals:
        assert arr >= send + 0.05 - 1e-12


def test_in_order_holds_early_arrivals():
    ch = Channel(base_latency=0.01, jitter=0.05, seed=5, in_order=True)
    for i in range(200):
        ch.send(link.KIND_POSE, str(i).encode(), now=i * 0.001)
    got = ch.poll(1e9)
    seqs = [m.seq for _, m in got]
    assert seqs == sorted(seqs)
    arrs = [a for a, _ in got]
    assert all(b >= a for a, b in zip(arrs, arrs[1:]))


# ---------------------------------------------------------------------------
# wire format


def test_frame_layout_golden():
    payload = b"\x01\x02\x03"
    buf = encode_frame(link.KIND_STEER, 1.5, payload)
    # length = 1 + 8 + 3 = 12, kind 6, stamp 1.5 s = 1_500_000 us
    assert buf[:4] == (12).to_bytes(4, "little")
    assert buf[4] == 6
    assert int.from_bytes(buf[5:13], "little") == 1_500_000
    assert buf[13:] == payload
    kind, stamp, pl, off = decode_frame(buf)
    assert (kind, stamp, pl) == (link.KIND_STEER, 1.5, payload)
    assert off == len(buf)


def test_frame_stream_roundtrip():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-5, 5, (40, 3))
    classes = rng.integers(0, 3, 40).astype(np.uint8)
    frames = (
        encode_frame(link.KIND_SCAN, 0.25, link.pack_points(pts))
        + encode_frame(link.KIND_OVERLAY, 0.5, link.pack_overlay(pts, classes))
        + encode_frame(link.KIND_METRICS, 0.75, link.pack_record({"eps": 0.01, "eta": 0.9}))
    )
    out = decode_frames(frames)
    assert [k for k, _, _ in out] == [link.KIND_SCAN, link.KIND_OVERLAY, link.KIND_METRICS]
    back = link.unpack_points(out[0][2])
    assert np.max(np.abs(back - pts)) < 1e-5  # float32 quantization
    opts, ocls = link.unpack_overlay(out[1][2])
    assert np.array_equal(ocls, classes)
    assert np.max(np.abs(opts - pts)) < 1e-5
    rec = link.unpack_record(out[2][2])
    assert rec == {"eps": 0.01, "eta": 0.9}


def test_decode_truncated_frame_raises():
    buf = encode_frame(link.KIND_POSE, 1.0, b"abcdef")
    with pytest.raises(ValueError):
        decode_frame(buf[:-2])
    with pytest.raises(ValueError):
        decode_frame(b"\x01\x02")


# ---------------------------------------------------------------------------
# render-time selection


def pose_at(t, x):
    return geom.make_pose([x, 0, 0], stamp=t, from_frame="agent", to_frame=Frame.WORLD)


def test_render_select_exact_and_interpolated():
    poses = [pose_at(0.0, 0.0), pose_at(1.0, 1.0), pose_at(2.0, 2.0)]
    got = render_select(poses, poses, 1.0)
    assert got.robot.trans[0] == 1.0 and not got.robot_stale
    got = render_select(poses, poses, 1.5)
    assert got.fpv.trans[0] == pytest.approx(1.5, abs=1e-6)
    assert not got.fpv_stale


def test_render_select_stale():
    poses = [pose_at(0.0, 0.0), pose_at(1.0, 1.0)]
    got = render_select(poses, poses, 5.0)
    assert got.robot.trans[0] == 1.0
    assert got.robot_stale and got.fpv_stale
    with pytest.raises(ValueError):
        render_select([], poses, 0.5)


def test_render_select_linear_motion_accuracy():
    # agent moving at constant velocity: interpolation is exact
    poses = [pose_at(t, 2.0 * t) for t in np.linspace(0, 4, 9)]
    for t_r in (0.3, 1.7, 3.9):
        got = render_select(poses, poses, t_r)
        assert abs(got.robot.trans[0] - 2.0 * t_r) < 1e-6


# ---------------------------------------------------------------------------
# accounting


def test_account_exact_sum():
    stamps = FrameStamps(scan_in=1.00, slam_out=1.03, received=1.05, overlay_out=1.06)
    b = account(stamps, frame_id=7)
    assert b.l_slam == pytest.approx(30.0)
    assert b.l_comm == pytest.approx(20.0)
    assert b.l_viz == pytest.approx(10.0)
    assert b.l_tot == b.l_slam + b.l_comm + b.l_viz  # exact, by construction
    assert b.frame_id == 7


def test_account_zero_latency_channel():
    stamps = FrameStamps(scan_in=0.0, slam_out=0.02, received=0.02, overlay_out=0.03)
    assert account(stamps).l_comm == 0.0


def test_account_missing_stamp():
    with pytest.raises(IncompleteBreakdownError):
        account(FrameStamps(scan_in=0.0, slam_out=0.1, received=None, overlay_out=0.2))
