"""The virtual-time scenario pipeline.

One seeded run plays out in three phases on a simulated clock:
  1. mapping: the robot traverses its exploration path, accumulating scans
     into the global map with its (slightly drifting) odometry poses;
  2. anchoring: the FPV device aggregates a scan window and is registered
     into the refined map, seeded only by a coarse deployment hint;
  3. streaming: each robot frame is detected, filtered to human points,
     shipped over the simulated channel, re-expressed in the FPV frame at
     render time, rasterized, and scored against the analytic truth mask,
     while the drift monitor periodically probes registration quality and
     triggers re-alignment.

Everything derives from the run seed; two executions of the same config are
bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import geom, liosim, link, mapping, perception, projection, registration, worldsim
from .geom import Frame, PointCloud, Pose
from .liosim import AnchorState, DriftModel, LioStream
from .perception import DetectionOracleConfig
from .projection import DisplayIntrinsics, PoseUnavailableError, UndefinedReportError
from .registration import RegistrationConfig
from .report import AlignRow, EvalRow, RunReport, summarize
from .scenario import ScenarioConfig, to_dict
from .worldsim import ScenarioWorld


class PipelineError(RuntimeError):
    pass


def _sub_seed(seed: int, stream_id: int, index: int = 0) -> int:
    return (seed * 1_000_003 + stream_id * 10_007 + index) & 0x7FFFFFFF


def _downsample(cloud: PointCloud, leaf: float) -> PointCloud:
    if len(cloud) == 0:
        return cloud
    keys = np.floor(cloud.points / leaf).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    idx = np.sort(first)
    labels = cloud.labels[idx] if cloud.labels is not None else None
    return cloud.replace(points=cloud.points[idx], offsets=cloud.offsets[idx],
                         labels=labels)


@dataclass
class SeedRunState:
    """Mutable state of one seeded run (one world, both agents)."""

    cfg: ScenarioConfig
    seed: int
    world: ScenarioWorld
    robot_stream: LioStream
    fpv_stream: LioStream
    refined: mapping.RefinedMap
    grids: list
    reg_cfg: RegistrationConfig
    anchor: AnchorState | None
    intrinsics: DisplayIntrinsics
    det_cfg: DetectionOracleConfig
    channel: link.Channel
    fpv_clock: link.NodeClock


def robot_estimated_pose(world: ScenarioWorld, stream: LioStream, t: float) -> Pose:
    """Robot odometry pose in F_w: the world frame is anchored at the robot's
    first pose, so its estimate is that pose composed with the local chain."""
    start = worldsim.truth_pose(world.robot_traj, world.robot_traj.span[0])
    rel = stream.local_pose(t)
    return geom.compose(start.with_frames("odom", Frame.WORLD),
                        rel.with_frames(Frame.ROBOT, "odom"))


def build_map(cfg: ScenarioConfig, world: ScenarioWorld, stream: LioStream,
              seed: int, channel: link.Channel | None = None) -> mapping.RefinedMap:
    """Mapping phase; when a channel is given, each scan's newly occupied
    voxels are shipped as a MapSnapshot delta (incremental map transport)."""
    m = mapping.empty_map(cfg.map_leaf)
    t = world.robot_traj.span[0]
    k = 0
    while t <= world.mapping_end:
        truth = worldsim.truth_pose(world.robot_traj, t)
        scan = worldsim.raycast_scan(world.scene, truth, world.robot_sensor,
                                     seed=_sub_seed(seed, 1, k))
        est = robot_estimated_pose(world, stream, t)
        before = len(m)
        m = mapping.accumulate(m, scan, est.with_frames(scan.frame, Frame.WORLD))
        if channel is not None:
            delta = m.points[before:]
            channel.send(link.KIND_MAP, link.pack_points(delta), now=t)
            channel.send(link.KIND_POSE, link.pack_pose(est), now=t)
            channel.poll(t + 10.0)
        t += cfg.mapping_scan_period
        k += 1
    return mapping.refine(m, cfg.z_ground_band,
                          world.scene.ceiling_z - cfg.z_ceiling_margin)


def aggregate_fpv_scan(cfg: ScenarioConfig, world: ScenarioWorld,
                       stream: LioStream, t: float, seed: int,
                       n_sub: int = 3) -> PointCloud:
    """FPV registration scan: a short window of scans merged in the frame of
    the newest one via the odometry chain, downsampled and band-filtered.

    The vertical band filter uses the known mount height (the device is
    carried upright), dropping floor/ceiling returns that have no support in
    the refined map.
    """
    t0, t1 = world.fpv_traj.span
    times = [max(t0, t - cfg.registration.window * i / max(n_sub - 1, 1))
             for i in range(n_sub - 1, -1, -1)]
    ref_local = stream.local_pose(t)
    parts = []
    for i, ti in enumerate(times):
        truth = worldsim.truth_pose(world.fpv_traj, ti)
        scan = worldsim.raycast_scan(world.scene, truth, world.fpv_sensor,
                                     seed=_sub_seed(seed, 2, int(round(ti * 1e3))))
        rel = geom.compose(geom.inverse(ref_local), stream.local_pose(ti))
        pts = geom.apply(rel, scan.points)
        parts.append(scan.replace(points=pts, stamp=t, labels=None))
    merged = geom.merge_clouds(parts)
    merged = _downsample(merged, cfg.registration.scan_leaf)
    z_lo, z_hi = cfg.registration.z_band
    z = merged.points[:, 2] + worldsim.FPV_SENSOR_Z  # upright mount, known height
    keep = (z > z_lo) & (z < z_hi)
    return merged.replace(points=merged.points[keep], offsets=merged.offsets[keep])


def anchor_hint(cfg: ScenarioConfig, world: ScenarioWorld, t: float) -> Pose:
    """Deployment hint: the spawn position quantized to a coarse grid, yaw
    unknown. This is what an operator can reasonably provide ('I am at the
    south entrance'); the yaw-grid reseed absorbs the unknown heading."""
    truth = worldsim.truth_pose(world.fpv_traj, t)
    g = cfg.anchor_hint_grid
    snapped = np.round(truth.trans / g) * g
    snapped[2] = worldsim.FPV_SENSOR_Z
    return geom.make_pose(snapped, yaw=0.0, stamp=t,
                          from_frame=Frame.FPV, to_frame=Frame.WORLD)


def _pose_error_row(seed, stamp, kind, result, truth, triggered=False) -> AlignRow:
    dt, dr = geom.pose_error(result.pose, truth.with_frames(Frame.FPV, Frame.WORLD))
    return AlignRow(seed=seed, stamp=stamp, kind=kind, epsilon=result.epsilon,
                    eta=result.eta, delta_step=result.delta_step,
                    delta_degen=result.delta_degen, iterations=result.iterations,
                    accepted=result.accepted, reseed_count=result.reseed_count,
                    err_trans=dt, err_rot_deg=math.degrees(dr), triggered=triggered)


def start_seed_run(cfg: ScenarioConfig, seed: int) -> tuple[SeedRunState, list[AlignRow]]:
    """Phases 1 and 2: mapping, clock sync, and the initial anchor."""
    world = worldsim.build_scenario(cfg.preset, seed=seed)
    if cfg.sensor_range_sigma is not None:
        from dataclasses import replace as dc_replace

        world = dc_replace(
            world,
            robot_sensor=dc_replace(world.robot_sensor, range_sigma=cfg.sensor_range_sigma),
            fpv_sensor=dc_replace(world.fpv_sensor, range_sigma=cfg.sensor_range_sigma))
    robot_stream = liosim.make_stream(
        world.robot_traj,
        DriftModel(cfg.robot_drift.trans_per_meter, cfg.robot_drift.yaw_per_radian,
                   seed=_sub_seed(seed, 3)),
        rate_hz=20.0, agent_frame=Frame.ROBOT)
    fpv_stream = liosim.make_stream(
        world.fpv_traj,
        DriftModel(cfg.fpv_drift.trans_per_meter, cfg.fpv_drift.yaw_per_radian,
                   seed=_sub_seed(seed, 4)),
        rate_hz=20.0, agent_frame=Frame.FPV)

    channel = link.Channel(cfg.channel.base_latency, cfg.channel.jitter,
                           cfg.channel.drop_probability,
                           seed=_sub_seed(seed, 5), in_order=cfg.channel.in_order)
    refined = build_map(cfg, world, robot_stream, seed, channel=channel)
    reg_cfg = cfg.registration.to_config()
    grids = mapping.multi_res(list(reg_cfg.ndt_sizes), refined)

    fpv_clock = link.NodeClock(offset=cfg.clocks.fpv_offset,
                               drift_rate=cfg.clocks.fpv_drift_rate)
    sync_channel = link.Channel(cfg.channel.base_latency, cfg.channel.jitter,
                                min(cfg.channel.drop_probability, 0.5),
                                seed=_sub_seed(seed, 6))
    sync_res = link.sync(link.NodeClock(), fpv_clock, sync_channel,
                         exchanges=cfg.clocks.sync_exchanges)
    fpv_clock = fpv_clock.corrected(sync_res.offset_estimate)

    det_cfg = DetectionOracleConfig(
        center_sigma=cfg.detection.center_sigma,
        yaw_sigma_deg=cfg.detection.yaw_sigma_deg,
        size_sigma_frac=cfg.detection.size_sigma_frac,
        miss_probability=cfg.detection.miss_probability,
        false_positive_rate=cfg.detection.false_positive_rate,
        min_visible_points=cfg.detection.min_visible_points,
        seed=_sub_seed(seed, 7))

    intrinsics = projection.default_intrinsics(cfg.display.width, cfg.display.height,
                                               cfg.display.h_fov_deg)

    t_a = world.mapping_end
    truth = worldsim.truth_pose(world.fpv_traj, t_a)
    if cfg.perfect_poses:
        # sanity mode: ground-truth anchor, no estimation in the loop
        ident = truth.with_frames(Frame.FPV, Frame.WORLD)
        anchor = liosim.AnchorState(anchor=ident, anchored_at=t_a,
                                    anchor_local=fpv_stream.local_pose(t_a),
                                    composed=ident)
        state = SeedRunState(cfg=cfg, seed=seed, world=world,
                             robot_stream=robot_stream, fpv_stream=fpv_stream,
                             refined=refined, grids=grids, reg_cfg=reg_cfg,
                             anchor=anchor, intrinsics=intrinsics,
                             det_cfg=det_cfg, channel=channel,
                             fpv_clock=fpv_clock)
        return state, []
    scan = aggregate_fpv_scan(cfg, world, fpv_stream, t_a, seed)
    hint = anchor_hint(cfg, world, t_a)
    result = registration.align(scan, refined, reg_cfg, prior=hint, grids=grids)
    anchor = liosim.make_anchor(result, fpv_stream, t_a)
    align_rows = [_pose_error_row(seed, t_a, "initial", result, truth)]

    state = SeedRunState(cfg=cfg, seed=seed, world=world,
                         robot_stream=robot_stream, fpv_stream=fpv_stream,
                         refined=refined, grids=grids, reg_cfg=reg_cfg,
                         anchor=anchor if result.accepted else replace(anchor, rendering_enabled=False),
                         intrinsics=intrinsics, det_cfg=det_cfg,
                         channel=channel, fpv_clock=fpv_clock)
    return state, align_rows


def run_seed(cfg: ScenarioConfig, seed: int) -> tuple[list[EvalRow], list[AlignRow]]:
    """One full seeded run; returns evaluation and alignment rows."""
    state, align_rows = start_seed_run(cfg, seed)
    world = state.world
    eval_rows: list[EvalRow] = []

    t_a = world.mapping_end
    frame_dt = 1.0 / cfg.frame_rate
    n_frames = int(cfg.duration * cfg.frame_rate)
    last_verify_t = t_a
    last_verify_pos = worldsim.truth_pose(world.fpv_traj, t_a).trans
    travel_since = 0.0
    prev_fpv_pos = last_verify_pos

    for k in range(n_frames):
        t_k = t_a + (k + 1) * frame_dt
        if t_k > min(world.robot_traj.span[1], world.fpv_traj.span[1]):
            break

        # robot side: scan, detect, extract, ship
        robot_truth = worldsim.truth_pose(world.robot_traj, t_k)
        robot_scan = worldsim.raycast_scan(world.scene, robot_truth,
                                           world.robot_sensor,
                                           seed=_sub_seed(seed, 8, k))
        if cfg.perfect_poses:
            robot_est = robot_truth.with_frames(robot_scan.frame, Frame.WORLD)
        else:
            robot_est = robot_estimated_pose(world, state.robot_stream, t_k)
            robot_est = robot_est.with_frames(robot_scan.frame, Frame.WORLD)
        detections = perception.detect(world.scene, robot_scan, robot_est, state.det_cfg)
        human_points = perception.extract_human_points(
            robot_scan, robot_est, detections, inflate=cfg.box_inflation)
        slam_out = t_k + cfg.latency.slam
        payload = link.pack_detections(detections.stamp, detections.boxes,
                                       detections.source_ids)
        state.channel.send(link.KIND_DETECTIONS, payload, now=slam_out)
        arrivals = state.channel.poll(slam_out + 10.0)  # virtual time: drain
        if not arrivals:
            continue  # dropped frame
        t_arr = arrivals[-1][0]
        t_r = t_arr + cfg.latency.viz

        # fpv motion bookkeeping
        fpv_truth = worldsim.truth_pose(world.fpv_traj, t_r)
        travel_since += float(np.linalg.norm(fpv_truth.trans - prev_fpv_pos))
        prev_fpv_pos = fpv_truth.trans

        # drift verification probe
        if not cfg.perfect_poses and (
                (t_r - last_verify_t >= cfg.verify_period)
                or (travel_since >= cfg.verify_distance)):
            last_verify_t = t_r
            travel_since = 0.0
            ver_scan = aggregate_fpv_scan(cfg, world, state.fpv_stream, t_r, seed, n_sub=2)
            try:
                composed = liosim.compose_world_pose(state.anchor, state.fpv_stream, t_r)
            except PoseUnavailableError:
                composed = None
            if composed is not None:
                metrics = liosim.probe(ver_scan, state.grids[-1], composed, state.reg_cfg)
                triggered = liosim.monitor(metrics, state.reg_cfg)
                dt_v, dr_v = geom.pose_error(composed, fpv_truth.with_frames(Frame.FPV, Frame.WORLD))
                align_rows.append(AlignRow(
                    seed=seed, stamp=t_r, kind="verify", epsilon=metrics[0],
                    eta=metrics[1], delta_step=0.0, delta_degen=metrics[2],
                    iterations=0, accepted=not triggered, reseed_count=0,
                    err_trans=dt_v, err_rot_deg=math.degrees(dr_v), triggered=triggered))
                if triggered:
                    new_anchor, result = liosim.realign(
                        state.anchor, state.fpv_stream, ver_scan, state.refined,
                        state.reg_cfg, grids=state.grids)
                    state.anchor = new_anchor
                    align_rows.append(_pose_error_row(seed, t_r, "realign", result,
                                                      fpv_truth, triggered=True))
            elif state.anchor is not None:
                # rendering disabled: attempt a fresh anchor
                new_anchor, result = liosim.realign(
                    replace(state.anchor, rendering_enabled=True), state.fpv_stream,
                    ver_scan, state.refined, state.reg_cfg, grids=state.grids)
                state.anchor = new_anchor
                align_rows.append(_pose_error_row(seed, t_r, "realign", result,
                                                  fpv_truth, triggered=True))

        # overlay assembly + evaluation (the base cloud is a bridge-only
        # payload; headless evaluation never rasterizes it)
        if cfg.perfect_poses:
            composed = fpv_truth.with_frames(Frame.FPV, Frame.WORLD)
        else:
            try:
                composed = liosim.compose_world_pose(state.anchor, state.fpv_stream, t_r)
            except PoseUnavailableError:
                continue
        human_fpv = projection.to_fpv(human_points.replace(stamp=t_r), None, composed)
        boxes_fpv = tuple(projection.project_box(b, composed) for b in detections.boxes)
        pixels, clipped = projection.pixel_project(human_fpv, state.intrinsics)

        received_local = state.fpv_clock.local_time(t_arr)
        overlay_local = state.fpv_clock.local_time(t_r)
        breakdown = link.account(link.FrameStamps(
            scan_in=t_k, slam_out=slam_out,
            received=received_local, overlay_out=overlay_local), frame_id=k)

        if len(human_fpv) == 0 or bool(np.all(clipped)):
            continue  # nothing evaluable this frame
        mask = worldsim.render_truth_mask(world.scene, fpv_truth, state.intrinsics,
                                          include_occluders=False)
        try:
            rep = projection.eval_inliers(pixels, clipped, mask, scenario=cfg.preset)
        except UndefinedReportError:
            continue
        eval_rows.append(EvalRow(
            seed=seed, frame=k, stamp=t_r, r_inlier=rep.r_inlier,
            r_outlier=rep.r_outlier, n_points=rep.n_points,
            l_slam=breakdown.l_slam, l_comm=breakdown.l_comm,
            l_viz=breakdown.l_viz, l_tot=breakdown.l_tot))
    return eval_rows, align_rows


@dataclass(frozen=True)
class DriftTrialResult:
    """Outcome of one drift-injection trial."""

    seed: int
    error_crossed_at: float | None   # first verify time with true error > eps_max
    triggered_at: float | None       # first monitor trigger time
    cycles_to_trigger: int | None    # verification cycles between the two
    post_realign_error: float | None
    post_realign_rot_deg: float | None
    realign_accepted: bool


def drift_trial(cfg: ScenarioConfig, seed: int) -> DriftTrialResult:
    """Inject FPV drift along the patrol and watch the correction loop.

    Runs the verification/realign machinery on a fixed probe cadence and
    reports when the true pose error first exceeded eps_max, when the
    monitor fired relative to that, and the pose error right after the
    first realign.
    """
    state, _ = start_seed_run(cfg, seed)
    world = state.world
    if state.anchor is None or not state.anchor.rendering_enabled:
        return DriftTrialResult(seed, None, None, None, None, None, False)
    t_a = world.mapping_end
    t_end = min(t_a + cfg.duration, world.fpv_traj.span[1])
    probe_times = np.arange(t_a + cfg.verify_period, t_end, cfg.verify_period)

    crossed_at = None
    crossed_cycle = None
    for i, t in enumerate(probe_times):
        t = float(t)
        truth = worldsim.truth_pose(world.fpv_traj, t)
        composed = liosim.compose_world_pose(state.anchor, state.fpv_stream, t)
        err = float(np.linalg.norm(composed.trans - truth.trans))
        if crossed_at is None and err > cfg.registration.epsilon_max:
            crossed_at, crossed_cycle = t, i
        scan = aggregate_fpv_scan(cfg, world, state.fpv_stream, t, seed, n_sub=1)
        metrics = liosim.probe(scan, state.grids[-1], composed, state.reg_cfg)
        if liosim.monitor(metrics, state.reg_cfg):
            new_anchor, result = liosim.realign(state.anchor, state.fpv_stream,
                                                scan, state.refined, state.reg_cfg,
                                                grids=state.grids)
            state.anchor = new_anchor
            post = None
            post_rot = None
            if result.accepted:
                post_pose = liosim.compose_world_pose(new_anchor, state.fpv_stream, t)
                dt, dr = geom.pose_error(post_pose, truth.with_frames(Frame.FPV, Frame.WORLD))
                post, post_rot = dt, math.degrees(dr)
            cycles = None if crossed_cycle is None else i - crossed_cycle
            return DriftTrialResult(seed, crossed_at, t, cycles, post, post_rot,
                                    result.accepted)
    return DriftTrialResult(seed, crossed_at, None, None, None, None, False)


def run(cfg: ScenarioConfig, parallel: int = 0) -> RunReport:
    """Execute every seed and fold the rows into one report."""
    all_rows: list[EvalRow] = []
    all_aligns: list[AlignRow] = []
    if parallel and len(cfg.seeds) > 1:
        import concurrent.futures as cf

        with cf.ProcessPoolExecutor(max_workers=parallel) as pool:
            futures = [pool.submit(run_seed, cfg, seed) for seed in cfg.seeds]
            for fut in futures:  # submission order keeps seed order
                rows, aligns = fut.result()
                all_rows.extend(rows)
                all_aligns.extend(aligns)
    else:
        for seed in cfg.seeds:
            rows, aligns = run_seed(cfg, seed)
            all_rows.extend(rows)
            all_aligns.extend(aligns)
    return summarize(cfg.preset, all_rows, all_aligns, to_dict(cfg))


def sweep(cfg: ScenarioConfig, dotted_path: str, values, parallel: int = 0):
    """One report per parameter value, in the given order."""
    from .scenario import override_path

    out = []
    for v in values:
        out.append((v, run(override_path(cfg, dotted_path, v), parallel=parallel)))
    return out
