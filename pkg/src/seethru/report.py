"""Run reports: per-frame evaluation rows, per-alignment records, summary
statistics, and deterministic CSV/JSON serialization."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class EvalRow:
    seed: int
    frame: int
    stamp: float
    r_inlier: float
    r_outlier: float
    n_points: int
    l_slam: float
    l_comm: float
    l_viz: float
    l_tot: float


@dataclass(frozen=True)
class AlignRow:
    seed: int
    stamp: float
    kind: str            # initial | verify | realign
    epsilon: float
    eta: float
    delta_step: float
    delta_degen: float
    iterations: int
    accepted: bool
    reseed_count: int
    err_trans: float     # ground-truth pose error (simulation luxury)
    err_rot_deg: float
    triggered: bool = False


@dataclass(frozen=True)
class RunSummary:
    scenario: str
    n_seeds: int
    n_frames: int
    inlier_mean: float        # percent, mean of per-seed means
    inlier_std: float         # percent, std of per-seed means
    outlier_mean: float
    outlier_std: float
    l_tot_mean: float         # milliseconds
    l_tot_std: float
    align_accept_rate: float
    realign_count: int


@dataclass(frozen=True)
class RunReport:
    scenario: str
    rows: tuple[EvalRow, ...]
    aligns: tuple[AlignRow, ...]
    summary: RunSummary
    config: dict


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return f"{x:.9g}"
    return str(x)


def _mean_std(values) -> tuple[float, float]:
    vals = list(values)
    if not vals:
        return math.nan, math.nan
    m = sum(vals) / len(vals)
    if len(vals) < 2:
        return m, 0.0
    var = sum((v - m) ** 2 for v in vals) / (len(vals) - 1)
    return m, math.sqrt(var)


def summarize(scenario: str, rows, aligns, config: dict) -> RunReport:
    rows = tuple(rows)
    aligns = tuple(aligns)
    per_seed_inlier = {}
    per_seed_ltot = {}
    for r in rows:
        per_seed_inlier.setdefault(r.seed, []).append(r.r_inlier)
        per_seed_ltot.setdefault(r.seed, []).append(r.l_tot)
    seed_means = [sum(v) / len(v) for v in per_seed_inlier.values()]
    inl_m, inl_s = _mean_std([100.0 * m for m in seed_means])
    lt_means = [sum(v) / len(v) for v in per_seed_ltot.values()]
    lt_m, lt_s = _mean_std(lt_means)
    attempts = [a for a in aligns if a.kind in ("initial", "realign")]
    accept = (sum(1 for a in attempts if a.accepted) / len(attempts)) if attempts else math.nan
    summary = RunSummary(
        scenario=scenario,
        n_seeds=len({r.seed for r in rows}) if rows else 0,
        n_frames=len(rows),
        inlier_mean=inl_m, inlier_std=inl_s,
        outlier_mean=100.0 - inl_m if not math.isnan(inl_m) else math.nan,
        outlier_std=inl_s,
        l_tot_mean=lt_m, l_tot_std=lt_s,
        align_accept_rate=accept,
        realign_count=sum(1 for a in aligns if a.kind == "realign"),
    )
    return RunReport(scenario, rows, aligns, summary, config)


EVAL_COLUMNS = ("seed", "frame", "stamp", "r_inlier", "r_outlier", "n_points",
                "l_slam", "l_comm", "l_viz", "l_tot")
ALIGN_COLUMNS = ("seed", "stamp", "kind", "epsilon", "eta", "delta_step",
                 "delta_degen", "iterations", "accepted", "reseed_count",
                 "err_trans", "err_rot_deg", "triggered")


def rows_csv(report: RunReport) -> str:
    buf = io.StringIO()
    buf.write(",".join(EVAL_COLUMNS) + "\n")
    for r in report.rows:
        buf.write(",".join(_fmt(getattr(r, c)) for c in EVAL_COLUMNS) + "\n")
    return buf.getvalue()


def aligns_csv(report: RunReport) -> str:
    buf = io.StringIO()
    buf.write(",".join(ALIGN_COLUMNS) + "\n")
    for a in report.aligns:
        buf.write(",".join(_fmt(getattr(a, c)) for c in ALIGN_COLUMNS) + "\n")
    return buf.getvalue()


def summary_json(report: RunReport) -> str:
    data = {
        "scenario": report.summary.scenario,
        "n_seeds": report.summary.n_seeds,
        "n_frames": report.summary.n_frames,
        "inlier_pct_mean": report.summary.inlier_mean,
        "inlier_pct_std": report.summary.inlier_std,
        "outlier_pct_mean": report.summary.outlier_mean,
        "outlier_pct_std": report.summary.outlier_std,
        "l_tot_ms_mean": report.summary.l_tot_mean,
        "l_tot_ms_std": report.summary.l_tot_std,
        "align_accept_rate": report.summary.align_accept_rate,
        "realign_count": report.summary.realign_count,
        "config": report.config,
    }
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def summary_table(reports) -> str:
    """Human-readable table, one row per scenario report."""
    header = f"{'Scenario':<16} {'Inlier [%]':>12} {'Outlier [%]':>12} {'L_tot [ms]':>14}"
    lines = [header, "-" * len(header)]
    for rep in reports:
        s = rep.summary
        lines.append(
            f"{s.scenario:<16} {s.inlier_mean:6.1f} ± {s.inlier_std:4.1f}"
            f" {s.outlier_mean:6.1f} ± {s.outlier_std:4.1f}"
            f" {s.l_tot_mean:7.1f} ± {s.l_tot_std:5.1f}"
        )
    return "\n".join(lines) + "\n"


def write_report(report: RunReport, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "frames_csv": out / "frames.csv",
        "aligns_csv": out / "alignments.csv",
        "summary_json": out / "summary.json",
        "table_txt": out / "table.txt",
    }
    paths["frames_csv"].write_text(rows_csv(report))
    paths["aligns_csv"].write_text(aligns_csv(report))
    paths["summary_json"].write_text(summary_json(report))
    paths["table_txt"].write_text(summary_table([report]))
    return {k: str(v) for k, v in paths.items()}
