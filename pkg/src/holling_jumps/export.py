"""CSV and text writers. All CSVs: header row, ``.`` decimals, LF line endings.

Floats are written with ``repr`` so a file round-trips bit-exactly.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import CheckResult, VerificationReport
from .engine import SimulationConfig, Trajectory
from .model import SPECIES

TRAJECTORY_COLUMNS = ["time", "x1", "x2", "y", "u1", "u2", "v"]
JUMP_COLUMNS = ["time", "species", "mark", "size"]
SUMMARY_COLUMNS = [
    "species", "b", "time_average", "time_average_se", "log_slope", "log_slope_se",
    "terminal_mean", "extinct_fraction",
]
REPORT_COLUMNS = ["check", "predicted", "observed", "tolerance", "pass"]
SWEEP_COLUMNS = [
    "p", "b1", "b2", "b3", "regime",
    "x1_lo", "x1_hi", "x2_lo", "x2_hi", "y_lo", "y_hi",
    "rate_x1", "rate_x2", "rate_y",
]


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        return repr(x)
    return str(x)


def run_header(cfg: SimulationConfig, **extra) -> str:
    parts = [f"seed={cfg.seed}", f"dt={fmt(cfg.dt)}", f"horizon={fmt(cfg.horizon)}",
             f"record_stride={cfg.record_stride}"]
    parts += [f"{k}={fmt(v)}" for k, v in extra.items()]
    parts.append(f"version={__version__}")
    return "# holling_jumps " + " ".join(parts)


def _csv_text(rows, columns, comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(comment.rstrip("\n") + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _write(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    return path


def trajectory_csv(traj: Trajectory, cfg: SimulationConfig) -> str:
    u = traj.log_states
    x = np.exp(u)
    rows = (
        [traj.times[k], *x[k], *u[k]] for k in range(len(traj.times))
    )
    return _csv_text(rows, TRAJECTORY_COLUMNS, run_header(cfg, path=traj.path_index))


def jumps_csv(traj: Trajectory, cfg: SimulationConfig) -> str:
    """One row per (jump, species); ``size`` is the relative jump ``c``."""
    rows = []
    c = np.expm1(traj.jump_log_sizes)
    for j, (t, mark) in enumerate(zip(traj.jump_times, traj.jump_marks)):
        for i in range(c.shape[1]):
            rows.append([t, SPECIES[i] if c.shape[1] == 3 else i, mark, c[j, i]])
    return _csv_text(rows, JUMP_COLUMNS, run_header(cfg, path=traj.path_index))


def write_trajectory(traj: Trajectory, cfg: SimulationConfig, directory) -> tuple[Path, Path]:
    directory = Path(directory)
    stem = f"path_{traj.path_index:05d}"
    return (
        _write(directory / f"{stem}.csv", trajectory_csv(traj, cfg)),
        _write(directory / f"{stem}_jumps.csv", jumps_csv(traj, cfg)),
    )


def summary_csv(rows, cfg: SimulationConfig, p) -> str:
    return _csv_text(rows, SUMMARY_COLUMNS, run_header(cfg, p=p))


def report_csv(checks: list[CheckResult]) -> str:
    rows = ([c.name, c.predicted_text(), c.observed, c.tolerance, c.passed] for c in checks)
    return _csv_text(rows, REPORT_COLUMNS)


def report_text(report: VerificationReport, header: dict) -> str:
    """Key-value records: a header block, then one blank-line separated block per check."""
    lines = [f"{k}: {fmt(v)}" for k, v in header.items()]
    lines.append(f"regime: {report.regime.value}")
    lines.append(f"status: {'PASS' if report.passed else 'FAIL'}")
    lines.append(f"checks: {len(report.checks)}")
    for c in report.checks:
        lines += [
            "",
            f"check: {c.name}",
            f"predicted: {c.predicted_text()}",
            f"observed: {fmt(c.observed)}",
            f"tolerance: {fmt(c.tolerance)}",
            f"pass: {fmt(c.passed)}",
        ]
    return "\n".join(lines) + "\n"


def parse_report_text(text: str) -> tuple[dict, list[dict]]:
    """Inverse of :func:`report_text`, for tooling and tests."""
    blocks = text.strip("\n").split("\n\n")
    header = dict(line.split(": ", 1) for line in blocks[0].splitlines())
    checks = [dict(line.split(": ", 1) for line in b.splitlines()) for b in blocks[1:]]
    return header, checks


def sweep_csv(rows, cfg: SimulationConfig) -> str:
    return _csv_text(rows, SWEEP_COLUMNS, run_header(cfg))


write_text = _write
