"""Command-line entry point: single experiments and p-sweeps.

Exit codes: 0 ok, 2 configuration error, 3 simulation error, 4 a verification
check failed.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import export
from .asymptotics import (
    CheckResult,
    RegimeVerdict,
    VerificationReport,
    check_moment_bound,
    classify_regime,
    ensemble_log_slope,
    estimate_time_average,
    martingale_decay,
    terminal_states,
    verify_regime,
)
from .config import ConfigError, ExperimentConfig, load_config
from .engine import InvalidConfig, SimulationError, run_ensemble
from .intervals import IntervalError
from .model import SPECIES, CrispModel, realize_model

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIMULATION = 3
EXIT_VERIFICATION = 4


@dataclass
class ExperimentResult:
    exit_code: int
    model: CrispModel | None = None
    verdict: RegimeVerdict | None = None
    report: VerificationReport | None = None
    artifacts: dict = field(default_factory=dict)
    message: str = ""


def _summary_rows(m: CrispModel, ensemble, cfg: ExperimentConfig) -> list:
    an = cfg.analysis
    terminal = terminal_states(ensemble)
    rows = []
    for i, s in enumerate(SPECIES):
        avg = estimate_time_average(ensemble, s, tail_fraction=an.tail_fraction)
        slope = ensemble_log_slope(ensemble, s, an.tail_fraction)
        rows.append([
            s, m.b[i], avg.value, avg.std_error, slope.value, slope.std_error,
            float(np.mean(terminal[:, i])),
            float(np.mean(terminal[:, i] < an.extinction_threshold)),
        ])
    return rows


def _moment_checks(ensemble, orders) -> list[CheckResult]:
    checks = []
    for k in orders:
        rep = check_moment_bound(ensemble, k)
        checks.append(CheckResult(
            f"moment_k{k:g}", (-math.inf, 2.0 * rep.window_median), rep.window_max, 0.0,
            rep.passed,
        ))
    return checks


def _martingale_checks(ensemble) -> list[CheckResult]:
    times = ensemble[0].times
    n = len(times) - 1
    grid = tuple(float(times[max(1, round(n * f))]) for f in (1 / 16, 1 / 4, 1.0))
    return [
        CheckResult.interval(f"martingale_decay_{d.name}", -0.75, -0.25, d.exponent, 0.0)
        for d in martingale_decay(ensemble, grid)
    ]


def run_experiment(cfg: ExperimentConfig, *,
                   verdict_hook: Callable[[RegimeVerdict], RegimeVerdict] | None = None,
                   ) -> ExperimentResult:
    """Realize, classify, simulate, verify and write artifacts for one value of p.

    ``verdict_hook`` may replace the predicted verdict before verification;
    it exists so the failure path can be exercised deliberately.
    """
    if cfg.p is None:
        return ExperimentResult(EXIT_CONFIG, message="run_experiment needs a single p")
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        return ExperimentResult(EXIT_CONFIG, message=f"output directory {out}: {exc}")

    m = realize_model(cfg.model, cfg.p)
    verdict = classify_regime(m.b, m)
    if verdict_hook is not None:
        verdict = verdict_hook(verdict)
    result = ExperimentResult(EXIT_OK, m, verdict)

    try:
        ensemble = run_ensemble(m, cfg.init, cfg.sim)
    except SimulationError as exc:
        result.exit_code = EXIT_SIMULATION
        result.message = str(exc)
        return result

    if cfg.write_paths:
        for traj in ensemble:
            path_csv, jump_csv = export.write_trajectory(traj, cfg.sim, out / "paths")
            result.artifacts.setdefault("paths", []).append(path_csv)
            result.artifacts.setdefault("jumps", []).append(jump_csv)

    rows = _summary_rows(m, ensemble, cfg)
    result.artifacts["summary"] = export.write_text(
        out / "summary.csv", export.summary_csv(rows, cfg.sim, cfg.p)
    )

    report = VerificationReport(verdict.kind)
    if cfg.verify:
        an = cfg.analysis
        if "regime" in cfg.checks:
            report.checks += verify_regime(
                m, verdict, ensemble, tail_fraction=an.tail_fraction,
                extinction_threshold=an.extinction_threshold,
                min_extinct_fraction=an.min_extinct_fraction,
            ).checks
        if "moments" in cfg.checks:
            report.checks += _moment_checks(ensemble, an.moment_orders)
        if "martingale" in cfg.checks:
            report.checks += _martingale_checks(ensemble)
    result.report = report

    header = {
        "p": cfg.p,
        "b1": m.b.b1, "b2": m.b.b2, "b3": m.b.b3,
        "seed": cfg.sim.seed, "dt": cfg.sim.dt, "horizon": cfg.sim.horizon,
        "n_paths": cfg.sim.n_paths, "version": export.__version__,
    }
    result.artifacts["report"] = export.write_text(
        out / "report.txt", export.report_text(report, header)
    )
    result.artifacts["report_csv"] = export.write_text(
        out / "report.csv", export.report_csv(report.checks)
    )
    if not report.passed:
        result.exit_code = EXIT_VERIFICATION
        result.message = "failed checks: " + ", ".join(c.name for c in report.failures)
    return result


def _monotonicity(values) -> str:
    d = np.diff(np.asarray(values, dtype=float))
    if np.all(d == 0):
        return "constant"
    if np.all(d >= 0):
        return "nondecreasing"
    if np.all(d <= 0):
        return "nonincreasing"
    return "non-monotone"


def expected_b_monotonicity(cfg: ExperimentConfig) -> dict:
    """Direction each b_i must move in p, where the intervals force one.

    Realized values never decrease in p, so a prey ``b_i = r_i - sigma_i**2 / 2
    + const`` rises when ``sigma_i`` is a point and falls when ``r_i`` is; the
    predator's ``-r3 - sigma3**2 / 2 + const`` never rises.
    """
    m = cfg.model
    expected = {}
    for i in (0, 1):
        r_fixed = m.r_hat[i].inner.is_degenerate
        s_fixed = m.sigma_hat[i].is_degenerate
        if r_fixed and s_fixed:
            expected[f"b{i + 1}"] = "constant"
        elif s_fixed:
            expected[f"b{i + 1}"] = "nondecreasing"
        elif r_fixed:
            expected[f"b{i + 1}"] = "nonincreasing"
        else:
            expected[f"b{i + 1}"] = None
    fixed3 = m.r_hat[2].inner.is_degenerate and m.sigma_hat[2].is_degenerate
    expected["b3"] = "constant" if fixed3 else "nonincreasing"
    return expected


def _consistent(observed: str, expected: str | None) -> bool:
    if expected is None or observed == expected:
        return True
    # a forced direction may still be flat on a given grid
    return observed == "constant" and expected != "constant"


@dataclass
class SweepResult:
    exit_code: int
    rows: list
    monotonicity: dict
    expected_monotonicity: dict
    experiments: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)

    @property
    def monotonicity_consistent(self) -> bool:
        return all(_consistent(self.monotonicity[k], self.expected_monotonicity[k])
                   for k in self.monotonicity)


def _bound(verdict, s, which):
    b = verdict.predicted_bounds.get(s)
    return None if b is None else b[which]


def sweep_p(cfg: ExperimentConfig, *, verdict_hook=None) -> SweepResult:
    """Classify the model on a grid of p, simulating and verifying where requested."""
    sweep = cfg.p_sweep
    if sweep is None:
        raise ValueError("sweep_p needs a config with p_sweep")
    out = Path(cfg.output_dir)
    rows, experiments = [], {}
    verify_at = set(sweep.verify_indices())
    exit_code = EXIT_OK
    for idx, p in enumerate(sweep.grid()):
        p = float(p)
        m = realize_model(cfg.model, p)
        verdict = classify_regime(m.b, m)
        rows.append([
            p, m.b.b1, m.b.b2, m.b.b3, verdict.kind.value,
            *(_bound(verdict, s, w) for s in SPECIES for w in (0, 1)),
            *(verdict.predicted_rates.get(s) for s in SPECIES),
        ])
        if idx in verify_at:
            sub = cfg.replace(p=p, p_sweep=None, output_dir=out / f"p_{idx:03d}")
            res = run_experiment(sub, verdict_hook=verdict_hook)
            experiments[idx] = res
            exit_code = max(exit_code, res.exit_code)

    observed = {f"b{i + 1}": _monotonicity([r[1 + i] for r in rows]) for i in range(3)}
    result = SweepResult(exit_code, rows, observed, expected_b_monotonicity(cfg), experiments)
    result.artifacts["sweep"] = export.write_text(out / "sweep.csv", export.sweep_csv(rows, cfg.sim))
    lines = [f"points: {len(rows)}", f"verified: {sorted(experiments)}"]
    for k, v in observed.items():
        lines.append(f"{k}_monotonicity: {v} (forced: {result.expected_monotonicity[k] or 'none'})")
    lines.append(f"monotonicity_consistent: {export.fmt(result.monotonicity_consistent)}")
    result.artifacts["sweep_summary"] = export.write_text(
        out / "sweep_summary.txt", "\n".join(lines) + "\n"
    )
    return result


# ---------------------------------------------------------------------------
# argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(
        prog="holling-jumps",
        description="Simulate the imprecise one-predator two-prey Holling II model "
                    "with jumps and check its long-run regime.",
    )
    ap.add_argument("--config", required=True, type=Path, help="YAML experiment config")
    ap.add_argument("--seed", type=int, help="override simulation.seed")
    ap.add_argument("--paths", type=int, help="override simulation.n_paths")
    ap.add_argument("--horizon", type=float, help="override simulation.horizon")
    ap.add_argument("--dt", type=float, help="override simulation.dt")
    ap.add_argument("--workers", type=int, help="override simulation.workers")
    ap.add_argument("--p", type=float, help="run at this p (replaces any p_sweep)")
    ap.add_argument("--out", type=Path, help="output directory")
    ap.add_argument("--verify", action=argparse.BooleanOptionalAction, default=None,
                    help="run verification checks (default: config value)")
    ap.add_argument("--sweep", action="store_true", help="run the config's p_sweep")
    return ap


def apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    sim_changes = {k: v for k, v in (
        ("seed", args.seed), ("n_paths", args.paths), ("horizon", args.horizon),
        ("dt", args.dt), ("workers", args.workers),
    ) if v is not None}
    changes = {}
    if sim_changes:
        changes["sim"] = cfg.sim.replace(**sim_changes)
    if args.out is not None:
        changes["output_dir"] = args.out
    if args.verify is not None:
        changes["verify"] = args.verify
    if args.p is not None:
        if args.sweep:
            raise ConfigError("--p and --sweep are mutually exclusive")
        if not 0 <= args.p <= 1:
            raise ConfigError(f"--p must lie in [0, 1], got {args.p}")
        changes["p"], changes["p_sweep"] = args.p, None
    if args.sweep and cfg.p_sweep is None:
        raise ConfigError("--sweep given but the config has no p_sweep section")
    return cfg.replace(**changes)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = apply_overrides(load_config(args.config), args)
    except (ConfigError, InvalidConfig, IntervalError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if cfg.p_sweep is not None:
        res = sweep_p(cfg)
        for row in res.rows:
            print(f"p={row[0]:.4f} b=({row[1]:.6g}, {row[2]:.6g}, {row[3]:.6g}) {row[4]}")
        print(f"sweep written to {res.artifacts['sweep']}")
        for idx, sub in sorted(res.experiments.items()):
            if sub.exit_code:
                print(f"p index {idx}: exit {sub.exit_code} {sub.message}", file=sys.stderr)
        return res.exit_code

    res = run_experiment(cfg)
    if res.model is not None:
        b = res.model.b
        print(f"p={cfg.p:g} b=({b.b1:.6g}, {b.b2:.6g}, {b.b3:.6g}) regime={res.verdict.kind.value}")
    if res.report is not None and res.report.checks:
        for c in res.report.checks:
            mark = "PASS" if c.passed else "FAIL"
            print(f"  [{mark}] {c.name}: observed {c.observed:.6g}, "
                  f"predicted {c.predicted_text()}, tol {c.tolerance:.3g}")
    for name, path in res.artifacts.items():
        if not isinstance(path, list):
            print(f"{name}: {path}")
    if res.message:
        print(res.message, file=sys.stderr)
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
