"""Long-run predictions for the model and their Monte Carlo checks.

Predictions come from the signs of the threshold coefficients ``b`` and the
realized interactions ``a``. Estimates come from recorded trajectories:
limits, limsups and liminfs are all approximated by statistics over a
trailing window ``[T (1 - tail_fraction), T]``.

Tolerances are ``n_sigma`` Monte Carlo standard errors plus an absolute
floor, so zero-variance ensembles do not demand exact equality.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .engine import Trajectory
from .model import SPECIES, BCoefficients, CrispModel

DEFAULT_TAIL_FRACTION = 0.5
DEFAULT_EXTINCTION_THRESHOLD = 1e-4
DEFAULT_MIN_EXTINCT_FRACTION = 0.95
N_SIGMA = 3.0
ABS_FLOOR = 1e-3


class EmptyWindow(ValueError):
    pass


class HypothesisViolated(ValueError):
    pass


class RegimeKind(str, enum.Enum):
    ALL_EXTINCT = "AllExtinct"
    PREY_ONE_PERSISTS = "PreyOnePersists"
    ALL_PERSISTENT = "AllPersistent"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class RegimeVerdict:
    """Predicted long-run behaviour.

    ``predicted_bounds`` maps a species name to an interval ``(lo, hi)`` for
    its time average. ``predicted_rates`` maps a species name to an upper
    bound on ``lim sup ln x(t) / t``; a rate of 0 for a persistent species
    means the log-slope should vanish.
    """

    kind: RegimeKind
    predicted_bounds: dict = field(default_factory=dict)
    predicted_rates: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TimeAverageEstimate:
    species: str
    window: tuple
    value: float
    std_error: float
    n_paths: int = 1


@dataclass(frozen=True)
class SlopeEstimate:
    species: str
    window: tuple
    value: float
    std_error: float
    n_paths: int = 1


def _species_index(traj: Trajectory, species) -> tuple[int, str]:
    if isinstance(species, str):
        if traj.n_species == 1:
            return 0, species
        return SPECIES.index(species), species
    i = int(species)
    name = SPECIES[i] if traj.n_species == 3 else f"phi{i}" if traj.n_species == 1 else str(i)
    return i, name


def _as_list(traj_or_ensemble) -> list[Trajectory]:
    if isinstance(traj_or_ensemble, Trajectory):
        return [traj_or_ensemble]
    return list(traj_or_ensemble)


def tail_window(horizon: float, tail_fraction: float = DEFAULT_TAIL_FRACTION) -> tuple:
    if not 0 < tail_fraction <= 1:
        raise ValueError(f"tail_fraction must lie in (0, 1], got {tail_fraction}")
    return (horizon * (1 - tail_fraction), horizon)


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return float(values.mean()), math.nan
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def path_time_average(traj: Trajectory, species=0, window=None) -> float:
    """Left-endpoint Riemann average of one species over ``window``."""
    i, _ = _species_index(traj, species)
    t = traj.times
    t0, t1 = window if window is not None else (0.0, traj.horizon)
    if not t0 < t1:
        raise EmptyWindow(f"window {window} is empty")
    eps = 1e-9 * max(abs(t1), 1.0)
    left, right = t[:-1], t[1:]
    sel = (left >= t0 - eps) & (right <= t1 + eps)
    if not sel.any():
        raise EmptyWindow(f"window {window} contains no recorded grid interval")
    widths = (right - left)[sel]
    values = np.exp(traj.log_states[:-1, i][sel])
    return float(np.sum(values * widths) / np.sum(widths))


def estimate_time_average(traj_or_ensemble, species=0, window=None,
                          tail_fraction: float | None = None) -> TimeAverageEstimate:
    """Time average of one species, averaged across paths.

    With neither ``window`` nor ``tail_fraction`` the whole horizon is used.
    """
    paths = _as_list(traj_or_ensemble)
    if window is None:
        horizon = paths[0].horizon
        window = tail_window(horizon, tail_fraction) if tail_fraction else (0.0, horizon)
    values = np.array([path_time_average(p, species, window) for p in paths])
    mean, se = _mean_se(values)
    _, name = _species_index(paths[0], species)
    return TimeAverageEstimate(name, tuple(window), mean, se, len(paths))


def estimate_log_slope(traj: Trajectory, species=0,
                       tail_fraction: float = DEFAULT_TAIL_FRACTION) -> float:
    """Least-squares slope of ``ln x(t)`` against ``t`` over the trailing window."""
    i, _ = _species_index(traj, species)
    t0, _ = tail_window(traj.horizon, tail_fraction)
    sel = traj.times >= t0 - 1e-9 * traj.horizon
    t = traj.times[sel]
    u = traj.log_states[sel, i]
    if t.size < 2:
        raise EmptyWindow("need at least two recorded points for a slope")
    tc = t - t.mean()
    return float(np.dot(tc, u - u.mean()) / np.dot(tc, tc))


def ensemble_log_slope(ensemble, species=0,
                       tail_fraction: float = DEFAULT_TAIL_FRACTION) -> SlopeEstimate:
    paths = _as_list(ensemble)
    values = np.array([estimate_log_slope(p, species, tail_fraction) for p in paths])
    mean, se = _mean_se(values)
    _, name = _species_index(paths[0], species)
    return SlopeEstimate(name, tail_window(paths[0].horizon, tail_fraction), mean, se, len(paths))


def terminal_states(ensemble) -> np.ndarray:
    """``(n_paths, n_species)`` array of states at the horizon."""
    return np.exp(np.array([p.log_states[-1] for p in _as_list(ensemble)]))


# ---------------------------------------------------------------------------
# theory


def logistic_time_average(rate: float, self_interaction: float, sigma: float,
                          jumps: Sequence[tuple[float, float]] = ()) -> float:
    """Long-run time average of a scalar logistic jump-diffusion.

    ``jumps`` is ``[(weight, c), ...]``. The average is ``b / self_interaction``
    with ``b = rate - sigma**2 / 2 + sum w ln(1 + c)``; for ``b < 0`` the process
    goes extinct instead and :class:`HypothesisViolated` is raised.
    """
    if not self_interaction > 0:
        raise ValueError(f"self_interaction must be > 0, got {self_interaction}")
    b = rate - sigma**2 / 2 + math.fsum(w * math.log1p(c) for w, c in jumps)
    if b < 0:
        raise HypothesisViolated(f"b = {b:.6g} < 0: the process goes extinct")
    return b / self_interaction


def persistence_thresholds(b: BCoefficients, m: CrispModel) -> dict:
    """The quantities the all-persistent regime compares ``b1`` and ``b2`` against."""
    a = m.a.tolist()
    y_upper = (b.b3 + a[2][0] + a[2][1]) / a[2][2]
    return {
        "y_upper": y_upper,
        "b1_threshold": a[0][1] * b.b2 / a[1][1] + a[0][2] * y_upper,
        "b2_threshold": a[1][0] * b.b1 / a[0][0] + a[1][2] * y_upper,
    }


def classify_regime(b: BCoefficients, m: CrispModel) -> RegimeVerdict:
    b1, b2, b3 = (float(v) for v in b)
    a = m.a.tolist()
    if b1 < 0 and b2 < 0 and b3 < 0:
        return RegimeVerdict(
            RegimeKind.ALL_EXTINCT,
            {},
            {"x1": b1, "x2": b2, "y": b3},
        )
    if b1 > 0 and b2 < 0 and b3 + a[2][0] < 0:
        return RegimeVerdict(
            RegimeKind.PREY_ONE_PERSISTS,
            {"x1": (b1 / a[0][0], b1 / a[0][0])},
            {"x1": 0.0, "x2": b2, "y": b3 + a[2][0]},
        )
    if b3 > 0:
        th = persistence_thresholds(b, m)
        y_bounds = (b3 / a[2][2], th["y_upper"])
        if b1 > max(0.0, th["b1_threshold"]) and b2 > max(0.0, th["b2_threshold"]):
            x1_bounds = ((b1 - th["b1_threshold"]) / a[0][0], b1 / a[0][0])
            x2_bounds = ((b2 - th["b2_threshold"]) / a[1][1], b2 / a[1][1])
            return RegimeVerdict(
                RegimeKind.ALL_PERSISTENT,
                {"x1": x1_bounds, "x2": x2_bounds, "y": y_bounds},
                {"x1": 0.0, "x2": 0.0, "y": 0.0},
            )
        # the predator bounds hold whenever b3 > 0, even without a full verdict
        return RegimeVerdict(RegimeKind.INDETERMINATE, {"y": y_bounds}, {})
    return RegimeVerdict(RegimeKind.INDETERMINATE)


# ---------------------------------------------------------------------------
# verification


@dataclass(frozen=True)
class CheckResult:
    """One theory-vs-simulation comparison.

    ``predicted`` is an interval ``(lo, hi)``; use ``-inf``/``inf`` for one-sided
    checks. The check passes when ``observed`` lies in the interval widened by
    ``tolerance``.
    """

    name: str
    predicted: tuple
    observed: float
    tolerance: float
    passed: bool

    @classmethod
    def interval(cls, name, lo, hi, observed, tolerance) -> CheckResult:
        ok = bool(lo - tolerance <= observed <= hi + tolerance)
        return cls(name, (float(lo), float(hi)), float(observed), float(tolerance), ok)

    def predicted_text(self) -> str:
        lo, hi = self.predicted
        if lo == hi:
            return f"{lo:.10g}"
        if lo == -math.inf:
            return f"<= {hi:.10g}"
        if hi == math.inf:
            return f">= {lo:.10g}"
        return f"[{lo:.10g}, {hi:.10g}]"


@dataclass
class VerificationReport:
    regime: RegimeKind
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def by_name(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _tol(se: float, n_sigma: float, floor: float) -> float:
    return (0.0 if math.isnan(se) else n_sigma * se) + floor


def verify_regime(m: CrispModel, verdict: RegimeVerdict, ensemble, *,
                  tail_fraction: float = DEFAULT_TAIL_FRACTION,
                  extinction_threshold: float = DEFAULT_EXTINCTION_THRESHOLD,
                  min_extinct_fraction: float = DEFAULT_MIN_EXTINCT_FRACTION,
                  n_sigma: float = N_SIGMA, floor: float = ABS_FLOOR) -> VerificationReport:
    """Compare a verdict against an ensemble simulated from ``m``.

    Checks produced, by species ``s``:

    * ``extinct_s``: fraction of paths ending below ``extinction_threshold``;
    * ``log_slope_s``: tail log-slope against the predicted rate (an upper
      bound for extinct species, zero for persistent ones);
    * ``time_average_s``: tail time average against the predicted interval;
    * ``log_slope_nonpositive_s``: ``lim sup ln x / t <= 0``, for every regime.
    """
    paths = _as_list(ensemble)
    report = VerificationReport(verdict.kind)
    terminal = terminal_states(paths)
    slopes = {s: ensemble_log_slope(paths, s, tail_fraction) for s in SPECIES}

    persistent = set(verdict.predicted_bounds) & set(verdict.predicted_rates)
    extinct = [s for s in verdict.predicted_rates if s not in persistent]

    for s in extinct:
        frac = float(np.mean(terminal[:, SPECIES.index(s)] < extinction_threshold))
        report.checks.append(
            CheckResult.interval(f"extinct_{s}", min_extinct_fraction, 1.0, frac, 0.0)
        )
    for s, rate in verdict.predicted_rates.items():
        est = slopes[s]
        tol = _tol(est.std_error, n_sigma, floor)
        if s in persistent:
            report.checks.append(CheckResult.interval(f"log_slope_{s}", 0.0, 0.0, est.value, tol))
        else:
            report.checks.append(
                CheckResult.interval(f"log_slope_{s}", -math.inf, rate, est.value, tol)
            )
    for s, (lo, hi) in verdict.predicted_bounds.items():
        est = estimate_time_average(paths, s, tail_fraction=tail_fraction)
        report.checks.append(
            CheckResult.interval(f"time_average_{s}", lo, hi, est.value,
                                 _tol(est.std_error, n_sigma, floor))
        )
    for s in SPECIES:
        est = slopes[s]
        report.checks.append(
            CheckResult.interval(f"log_slope_nonpositive_{s}", -math.inf, 0.0, est.value,
                                 _tol(est.std_error, n_sigma, floor))
        )
    return report


@dataclass(frozen=True)
class MomentReport:
    """Moment curve summary over the trailing window.

    ``plateau`` is the boundedness criterion (running max within twice the
    median); ``decaying`` covers vanishing moments, where the median can be
    orders of magnitude below the window start.
    """

    k: float
    times: np.ndarray
    moments: np.ndarray
    window_max: float
    window_median: float
    trend_slope: float
    window_first: float
    window_last: float

    @property
    def ratio(self) -> float:
        return self.window_max / self.window_median if self.window_median > 0 else math.inf

    @property
    def plateau(self) -> bool:
        return self.window_max <= 2.0 * self.window_median

    @property
    def decaying(self) -> bool:
        return self.trend_slope <= 0 and self.window_last <= self.window_first

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.window_max)) and (self.plateau or self.decaying)


def moment_curve(ensemble, k: float) -> tuple[np.ndarray, np.ndarray]:
    """Ensemble mean of ``x1**k + x2**k + y**k`` at each recorded time."""
    paths = _as_list(ensemble)
    stacked = np.stack([np.exp(k * p.log_states).sum(axis=1) for p in paths])
    return paths[0].times, stacked.mean(axis=0)


def check_moment_bound(ensemble, k: float, window_fraction: float = 0.5) -> MomentReport:
    """Empirical boundedness of the k-th moment sum over the second part of the run.

    Passes when the running maximum over ``[T (1 - window_fraction), T]`` is at
    most twice the median there, or when the curve is decaying over that window.
    """
    if not k > 0:
        raise ValueError(f"k must be > 0, got {k}")
    times, moments = moment_curve(ensemble, k)
    t0, _ = tail_window(times[-1], window_fraction)
    sel = times >= t0 - 1e-9 * times[-1]
    tw, mw = times[sel], moments[sel]
    tc = tw - tw.mean()
    trend = float(np.dot(tc, mw - mw.mean()) / np.dot(tc, tc)) if tw.size > 1 else 0.0
    return MomentReport(k, times, moments, float(mw.max()), float(np.median(mw)), trend,
                        float(mw[0]), float(mw[-1]))


@dataclass(frozen=True)
class MartingaleDecay:
    name: str
    times: tuple
    mean_abs_ratio: tuple
    exponent: float

    @property
    def passed(self) -> bool:
        return -0.75 <= self.exponent <= -0.25


def _value_at(traj: Trajectory, track: np.ndarray, t: float) -> np.ndarray:
    idx = int(np.argmin(np.abs(traj.times - t)))
    if not math.isclose(traj.times[idx], t, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"time {t} is not on the recorded grid")
    return track[idx]


def martingale_decay(ensemble, times: Sequence[float] = (100.0, 400.0, 1600.0)) -> list:
    """Fitted power-law exponent of ``E|M(T)/T|`` in ``T`` for every martingale track.

    Tracks that vanish identically (zero noise, or no jumps for a species) are
    skipped.
    """
    paths = _as_list(ensemble)
    results = []
    for label, attr in (("M", "brownian_martingale"), ("M_jump", "jump_martingale")):
        for i in range(paths[0].n_species):
            vals = np.array([
                [abs(_value_at(p, getattr(p, attr)[:, i], t)) / t for t in times]
                for p in paths
            ])
            means = vals.mean(axis=0)
            if np.any(means == 0):
                continue
            exponent = float(np.polyfit(np.log(times), np.log(means), 1)[0])
            name = f"{label}_{SPECIES[i] if paths[0].n_species == 3 else i}"
            results.append(MartingaleDecay(name, tuple(times), tuple(means), exponent))
    return results
