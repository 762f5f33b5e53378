"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (also repeated in the
pytest terminal summary). Ensembles are simulated once per module and reduced
to summaries straight away.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from holling_jumps.asymptotics import (
    RegimeKind,
    check_moment_bound,
    classify_regime,
    ensemble_log_slope,
    estimate_time_average,
    logistic_time_average,
    martingale_decay,
    terminal_states,
)
from holling_jumps.cli import EXIT_OK, run_experiment
from holling_jumps.config import load_config
from holling_jumps.engine import (
    ComparisonSpec,
    NonFiniteState,
    SimulationConfig,
    run_comparison_ensemble,
    run_ensemble,
    simulate_comparison,
    simulate_path,
)
from holling_jumps.intervals import Interval, add, div, mul, realize, scalar_mul, sub
from holling_jumps.model import SPECIES, realize_model

pytestmark = pytest.mark.slow

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
N_TRIALS = 100_000
EXTINCTION_THRESHOLD = 1e-4

# every ensemble simulated here reports into this record for criterion 7
STABILITY = {"ensembles": 0, "non_finite": 0, "min_state": math.inf}


def report(number, title, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {title}  ({detail})"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert passed, line


def ci(se):
    return 3 * se + 1e-3


def guarded(run, *args):
    try:
        ens = run(*args)
    except NonFiniteState:
        STABILITY["non_finite"] += 1
        raise
    STABILITY["ensembles"] += 1
    STABILITY["min_state"] = min(STABILITY["min_state"],
                                 min(float(np.exp(t.log_states.min())) for t in ens))
    return ens


def config_model(name):
    cfg = load_config(CONFIGS / f"{name}.yaml")
    m = realize_model(cfg.model, cfg.p)
    return cfg, m


def summarize(ens, tail_fraction=0.5):
    terminal = terminal_states(ens)
    return {
        "terminal": terminal,
        "average": {s: estimate_time_average(ens, s, tail_fraction=tail_fraction) for s in SPECIES},
        "slope": {s: ensemble_log_slope(ens, s, tail_fraction) for s in SPECIES},
    }


@pytest.fixture(scope="module")
def extinction():
    cfg, m = config_model("extinction")
    return m, summarize(guarded(run_ensemble, m, cfg.init, cfg.sim))


@pytest.fixture(scope="module")
def partial():
    cfg, m = config_model("partial_extinction")
    return m, summarize(guarded(run_ensemble, m, cfg.init, cfg.sim))


@pytest.fixture(scope="module")
def persistence():
    cfg, m = config_model("persistence")
    ens = guarded(run_ensemble, m, cfg.init, cfg.sim)
    moments = {k: check_moment_bound(ens, k) for k in (1, 2)}
    return m, summarize(ens), moments


# ---------------------------------------------------------------- 1


def test_criterion_01_interval_soundness():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    a = np.sort(rng.uniform(-100, 100, (N_TRIALS, 2)), axis=1)
    b = np.sort(rng.uniform(-100, 100, (N_TRIALS, 2)), axis=1)
    ta, tb = rng.uniform(0, 1, N_TRIALS), rng.uniform(0, 1, N_TRIALS)

    def inside(iv, t):
        return np.clip(iv[:, 0] + t * (iv[:, 1] - iv[:, 0]), iv[:, 0], iv[:, 1])

    x, y = inside(a, ta), inside(b, tb)
    alpha = rng.uniform(1e-3, 10, N_TRIALS)
    # divisors bounded away from zero on either side
    d = np.sort(rng.uniform(0.01, 100, (N_TRIALS, 2)), axis=1)
    d = np.where(rng.uniform(size=(N_TRIALS, 1)) < 0.5, -d[:, ::-1], d)
    yd = inside(d, tb)
    # endpoint-wise subtraction is valid when the subtrahend is no wider; its
    # members are differences of points at the same relative position
    s = np.stack([b[:, 0], b[:, 0] + (a[:, 1] - a[:, 0]) * rng.uniform(0, 1, N_TRIALS)], axis=1)
    ys = inside(s, ta)

    al, bl, dl, sl = a.tolist(), b.tolist(), d.tolist(), s.tolist()
    cases = {
        "add": (lambda k: add(Interval(*al[k]), Interval(*bl[k])), x + y),
        "sub": (lambda k: sub(Interval(*al[k]), Interval(*sl[k])), x - ys),
        "scalar_mul": (lambda k: scalar_mul(alpha[k], Interval(*al[k])), alpha * x),
        "mul": (lambda k: mul(Interval(*al[k]), Interval(*bl[k])), x * y),
        "div": (lambda k: div(Interval(*al[k]), Interval(*dl[k])), x / yd),
    }
    violations = {}
    for name, (op, values) in cases.items():
        vals = values.tolist()
        bad = 0
        for k in range(N_TRIALS):
            r = op(k)
            if not r.lo <= vals[k] <= r.hi:
                bad += 1
        violations[name] = bad

    lows = rng.uniform(1e-6, 1e6, 1000)
    highs = lows * rng.uniform(1, 1e3, 1000)
    endpoints_exact = all(
        realize(Interval(lo, hi), 0.0) == lo and realize(Interval(lo, hi), 1.0) == hi
        for lo, hi in zip(lows.tolist(), highs.tolist())
    )
    elapsed = time.perf_counter() - start
    passed = sum(violations.values()) == 0 and endpoints_exact and elapsed < 5.0
    report(1, "interval soundness", passed,
           f"violations {violations}, realize endpoints exact {endpoints_exact}, "
           f"{elapsed:.2f} s")


# ---------------------------------------------------------------- 2


def test_criterion_02_logistic_oracle():
    p = 0.5
    rate = realize(Interval(0.3, 0.5), p)
    spec = ComparisonSpec.logistic(rate, 0.2, 0.1, [(0.5, 0.1)])
    cfg = SimulationConfig(horizon=1000, dt=1e-3, seed=20240604, n_paths=200, record_stride=100)
    start = time.perf_counter()
    ens = guarded(run_comparison_ensemble, spec, 1.0, cfg)
    elapsed = time.perf_counter() - start
    avg = estimate_time_average(ens, 0, tail_fraction=0.5)
    slope = ensemble_log_slope(ens, 0)
    del ens
    expected = logistic_time_average(rate, 0.2, 0.1, [(0.5, 0.1)])
    err = abs(avg.value - expected)
    passed = (err <= 3 * avg.std_error and err <= 0.05 * expected
              and abs(slope.value) <= ci(slope.std_error) and elapsed < 120)
    report(2, "logistic time-average oracle", passed,
           f"<x> {avg.value:.5f} vs b/a {expected:.5f}, |diff| {err:.2e} vs 3 SE "
           f"{3 * avg.std_error:.2e}; slope {slope.value:.2e} +- {ci(slope.std_error):.2e}; "
           f"{elapsed:.0f} s")


# ---------------------------------------------------------------- 3


def test_criterion_03_total_extinction(extinction):
    m, s = extinction
    b = m.b
    in_range = all(-0.4 <= v <= -0.1 for v in b)
    all_small = np.all(s["terminal"] < EXTINCTION_THRESHOLD, axis=1)
    frac = float(all_small.mean())
    slopes_ok = all(s["slope"][sp].value <= bi + ci(s["slope"][sp].std_error)
                    for sp, bi in zip(SPECIES, b))
    verdict = classify_regime(b, m).kind
    passed = (in_range and verdict is RegimeKind.ALL_EXTINCT and frac >= 0.95 and slopes_ok)
    report(3, "total extinction", passed,
           f"b {tuple(round(v, 4) for v in b)}, extinct fraction {frac:.3f}, slopes "
           + ", ".join(f"{sp} {s['slope'][sp].value:.4f}" for sp in SPECIES))


# ---------------------------------------------------------------- 4


def test_criterion_04_partial_extinction(partial):
    m, s = partial
    b = m.b
    hypothesis = b.b1 > 0 and b.b2 < 0 and b.b3 + m.a[2, 0] < 0
    frac = float(np.all(s["terminal"][:, 1:] < EXTINCTION_THRESHOLD, axis=1).mean())
    avg = s["average"]["x1"]
    expected = b.b1 / m.a[0, 0]
    err = abs(avg.value - expected)
    passed = hypothesis and frac >= 0.95 and err <= 3 * avg.std_error
    report(4, "partial extinction", passed,
           f"x2,y extinct fraction {frac:.3f}; <x1> {avg.value:.5f} vs b1/a11 {expected:.5f}, "
           f"|diff| {err:.2e} vs 3 SE {3 * avg.std_error:.2e}")


# ---------------------------------------------------------------- 5


def test_criterion_05_persistence_bounds(persistence):
    m, s, _ = persistence
    verdict = classify_regime(m.b, m)
    details, ok = [], verdict.kind is RegimeKind.ALL_PERSISTENT
    for sp in SPECIES:
        lo, hi = verdict.predicted_bounds[sp]
        avg, slope = s["average"][sp], s["slope"][sp]
        w = 3 * avg.std_error
        ok &= lo - w <= avg.value <= hi + w and abs(slope.value) <= ci(slope.std_error)
        details.append(f"<{sp}> {avg.value:.4f} in [{lo:.4f}, {hi:.4f}], slope {slope.value:.1e}")
    report(5, "persistence bounds", ok, "; ".join(details))


# ---------------------------------------------------------------- 6


def test_criterion_06_pathwise_comparison():
    cfg, m = config_model("persistence")
    sim = cfg.sim.replace(horizon=200, n_paths=50, record_stride=10)
    init = cfg.init
    specs = {w: ComparisonSpec.from_model(m, w) for w in ("phi1", "phi2", "phi3", "phi4")}
    starts = {"phi1": init.x1, "phi2": init.x2, "phi3": init.y, "phi4": init.y}
    tol = 1e-9
    violations, points = 0, 0
    for k in range(sim.n_paths):
        try:
            x = simulate_path(m, init, sim, k).log_states
            phi = {w: simulate_comparison(specs[w], starts[w], sim, k).log_states[:, 0]
                   for w in specs}
        except NonFiniteState:
            STABILITY["non_finite"] += 1
            raise
        STABILITY["min_state"] = min(STABILITY["min_state"], float(np.exp(x.min())))
        # relative tolerance on states is an absolute one on logs
        violations += int(np.sum(x[:, 0] > phi["phi1"] + tol))
        violations += int(np.sum(x[:, 1] > phi["phi2"] + tol))
        violations += int(np.sum(phi["phi3"] > x[:, 2] + tol))
        violations += int(np.sum(x[:, 2] > phi["phi4"] + tol))
        points += x.shape[0]
    STABILITY["ensembles"] += 1
    report(6, "pathwise comparison", violations == 0,
           f"{violations} violations over {sim.n_paths} paths x {points // sim.n_paths} "
           f"grid points x 4 inequalities")


# ---------------------------------------------------------------- 8


def test_criterion_08_martingale_decay():
    cfg, m = config_model("persistence")
    sim = cfg.sim.replace(horizon=1600, record_stride=10_000, seed=20240605)
    ens = guarded(run_ensemble, m, cfg.init, sim)
    decays = martingale_decay(ens, (100.0, 400.0, 1600.0))
    del ens
    means_decrease = all(d.mean_abs_ratio[0] > d.mean_abs_ratio[1] > d.mean_abs_ratio[2]
                         for d in decays)
    passed = len(decays) == 6 and means_decrease and all(d.passed for d in decays)
    report(8, "martingale decay", passed,
           ", ".join(f"{d.name} {d.exponent:.3f}" for d in decays))


# ---------------------------------------------------------------- 9


def test_criterion_09_moment_plateau(persistence):
    _, _, moments = persistence
    passed = all(r.plateau for r in moments.values())
    report(9, "moment boundedness", passed,
           ", ".join(f"k={k}: max/median {r.ratio:.3f}" for k, r in moments.items()))


# ---------------------------------------------------------------- 10


def test_criterion_10_determinism(tmp_path):
    cfg = load_config(CONFIGS / "partial_extinction.yaml")
    outputs = []
    for label, workers in (("serial_a", 1), ("serial_b", 1), ("parallel", 4)):
        sub = cfg.replace(output_dir=tmp_path / label, sim=cfg.sim.replace(workers=workers))
        res = run_experiment(sub)
        assert res.exit_code == EXIT_OK, res.message
        outputs.append(res.artifacts["summary"].read_bytes())
    STABILITY["ensembles"] += 3
    passed = outputs[0] == outputs[1] == outputs[2]
    report(10, "determinism", passed,
           f"summary.csv {len(outputs[0])} bytes; serial twice and 4 workers identical: {passed}")


# ---------------------------------------------------------------- 7


def test_criterion_07_positivity(extinction, partial, persistence):
    # runs last in this module so it sees every ensemble simulated above
    finite = all(np.all(np.isfinite(s["terminal"])) for _, s, *_ in
                 (extinction, partial, persistence))
    passed = (STABILITY["non_finite"] == 0 and STABILITY["min_state"] > 0 and finite
              and STABILITY["ensembles"] >= 6)
    report(7, "positivity and stability", passed,
           f"{STABILITY['ensembles']} ensembles, {STABILITY['non_finite']} NonFiniteState, "
           f"min recorded state {STABILITY['min_state']:.3e}")
