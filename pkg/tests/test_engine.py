import math

import numpy as np
import pytest

from holling_jumps.engine import (
    ComparisonSpec,
    InvalidConfig,
    NonFiniteState,
    SimulationConfig,
    draw_jumps,
    run_comparison_ensemble,
    run_ensemble,
    simulate_comparison,
    simulate_path,
    stream,
)
from holling_jumps.model import CrispModel, JumpMeasure, StateVector

JUMPY = JumpMeasure.from_atoms([(0.5, (0.05, -0.1, 0.3)), (0.3, (-0.2, 0.1, -0.1))])


def persistent_model(jumps=JUMPY):
    return CrispModel(
        [0.6, 0.5, 0.05],
        [[0.4, 0.05, 0.05], [0.05, 0.4, 0.05], [0.1, 0.1, 0.5]],
        [0.1, 0.15, 0.1],
        jumps,
    )


def _identical(t1, t2):
    return (
        np.array_equal(t1.times, t2.times)
        and np.array_equal(t1.log_states, t2.log_states)
        and np.array_equal(t1.jump_times, t2.jump_times)
        and np.array_equal(t1.jump_marks, t2.jump_marks)
        and np.array_equal(t1.brownian_martingale, t2.brownian_martingale)
        and np.array_equal(t1.jump_martingale, t2.jump_martingale)
    )


def test_config_validation():
    with pytest.raises(InvalidConfig):
        SimulationConfig(horizon=1.0, dt=2.0)
    with pytest.raises(InvalidConfig):
        SimulationConfig(horizon=1.0, dt=0.3)
    with pytest.raises(InvalidConfig):
        SimulationConfig(n_paths=0)
    with pytest.raises(InvalidConfig):
        SimulationConfig(seed=-1)
    with pytest.warns(UserWarning):
        SimulationConfig(horizon=1.0, dt=0.05)


def test_record_grid():
    cfg = SimulationConfig(horizon=1.0, dt=0.01, record_stride=30)
    assert cfg.record_steps().tolist() == [0, 30, 60, 90, 100]
    tr = simulate_path(persistent_model(), StateVector(1, 1, 1), cfg)
    assert tr.times[0] == 0
    assert np.all(np.diff(tr.times) > 0)
    assert tr.times[-1] == pytest.approx(1.0)


def test_fixed_point_is_constant():
    r = [0.6, 0.5, 0.3]
    a = np.diag([0.3, 0.25, 0.1])
    # y decays; start it tiny and check the prey stay exactly at r/a
    m = CrispModel(r, a, [0, 0, 0])
    cfg = SimulationConfig(horizon=50, dt=1e-3, record_stride=1000)
    tr = simulate_path(m, StateVector(r[0] / a[0, 0], r[1] / a[1, 1], 1e-12), cfg)
    x = tr.states
    assert np.allclose(x[:, 0], r[0] / a[0, 0], rtol=1e-12)
    assert np.allclose(x[:, 1], r[1] / a[1, 1], rtol=1e-12)


def test_exponential_growth_closed_form():
    r = [0.3, 0.2, 0.1]
    m = CrispModel(r, np.zeros((3, 3)), [0, 0, 0])
    cfg = SimulationConfig(horizon=10, dt=1e-3, record_stride=1000)
    tr = simulate_path(m, StateVector(1.0, 2.0, 3.0), cfg)
    expected = np.array([1.0 * math.exp(3.0), 2.0 * math.exp(2.0), 3.0 * math.exp(-1.0)])
    # the log scheme is exact for constant log drift
    assert tr.states[-1] == pytest.approx(expected, rel=1e-10)


def test_determinism_and_path_independence():
    m = persistent_model()
    cfg = SimulationConfig(horizon=20, dt=1e-3, seed=99, n_paths=3, record_stride=50)
    a = simulate_path(m, StateVector(1, 1, 1), cfg, 2)
    b = simulate_path(m, StateVector(1, 1, 1), cfg, 2)
    c = simulate_path(m, StateVector(1, 1, 1), cfg, 1)
    assert _identical(a, b)
    assert not np.array_equal(a.log_states, c.log_states)


def test_ensemble_order_and_parallel_bit_identity():
    m = persistent_model()
    cfg = SimulationConfig(horizon=10, dt=1e-3, seed=5, n_paths=6, record_stride=100)
    serial = run_ensemble(m, StateVector(1, 1, 1), cfg)
    parallel = run_ensemble(m, StateVector(1, 1, 1), cfg.replace(workers=3))
    assert [t.path_index for t in serial] == list(range(6))
    assert all(_identical(s, p) for s, p in zip(serial, parallel))
    single = run_ensemble(m, StateVector(1, 1, 1), cfg.replace(n_paths=1))
    assert len(single) == 1 and _identical(single[0], simulate_path(m, StateVector(1, 1, 1), cfg, 0))


def test_positivity_and_finiteness():
    m = persistent_model()
    cfg = SimulationConfig(horizon=50, dt=1e-3, seed=3, n_paths=5, record_stride=100)
    for tr in run_ensemble(m, StateVector(0.01, 5.0, 0.2), cfg):
        x = tr.states
        assert np.all(np.isfinite(x)) and np.all(x > 0)


def test_blow_up_is_an_error():
    m = CrispModel([800.0, 1.0, 1.0], np.zeros((3, 3)), [0, 0, 0])
    cfg = SimulationConfig(horizon=2, dt=1e-3, record_stride=10)
    with pytest.raises(NonFiniteState) as info:
        simulate_path(m, StateVector(1, 1, 1), cfg, 4)
    assert info.value.path_index == 4
    assert 0.8 < info.value.time < 0.9


def test_jump_count_is_poisson():
    jm = JumpMeasure.from_atoms([(0.7, (0.1, 0.1, 0.1)), (0.3, (-0.1, 0, 0))])
    horizon, n = 50.0, 400
    counts = np.array([draw_jumps(stream(1, i, 1), jm.weights, horizon)[0].size for i in range(n)])
    lam = jm.total_rate * horizon
    assert abs(counts.mean() - lam) < 3 * math.sqrt(lam / n)
    assert counts.var(ddof=1) == pytest.approx(lam, rel=0.25)
    marks = np.concatenate([draw_jumps(stream(1, i, 1), jm.weights, horizon)[1] for i in range(n)])
    assert abs(np.mean(marks == 0) - 0.7) < 3 * math.sqrt(0.21 / marks.size)


def test_jump_times_sorted_within_horizon():
    t, marks = draw_jumps(stream(0, 0, 1), [2.0], 30.0)
    assert np.all(np.diff(t) > 0) and t[0] >= 0 and t[-1] < 30.0
    assert marks.dtype == np.int64


def test_jumps_apply_exactly_and_martingales_track():
    # zero drift and noise: log-state moves only by ln(1 + c) at jumps
    jm = JumpMeasure.from_atoms([(1.0, (0.5, -0.5, 0.25))])
    m = CrispModel([1e-300, 1e-300, 1e-300], np.zeros((3, 3)), [0, 0, 0], jm)
    cfg = SimulationConfig(horizon=20, dt=1e-3, seed=8, record_stride=20_000)
    tr = simulate_path(m, StateVector(1, 1, 1), cfg)
    n = tr.jump_times.size
    assert n > 5
    assert tr.log_states[-1] == pytest.approx(n * np.log1p([0.5, -0.5, 0.25]), rel=1e-9)
    compensator = 20 * np.log1p([0.5, -0.5, 0.25])
    assert tr.jump_martingale[-1] == pytest.approx(
        n * np.log1p([0.5, -0.5, 0.25]) - compensator, rel=1e-9, abs=1e-9
    )


def test_bridge_preserves_grid_increments():
    # the Brownian martingale at grid points must not depend on jumps
    cfg = SimulationConfig(horizon=5, dt=1e-3, seed=12, record_stride=5000)
    sig = [0.3, 0.2, 0.1]
    with_jumps = CrispModel([0.1, 0.1, 0.1], np.zeros((3, 3)), sig,
                            JumpMeasure.from_atoms([(3.0, (0.1, 0.1, 0.1))]))
    tr = simulate_path(with_jumps, StateVector(1, 1, 1), cfg)
    normals = stream(12, 0, 0).standard_normal((cfg.n_steps, 3))
    expected = np.array(sig) * normals.sum(axis=0) * math.sqrt(cfg.dt)
    assert tr.brownian_martingale[-1] == pytest.approx(expected, rel=1e-9)
    # without drift the log-state is exactly martingale + jumps - Ito term
    drift_free = tr.log_states[-1] - (
        (np.array([0.1, 0.1, 0.1]) * [1, 1, -1] - np.array(sig) ** 2 / 2) * 5
    )
    assert drift_free == pytest.approx(tr.brownian_martingale[-1] + tr.jump_martingale[-1]
                                       + 5 * 3.0 * math.log1p(0.1), abs=1e-9)


def test_comparison_constant_at_equilibrium():
    spec = ComparisonSpec.logistic(0.6, 0.3, 0.0)
    cfg = SimulationConfig(horizon=30, dt=1e-3, record_stride=500)
    tr = simulate_comparison(spec, 2.0, cfg)
    assert np.allclose(tr.states[:, 0], 2.0, rtol=1e-12)


def test_comparison_spec_coefficients():
    m = persistent_model()
    specs = {w: ComparisonSpec.from_model(m, w) for w in ("phi1", "phi2", "phi3", "phi4")}
    assert specs["phi1"].rate == m.r[0] and specs["phi1"].self_interaction == m.a[0, 0]
    assert specs["phi2"].rate == m.r[1] and specs["phi2"].self_interaction == m.a[1, 1]
    assert specs["phi3"].rate == -m.r[2] and specs["phi3"].self_interaction == m.a[2, 2]
    assert specs["phi4"].rate == pytest.approx(-m.r[2] + m.a[2, 0] + m.a[2, 1])
    assert specs["phi1"].b == m.b.b1 and specs["phi3"].b == m.b.b3
    with pytest.raises(ValueError):
        ComparisonSpec.from_model(m, "phi5")


def test_pathwise_comparison_small():
    m = persistent_model()
    cfg = SimulationConfig(horizon=40, dt=1e-3, seed=21, n_paths=4, record_stride=10)
    init = StateVector(2.0, 0.5, 0.8)
    for k in range(cfg.n_paths):
        full = simulate_path(m, init, cfg, k).states
        phi = {w: simulate_comparison(ComparisonSpec.from_model(m, w), v, cfg, k).states[:, 0]
               for w, v in (("phi1", init.x1), ("phi2", init.x2), ("phi3", init.y),
                            ("phi4", init.y))}
        tol = 1 + 1e-9
        assert np.all(full[:, 0] <= phi["phi1"] * tol)
        assert np.all(full[:, 1] <= phi["phi2"] * tol)
        assert np.all(phi["phi3"] <= full[:, 2] * tol)
        assert np.all(full[:, 2] <= phi["phi4"] * tol)


def test_phi3_extinction_rate():
    m = CrispModel([0.5, 0.5, 0.3], np.full((3, 3), 0.2), [0.1, 0.1, 0.25],
                   JumpMeasure.from_atoms([(0.5, (0, 0, -0.2))]))
    spec = ComparisonSpec.from_model(m, "phi3")
    assert spec.b < 0
    cfg = SimulationConfig(horizon=400, dt=1e-3, seed=4, n_paths=20, record_stride=100)
    rates = [tr.log_states[-1, 0] / cfg.horizon for tr in run_comparison_ensemble(spec, 1.0, cfg)]
    se = np.std(rates, ddof=1) / math.sqrt(len(rates))
    assert abs(np.mean(rates) - spec.b) < 3 * se + 1e-3


def test_weak_convergence_under_dt_halving():
    m = persistent_model()
    means = []
    for dt in (1e-3, 5e-4):
        cfg = SimulationConfig(horizon=100, dt=dt, seed=31, n_paths=60, record_stride=1000)
        x1 = np.array([tr.states[-1, 0] for tr in run_ensemble(m, StateVector(1, 1, 1), cfg)])
        means.append((x1.mean(), x1.std(ddof=1) / math.sqrt(x1.size)))
    (m1, s1), (m2, s2) = means
    assert abs(m1 - m2) < 3 * math.hypot(s1, s2)
