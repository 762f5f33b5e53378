"""Log-space Euler-Maruyama simulation with exact compound-Poisson jumps.

The state is carried as ``u = ln(x)``, so every simulated population stays
strictly positive. Between jumps a step is

    u <- u + (log_drift - jump_compensator) * h + sigma * dB

and at a jump of mark ``k`` species ``i`` gets ``u_i <- u_i + ln(1 + c[k, i])``.
Jump times are exact; a grid step that contains jumps is split at the jump
times and its Brownian increment is divided with a Brownian bridge, so the
grid-level increments do not depend on where jumps fall.

Random streams: each path owns three independent Philox streams derived from
``SeedSequence(seed, spawn_key=(path_index, k))``:

* ``k = 0``: standard normals, one row of three per grid step;
* ``k = 1``: jump times and marks;
* ``k = 2``: bridge normals, one row of three per jump.

A comparison process for species ``i`` reads column ``i`` of the same draws,
which is what makes pathwise comparison with the full system possible.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .model import CrispModel, JumpMeasure, StateVector

LOG_STATE_LIMIT = 700.0

BROWNIAN_STREAM = 0
JUMP_STREAM = 1
BRIDGE_STREAM = 2


class SimulationError(RuntimeError):
    pass


class InvalidConfig(SimulationError, ValueError):
    pass


class NonFiniteState(SimulationError):
    def __init__(self, path_index: int, time: float, log_state):
        self.path_index = path_index
        self.time = time
        self.log_state = log_state
        super().__init__(
            f"path {path_index}: log-state {list(np.round(log_state, 3))} left "
            f"[-{LOG_STATE_LIMIT:g}, {LOG_STATE_LIMIT:g}] at t={time:.6g}"
        )


@dataclass(frozen=True)
class SimulationConfig:
    horizon: float = 1000.0
    dt: float = 1e-3
    seed: int = 0
    n_paths: int = 200
    record_stride: int = 100
    workers: int = 1

    def __post_init__(self):
        # normalize types so CSV header lines do not depend on how values were given
        for name, kind in (("horizon", float), ("dt", float), ("seed", int), ("n_paths", int),
                           ("record_stride", int), ("workers", int)):
            object.__setattr__(self, name, kind(getattr(self, name)))
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise InvalidConfig(f"horizon must be > 0, got {self.horizon}")
        if not (math.isfinite(self.dt) and 0 < self.dt <= self.horizon):
            raise InvalidConfig(f"dt must satisfy 0 < dt <= horizon, got {self.dt}")
        n = round(self.horizon / self.dt)
        if abs(n * self.dt - self.horizon) > 1e-9 * self.horizon:
            raise InvalidConfig(
                f"horizon {self.horizon} is not an integer multiple of dt {self.dt}"
            )
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidConfig(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if int(self.n_paths) < 1:
            raise InvalidConfig("n_paths must be >= 1")
        if int(self.record_stride) < 1:
            raise InvalidConfig("record_stride must be >= 1")
        if int(self.workers) < 1:
            raise InvalidConfig("workers must be >= 1")
        if self.dt > 1e-2:
            warnings.warn(f"dt={self.dt} is coarse; drift scales may be under-resolved")

    @property
    def n_steps(self) -> int:
        return round(self.horizon / self.dt)

    def record_steps(self) -> np.ndarray:
        steps = np.arange(0, self.n_steps + 1, self.record_stride)
        if steps[-1] != self.n_steps:
            steps = np.append(steps, self.n_steps)
        return steps

    def replace(self, **changes) -> SimulationConfig:
        return SimulationConfig(**{**self.__dict__, **changes})


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One recorded sample path.

    ``log_states`` has one column per simulated species (3 for the full
    system, 1 for a comparison process). ``brownian_martingale`` holds the
    running ``sigma_i * B_i(t)`` and ``jump_martingale`` the running
    compensated jump sum ``sum ln(1 + c_i) - t * sum_k w_k ln(1 + c[k, i])``.
    """

    times: np.ndarray
    log_states: np.ndarray
    jump_times: np.ndarray
    jump_marks: np.ndarray
    brownian_martingale: np.ndarray
    jump_martingale: np.ndarray
    path_index: int = 0
    jump_log_sizes: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    @property
    def states(self) -> np.ndarray:
        return np.exp(self.log_states)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_species(self) -> int:
        return self.log_states.shape[1]


@dataclass(frozen=True)
class ComparisonSpec:
    """Scalar logistic jump-diffusion ``dx = x (rate - self_interaction x) dt + ...``.

    ``species`` selects which noise column and which jump sizes of the shared
    random streams drive it.
    """

    which: str
    rate: float
    self_interaction: float
    sigma: float
    species: int
    jump_weights: tuple = ()
    jump_log_sizes: tuple = ()
    jump_compensator: float = 0.0

    @classmethod
    def from_model(cls, m: CrispModel, which: str) -> ComparisonSpec:
        a, r = m.a, m.r
        table = {
            "phi1": (0, r[0], a[0, 0]),
            "phi2": (1, r[1], a[1, 1]),
            "phi3": (2, -r[2], a[2, 2]),
            "phi4": (2, -r[2] + a[2, 0] + a[2, 1], a[2, 2]),
        }
        if which not in table:
            raise ValueError(f"unknown comparison process {which!r}")
        i, rate, self_int = table[which]
        jm = m.jumps
        return cls(
            which,
            float(rate),
            float(self_int),
            float(m.sigma[i]),
            i,
            tuple(jm.weights),
            tuple(jm.log_sizes[:, i]),
            float(jm.compensator[i]) if jm.n_atoms else 0.0,
        )

    @classmethod
    def logistic(cls, rate, self_interaction, sigma, jumps=(), species=0) -> ComparisonSpec:
        """Stand-alone logistic process; ``jumps`` is ``[(weight, c), ...]``."""
        measure = JumpMeasure.from_atoms([(w, [c, c, c]) for w, c in jumps])
        return cls(
            "logistic",
            float(rate),
            float(self_interaction),
            float(sigma),
            species,
            tuple(measure.weights),
            tuple(measure.log_sizes[:, 0]),
            float(measure.compensator[0]) if measure.n_atoms else 0.0,
        )

    @property
    def b(self) -> float:
        return float(self.rate - self.sigma**2 / 2 + self.jump_compensator)

    @property
    def continuous_log_drift_base(self) -> float:
        return float(self.b - self.jump_compensator)


# ---------------------------------------------------------------------------
# random streams


def stream(seed: int, path_index: int, which: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(path_index), int(which)))
    return np.random.Generator(np.random.Philox(ss))


def draw_jumps(rng: np.random.Generator, weights, horizon: float):
    """Exact Poisson event times on ``[0, horizon)`` with marks drawn ∝ ``weights``."""
    weights = np.asarray(weights, dtype=float)
    if weights.size == 0:
        return np.zeros(0), np.zeros(0, dtype=np.int64)
    rate = math.fsum(weights)
    mean = rate * horizon
    batch = int(mean + 6 * math.sqrt(mean) + 16)
    arrivals = np.cumsum(rng.standard_exponential(batch)) / rate
    while arrivals[-1] < horizon:
        more = np.cumsum(rng.standard_exponential(batch)) / rate + arrivals[-1]
        arrivals = np.concatenate([arrivals, more])
    times = arrivals[arrivals < horizon]
    marks = rng.choice(weights.size, size=times.size, p=weights / rate)
    return times, marks.astype(np.int64)


def _draw(seed, path_index, cfg: SimulationConfig, weights):
    normals = stream(seed, path_index, BROWNIAN_STREAM).standard_normal((cfg.n_steps, 3))
    jump_times, marks = draw_jumps(stream(seed, path_index, JUMP_STREAM), weights, cfg.horizon)
    bridge = stream(seed, path_index, BRIDGE_STREAM).standard_normal((jump_times.size, 3))
    return normals, jump_times, marks, bridge


# ---------------------------------------------------------------------------
# kernels


@numba.njit(cache=True, nogil=True)
def _bridge_piece(remaining, span, s, z):
    # increment over the first s of a Brownian bridge with total `remaining` over `span`
    if s <= 0.0:
        return 0.0
    if s >= span:
        return remaining
    return (s / span) * remaining + math.sqrt(s * (span - s) / span) * z


@numba.njit(cache=True, nogil=True)
def _full_drift(u, base, a, out):
    x1 = math.exp(u[0])
    x2 = math.exp(u[1])
    y = math.exp(u[2])
    out[0] = base[0] - a[0, 0] * x1 - a[0, 1] * x2 - a[0, 2] * y / (1.0 + x1)
    out[1] = base[1] - a[1, 0] * x1 - a[1, 1] * x2 - a[1, 2] * y / (1.0 + x2)
    out[2] = base[2] - a[2, 2] * y + a[2, 0] * x1 / (1.0 + x1) + a[2, 1] * x2 / (1.0 + x2)


@numba.njit(cache=True, nogil=True)
def _full_kernel(u0, base, a, sigma, kappa, dt, normals, jump_times, jump_logs,
                 bridge, stride, out_u, out_m, out_mj, fail_u):
    """Returns -1 on success, else the grid step at which the state blew up."""
    n_steps = normals.shape[0]
    n_jumps = jump_times.shape[0]
    sqdt = math.sqrt(dt)
    u = u0.copy()
    m = np.zeros(3)
    mj = np.zeros(3)
    d = np.zeros(3)
    rem = np.zeros(3)
    out_u[0, :] = u
    out_m[0, :] = m
    out_mj[0, :] = mj
    rec = 1
    j = 0
    for n in range(n_steps):
        t0 = n * dt
        t1 = (n + 1) * dt
        for i in range(3):
            rem[i] = sqdt * normals[n, i]
            m[i] += sigma[i] * rem[i]
            mj[i] -= kappa[i] * dt
        if j < n_jumps and jump_times[j] < t1:
            span = dt
            tcur = t0
            while j < n_jumps and jump_times[j] < t1:
                s = jump_times[j] - tcur
                _full_drift(u, base, a, d)
                for i in range(3):
                    db = _bridge_piece(rem[i], span, s, bridge[j, i])
                    rem[i] -= db
                    u[i] += d[i] * s + sigma[i] * db + jump_logs[j, i]
                    mj[i] += jump_logs[j, i]
                span -= s
                tcur = jump_times[j]
                j += 1
            _full_drift(u, base, a, d)
            for i in range(3):
                u[i] += d[i] * span + sigma[i] * rem[i]
        else:
            _full_drift(u, base, a, d)
            for i in range(3):
                u[i] += d[i] * dt + sigma[i] * rem[i]
        for i in range(3):
            if not (abs(u[i]) <= 700.0):
                fail_u[:] = u
                return n
        if (n + 1) % stride == 0 or n + 1 == n_steps:
            out_u[rec, :] = u
            out_m[rec, :] = m
            out_mj[rec, :] = mj
            rec += 1
    return -1


@numba.njit(cache=True, nogil=True)
def _scalar_kernel(w0, base, self_int, sigma, kappa, col, dt, normals, jump_times,
                   jump_logs, bridge, stride, out_u, out_m, out_mj, fail_u):
    n_steps = normals.shape[0]
    n_jumps = jump_times.shape[0]
    sqdt = math.sqrt(dt)
    w = w0
    m = 0.0
    mj = 0.0
    out_u[0, 0] = w
    out_m[0, 0] = m
    out_mj[0, 0] = mj
    rec = 1
    j = 0
    for n in range(n_steps):
        t0 = n * dt
        t1 = (n + 1) * dt
        rem = sqdt * normals[n, col]
        m += sigma * rem
        mj -= kappa * dt
        if j < n_jumps and jump_times[j] < t1:
            span = dt
            tcur = t0
            while j < n_jumps and jump_times[j] < t1:
                s = jump_times[j] - tcur
                d = base - self_int * math.exp(w)
                db = _bridge_piece(rem, span, s, bridge[j, col])
                rem -= db
                w += d * s + sigma * db + jump_logs[j]
                mj += jump_logs[j]
                span -= s
                tcur = jump_times[j]
                j += 1
            d = base - self_int * math.exp(w)
            w += d * span + sigma * rem
        else:
            d = base - self_int * math.exp(w)
            w += d * dt + sigma * rem
        if not (abs(w) <= 700.0):
            fail_u[0] = w
            return n
        if (n + 1) % stride == 0 or n + 1 == n_steps:
            out_u[rec, 0] = w
            out_m[rec, 0] = m
            out_mj[rec, 0] = mj
            rec += 1
    return -1


# ---------------------------------------------------------------------------
# public API


def _init_array(init) -> np.ndarray:
    if isinstance(init, StateVector):
        return init.as_array()
    return StateVector.from_array(init).as_array()


def simulate_path(m: CrispModel, init, cfg: SimulationConfig, path_index: int = 0) -> Trajectory:
    """Simulate one path of the full three-species system.

    The output depends only on ``(m, init, cfg.horizon, cfg.dt, cfg.seed,
    cfg.record_stride, path_index)`` and is bit-for-bit reproducible.
    """
    u0 = np.log(_init_array(init))
    normals, jump_times, marks, bridge = _draw(cfg.seed, path_index, cfg, m.jumps.weights)
    jump_logs = np.ascontiguousarray(m.jumps.log_sizes[marks]).reshape(-1, 3)
    steps = cfg.record_steps()
    out_u = np.empty((steps.size, 3))
    out_m = np.empty((steps.size, 3))
    out_mj = np.empty((steps.size, 3))
    kappa = np.array(m.jumps.compensator) if m.jumps.n_atoms else np.zeros(3)
    status = _full_kernel(
        u0, np.array(m.continuous_log_drift_base), np.array(m.a), np.array(m.sigma),
        kappa, float(cfg.dt), normals, jump_times, jump_logs, bridge,
        int(cfg.record_stride), out_u, out_m, out_mj, fail_u := np.zeros(3),
    )
    if status >= 0:
        raise NonFiniteState(path_index, (status + 1) * cfg.dt, fail_u)
    return Trajectory(
        steps * cfg.dt, out_u, jump_times, marks, out_m, out_mj, path_index, jump_logs
    )


def simulate_comparison(spec: ComparisonSpec, init: float, cfg: SimulationConfig,
                        path_index: int = 0) -> Trajectory:
    """Simulate a scalar comparison process on the same random streams as
    :func:`simulate_path` with the same ``(cfg.seed, path_index)``."""
    init = float(init)
    if not (math.isfinite(init) and init > 0):
        raise ValueError(f"initial value must be > 0, got {init}")
    normals, jump_times, marks, bridge = _draw(cfg.seed, path_index, cfg, spec.jump_weights)
    log_sizes = np.asarray(spec.jump_log_sizes, dtype=float)
    jump_logs = log_sizes[marks] if marks.size else np.zeros(0)
    steps = cfg.record_steps()
    out_u = np.empty((steps.size, 1))
    out_m = np.empty((steps.size, 1))
    out_mj = np.empty((steps.size, 1))
    status = _scalar_kernel(
        math.log(init), spec.continuous_log_drift_base, spec.self_interaction, spec.sigma,
        spec.jump_compensator, spec.species, float(cfg.dt), normals, jump_times,
        np.ascontiguousarray(jump_logs, dtype=float), bridge, int(cfg.record_stride),
        out_u, out_m, out_mj, fail_u := np.zeros(1),
    )
    if status >= 0:
        raise NonFiniteState(path_index, (status + 1) * cfg.dt, fail_u)
    return Trajectory(
        steps * cfg.dt, out_u, jump_times, marks, out_m, out_mj, path_index,
        jump_logs.reshape(-1, 1),
    )


def _map_paths(fn, cfg: SimulationConfig):
    indices = range(cfg.n_paths)
    if cfg.workers == 1 or cfg.n_paths == 1:
        return [fn(i) for i in indices]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(fn, indices))


def run_ensemble(m: CrispModel, init, cfg: SimulationConfig) -> list[Trajectory]:
    """Paths ``0 .. n_paths-1`` in order. Worker count never changes the output."""
    init = _init_array(init)
    return _map_paths(lambda i: simulate_path(m, init, cfg, i), cfg)


def run_comparison_ensemble(spec: ComparisonSpec, init: float,
                            cfg: SimulationConfig) -> list[Trajectory]:
    return _map_paths(lambda i: simulate_comparison(spec, init, cfg, i), cfg)
