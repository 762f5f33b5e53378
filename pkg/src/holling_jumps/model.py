"""One-predator two-prey Holling II model with interval parameters and jumps.

Species are ordered ``(x1, x2, y)``: two prey and one predator. Jumps come from
a Poisson random measure whose characteristic measure is a finite list of
weighted atoms; an atom ``k`` multiplies species ``i`` by ``1 + c[k, i]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .intervals import Interval, NonPositiveInterval, OutOfRange, PositiveInterval, realize

SPECIES = ("x1", "x2", "y")


class ModelError(ValueError):
    pass


def _frozen(arr) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class JumpMeasure:
    """Finite atomic mark measure and per-species relative jump sizes.

    ``weights[k]`` is the rate of mark ``k``; ``sizes[k, i]`` is the relative
    jump ``c_i`` that mark ``k`` applies to species ``i``.
    """

    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sizes: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        c = np.asarray(self.sizes, dtype=float).reshape(-1, 3)
        if len(w) != len(c):
            raise ModelError(f"{len(w)} weights but {len(c)} jump-size rows")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ModelError("jump weights must be finite and > 0")
        if not np.all(np.isfinite(c)) or np.any(c <= -1):
            raise ModelError("jump sizes must be finite and satisfy c > -1")
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "sizes", _frozen(c))
        # integrability of |c| v |c|^2 and |ln(1+c)| v |ln(1+c)|^2 is automatic
        # for a finite atomic measure with finite sizes
        assert math.isfinite(self.integrability_bound())

    @classmethod
    def none(cls) -> JumpMeasure:
        return cls()

    @classmethod
    def from_atoms(cls, atoms: Sequence[tuple[float, Sequence[float]]]) -> JumpMeasure:
        """Build from ``[(weight, (c1, c2, c3)), ...]``."""
        if not atoms:
            return cls()
        return cls([w for w, _ in atoms], [list(c) for _, c in atoms])

    @property
    def n_atoms(self) -> int:
        return len(self.weights)

    @cached_property
    def total_rate(self) -> float:
        return math.fsum(self.weights)

    @cached_property
    def log_sizes(self) -> np.ndarray:
        return _frozen(np.log1p(self.sizes))

    @cached_property
    def compensator(self) -> np.ndarray:
        """``sum_k w_k ln(1 + c[k, i])`` for each species."""
        return _frozen(
            [math.fsum(self.weights * self.log_sizes[:, i]) for i in range(3)]
        )

    def integrability_bound(self) -> float:
        c, lc = np.abs(self.sizes), np.abs(np.log1p(self.sizes))
        return float(
            np.sum(self.weights[:, None] * (np.maximum(c, c**2) + np.maximum(lc, lc**2)))
        )

    def species(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Weights and jump sizes as seen by species ``i`` alone."""
        return self.weights, self.sizes[:, i]


def _positive(x, name) -> PositiveInterval:
    if isinstance(x, PositiveInterval):
        return x
    if not isinstance(x, Interval):
        x = Interval(*x)
    try:
        return PositiveInterval(x)
    except NonPositiveInterval as exc:
        raise NonPositiveInterval(f"{name}: {exc}") from None


def _sigma_interval(x, name) -> Interval:
    if isinstance(x, PositiveInterval):
        return x.inner
    if not isinstance(x, Interval):
        x = Interval(*x)
    if x.lo == x.hi == 0.0:
        return x
    return _positive(x, name).inner


@dataclass(frozen=True, eq=False)
class ImpreciseModel:
    """Interval-valued rates ``r_hat``, interactions ``a_hat`` and noise ``sigma_hat``.

    ``sigma_hat[i]`` may be the degenerate ``[0, 0]`` for a noise-free species;
    every other interval must be strictly positive.
    """

    r_hat: tuple
    a_hat: tuple
    sigma_hat: tuple
    jumps: JumpMeasure = field(default_factory=JumpMeasure)

    def __post_init__(self):
        if len(self.r_hat) != 3 or len(self.sigma_hat) != 3:
            raise ModelError("r_hat and sigma_hat need one interval per species")
        if len(self.a_hat) != 3 or any(len(row) != 3 for row in self.a_hat):
            raise ModelError("a_hat must be a 3x3 table of intervals")
        r = tuple(_positive(x, f"r{i + 1}") for i, x in enumerate(self.r_hat))
        a = tuple(
            tuple(_positive(x, f"a{i + 1}{j + 1}") for j, x in enumerate(row))
            for i, row in enumerate(self.a_hat)
        )
        s = tuple(_sigma_interval(x, f"sigma{i + 1}") for i, x in enumerate(self.sigma_hat))
        object.__setattr__(self, "r_hat", r)
        object.__setattr__(self, "a_hat", a)
        object.__setattr__(self, "sigma_hat", s)

    @classmethod
    def degenerate(cls, r, a, sigma, jumps: JumpMeasure | None = None) -> ImpreciseModel:
        """Model whose intervals are all points, i.e. a crisp model in disguise."""
        return cls(
            tuple(Interval.point(v) for v in r),
            tuple(tuple(Interval.point(v) for v in row) for row in a),
            tuple(Interval.point(v) for v in sigma),
            jumps or JumpMeasure(),
        )


class BCoefficients(NamedTuple):
    b1: float
    b2: float
    b3: float


@dataclass(frozen=True)
class StateVector:
    x1: float
    x2: float
    y: float

    def __post_init__(self):
        for name in SPECIES:
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0):
                raise ModelError(f"state component {name} must be finite and > 0, got {v}")
            object.__setattr__(self, name, v)

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.y])

    @classmethod
    def from_array(cls, arr) -> StateVector:
        return cls(*map(float, arr))


@dataclass(frozen=True, eq=False)
class CrispModel:
    """Point parameters of the model at imprecision level ``p``.

    ``a`` is indexed ``a[i, j]`` with 0-based species indices, so ``a[0, 2]``
    is the predation pressure of ``y`` on ``x1``.
    """

    r: np.ndarray
    a: np.ndarray
    sigma: np.ndarray
    jumps: JumpMeasure = field(default_factory=JumpMeasure)
    p: float | None = None

    def __post_init__(self):
        r = _frozen(self.r).reshape(3)
        a = _frozen(self.a).reshape(3, 3)
        sigma = _frozen(self.sigma).reshape(3)
        if np.any(r <= 0) or not np.all(np.isfinite(r)):
            raise ModelError("rates r must be finite and > 0")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ModelError("interaction coefficients must be finite and >= 0")
        if np.any(sigma < 0) or not np.all(np.isfinite(sigma)):
            raise ModelError("noise intensities must be finite and >= 0")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "sigma", sigma)

    @property
    def signed_rates(self) -> np.ndarray:
        """``(r1, r2, -r3)``: prey grow, the predator dies without food."""
        return np.array([self.r[0], self.r[1], -self.r[2]])

    @cached_property
    def b(self) -> BCoefficients:
        kappa = self.jumps.compensator if self.jumps.n_atoms else np.zeros(3)
        rates = self.signed_rates
        return BCoefficients(
            *(float(rates[i] - self.sigma[i] ** 2 / 2 + kappa[i]) for i in range(3))
        )

    @cached_property
    def continuous_log_drift_base(self) -> np.ndarray:
        """``b_i`` minus the jump compensator: the state-free part of the log drift
        between jumps when raw (uncompensated) jump events are applied."""
        kappa = self.jumps.compensator if self.jumps.n_atoms else np.zeros(3)
        return _frozen(np.array(self.b) - kappa)


def realize_model(m: ImpreciseModel, p: float) -> CrispModel:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise OutOfRange(f"p must lie in [0, 1], got {p}")
    r = [realize(x, p) for x in m.r_hat]
    a = [[realize(x, p) for x in row] for row in m.a_hat]
    sigma = [0.0 if s.hi == 0.0 else realize(s, p) for s in m.sigma_hat]
    return CrispModel(r, a, sigma, m.jumps, p)


def b_coefficients(m: CrispModel) -> BCoefficients:
    return m.b


def _split(s):
    if isinstance(s, StateVector):
        return s.x1, s.x2, s.y
    s = np.asarray(s, dtype=float)
    return s[..., 0], s[..., 1], s[..., 2]


def _interactions(m: CrispModel, s):
    x1, x2, y = _split(s)
    a = m.a
    g1 = -a[0, 0] * x1 - a[0, 1] * x2 - a[0, 2] * y / (1 + x1)
    g2 = -a[1, 0] * x1 - a[1, 1] * x2 - a[1, 2] * y / (1 + x2)
    g3 = -a[2, 2] * y + a[2, 0] * x1 / (1 + x1) + a[2, 1] * x2 / (1 + x2)
    return (x1, x2, y), (g1, g2, g3)


def drift(m: CrispModel, s) -> np.ndarray:
    """Drift of ``(x1, x2, y)``; accepts a StateVector or an array with last axis 3."""
    states, g = _interactions(m, s)
    rates = m.signed_rates
    return np.stack([states[i] * (rates[i] + g[i]) for i in range(3)], axis=-1)


def log_drift(m: CrispModel, s) -> np.ndarray:
    """Drift of ``(ln x1, ln x2, ln y)`` against the compensated jump measure.

    Equals ``drift / state`` plus the Ito correction ``-sigma**2 / 2`` plus the
    jump compensator ``sum_k w_k ln(1 + c[k, i])``.
    """
    _, g = _interactions(m, s)
    b = m.b
    return np.stack([b[i] + g[i] for i in range(3)], axis=-1)
