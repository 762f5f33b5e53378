"""Interval numbers and the power-law bridge from an interval to a point value.

Endpoint arithmetic is plain round-to-nearest floating point. These intervals
describe parameter uncertainty fed into Monte Carlo runs, so outward rounding
buys nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class IntervalError(ValueError):
    """Base class for interval errors."""


class InvalidInterval(IntervalError):
    pass


class NonPositiveScalar(IntervalError):
    pass


class DivisionByZeroInterval(IntervalError, ZeroDivisionError):
    pass


class OutOfRange(IntervalError):
    pass


class NonPositiveInterval(IntervalError):
    pass


@dataclass(frozen=True)
class Interval:
    """Closed interval ``[lo, hi]``; ``[c, c]`` stands for the real number c."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi):
            raise InvalidInterval(f"interval endpoints must not be NaN: [{lo}, {hi}]")
        if lo > hi:
            raise InvalidInterval(f"interval requires lo <= hi, got [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, c: float) -> Interval:
        return cls(c, c)

    @property
    def is_degenerate(self) -> bool:
        return self.lo == self.hi

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def __contains__(self, x) -> bool:
        return self.lo <= x <= self.hi

    def __iter__(self):
        yield self.lo
        yield self.hi

    def as_list(self) -> list[float]:
        return [self.lo, self.hi]

    def __add__(self, other):
        return add(self, _coerce(other))

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __mul__(self, other):
        if isinstance(other, Interval):
            return mul(self, other)
        return scalar_mul(other, self)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _coerce(other))


def _coerce(x) -> Interval:
    return x if isinstance(x, Interval) else Interval.point(x)


@dataclass(frozen=True)
class PositiveInterval:
    """An interval with strictly positive lower endpoint."""

    inner: Interval

    def __post_init__(self):
        if not isinstance(self.inner, Interval):
            object.__setattr__(self, "inner", Interval(*self.inner))
        if self.inner.lo <= 0:
            raise NonPositiveInterval(
                f"interval must be strictly positive, got [{self.inner.lo}, {self.inner.hi}]"
            )

    @classmethod
    def of(cls, lo: float, hi: float | None = None) -> PositiveInterval:
        return cls(Interval(lo, lo if hi is None else hi))

    @property
    def lo(self) -> float:
        return self.inner.lo

    @property
    def hi(self) -> float:
        return self.inner.hi


def add(a: Interval, b: Interval) -> Interval:
    return Interval(a.lo + b.lo, a.hi + b.hi)


def sub(a: Interval, b: Interval) -> Interval:
    """Endpoint-wise difference ``[a.lo - b.lo, a.hi - b.hi]``.

    This is not the usual interval difference, which would be
    ``[a.lo - b.hi, a.hi - b.lo]``. When ``b`` is wider than ``a`` the
    endpoint-wise formula gives ``lo > hi`` and :class:`InvalidInterval` is raised.
    """
    lo, hi = a.lo - b.lo, a.hi - b.hi
    if lo > hi:
        raise InvalidInterval(
            f"[{a.lo}, {a.hi}] - [{b.lo}, {b.hi}] gives lo={lo} > hi={hi}"
        )
    return Interval(lo, hi)


def scalar_mul(alpha: float, a: Interval) -> Interval:
    if not alpha > 0:
        raise NonPositiveScalar(f"scalar must be positive, got {alpha}")
    return Interval(alpha * a.lo, alpha * a.hi)


def mul(a: Interval, b: Interval) -> Interval:
    products = (a.lo * b.lo, a.hi * b.lo, a.lo * b.hi, a.hi * b.hi)
    return Interval(min(products), max(products))


def div(a: Interval, b: Interval) -> Interval:
    # reciprocal written increasing, [1/hi, 1/lo]
    if b.lo <= 0 <= b.hi:
        raise DivisionByZeroInterval(f"divisor [{b.lo}, {b.hi}] contains zero")
    return mul(a, Interval(1.0 / b.hi, 1.0 / b.lo))


def realize(g, k: float) -> float:
    """Point value ``lo**(1-k) * hi**k`` of a positive interval at level ``k``.

    ``k = 0`` gives the lower endpoint and ``k = 1`` the upper one, both exactly.
    """
    if isinstance(g, PositiveInterval):
        g = g.inner
    k = float(k)
    if not 0.0 <= k <= 1.0:
        raise OutOfRange(f"level must lie in [0, 1], got {k}")
    if g.lo <= 0:
        raise NonPositiveInterval(f"realize needs lo > 0, got [{g.lo}, {g.hi}]")
    if g.lo == g.hi or k == 0.0:
        return g.lo
    if k == 1.0:
        return g.hi
    # exp/log form keeps the result monotone in k and inside [lo, hi]
    value = g.lo * math.exp(k * math.log(g.hi / g.lo))
    return min(max(value, g.lo), g.hi)
