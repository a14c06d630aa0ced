"""Time-dependent transition rates: evaluation, exact integration, discontinuities.

Every rate profile in the toolkit is piecewise constant in time, so integrals
are accumulated exactly over the constant pieces and integrators can align
their steps with the discontinuity times.

Convention: rates are right-continuous.  At a switching instant the value is
the limit from above, with sgn(0) := +1.  This matches the half-open
intervals [t_k, t_{k+1}) used by the builders and the steppers.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError

#: Discontinuity times closer than this are merged.
BREAKPOINT_DEDUP_TOL = 1e-12


class RateFunction:
    """Base class for real-valued, piecewise-constant functions of time."""

    def evaluate(self, t: float) -> float:
        if t < 0:
            raise DomainError(f"rate evaluated at negative time t={t}")
        return self._value(t)

    def __call__(self, t: float) -> float:
        return self.evaluate(t)

    def _value(self, t: float) -> float:
        raise NotImplementedError

    def _discontinuities(self, t0: float, t1: float) -> Iterable[float]:
        """Raw discontinuity times in (t0, t1], unsorted, may repeat."""
        raise NotImplementedError

    def breakpoints(self, t0: float, t1: float) -> list[float]:
        """Sorted, deduplicated discontinuity times in (t0, t1]."""
        if t1 < t0:
            raise DomainError(f"breakpoints interval reversed: [{t0}, {t1}]")
        return _dedup(self._discontinuities(t0, t1))

    def integral(self, t0: float, t1: float) -> float:
        """Exact integral over [t0, t1], accumulated piece by piece."""
        if t1 < t0:
            raise DomainError(f"integration interval reversed: [{t0}, {t1}]")
        if t0 < 0:
            raise DomainError(f"integration from negative time t0={t0}")
        if t1 == t0:
            return 0.0
        edges = [t0]
        edges.extend(b for b in self.breakpoints(t0, t1) if t0 < b < t1)
        edges.append(t1)
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            total += self.evaluate(0.5 * (a + b)) * (b - a)
        return total


@dataclass(frozen=True)
class Constant(RateFunction):
    """A constant rate."""

    value: float

    def _value(self, t):
        return self.value

    def _discontinuities(self, t0, t1):
        return ()


@dataclass(frozen=True)
class PiecewiseConstant(RateFunction):
    """Piecewise-constant rate.

    ``values[0]`` applies on [0, breakpoints[0]), ``values[i]`` on
    [breakpoints[i-1], breakpoints[i]) and ``values[-1]`` from the last
    breakpoint onwards.
    """

    breaks: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "breaks", tuple(float(b) for b in self.breaks))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if any(b2 <= b1 for b1, b2 in zip(self.breaks[:-1], self.breaks[1:])):
            raise DomainError("piecewise breakpoints must be strictly increasing")
        if len(self.values) != len(self.breaks) + 1:
            raise DomainError(
                f"piecewise needs {len(self.breaks) + 1} values, got {len(self.values)}"
            )

    def _value(self, t):
        return self.values[bisect_right(self.breaks, t)]

    def _discontinuities(self, t0, t1):
        return [
            b
            for i, b in enumerate(self.breaks)
            if t0 < b <= t1 and self.values[i] != self.values[i + 1]
        ]


@dataclass(frozen=True)
class SignPeriodic(RateFunction):
    """Square-wave rate (amplitude/2) * (1 + sign * sgn[cos(amplitude*pi*t + phase)]).

    Takes values in {0, amplitude} only.  ``sign=-1`` selects the
    complementary half-periods.
    """

    amplitude: float
    phase: float = 0.0
    sign: int = 1

    def __post_init__(self):
        if self.amplitude <= 0:
            raise DomainError("sign-periodic amplitude must be positive")
        if self.sign not in (-1, 1):
            raise DomainError("sign must be +1 or -1")

    def _value(self, t):
        arg = self.amplitude * math.pi * t + self.phase
        c = math.cos(arg)
        if abs(c) < 1e-9:
            # at a switching instant: limit from above
            c = -math.sin(arg)
        s = 1.0 if c >= 0 else -1.0
        return 0.5 * self.amplitude * (1.0 + self.sign * s)

    def _discontinuities(self, t0, t1):
        # zeros of cos(a*pi*t + phase): t_k = (pi/2 + k*pi - phase) / (a*pi)
        a = self.amplitude
        k_lo = math.floor((a * math.pi * t0 + self.phase - math.pi / 2) / math.pi) - 1
        k_hi = math.ceil((a * math.pi * t1 + self.phase - math.pi / 2) / math.pi) + 1
        out = []
        for k in range(k_lo, k_hi + 1):
            tk = (math.pi / 2 + k * math.pi - self.phase) / (a * math.pi)
            if t0 + BREAKPOINT_DEDUP_TOL < tk <= t1 + BREAKPOINT_DEDUP_TOL:
                out.append(min(tk, t1))
        return out

    @property
    def period(self) -> float:
        return 2.0 / self.amplitude


@dataclass(frozen=True)
class Difference(RateFunction):
    """Pointwise difference a(t) - b(t) of two rate functions."""

    a: RateFunction
    b: RateFunction

    def _value(self, t):
        return self.a.evaluate(t) - self.b.evaluate(t)

    def _discontinuities(self, t0, t1):
        out = list(self.a._discontinuities(t0, t1))
        out.extend(self.b._discontinuities(t0, t1))
        return out

    def integral(self, t0, t1):
        return self.a.integral(t0, t1) - self.b.integral(t0, t1)


@dataclass(frozen=True)
class Tabulated(RateFunction):
    """Sampled rate with previous-sample (step) interpolation.

    Defined on [times[0], times[-1]] only; evaluation outside the tabulated
    range is a domain error.
    """

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(x) for x in self.times))
        object.__setattr__(self, "values", tuple(float(x) for x in self.values))
        if len(self.times) != len(self.values) or not self.times:
            raise DomainError("tabulated rate needs matching, nonempty times and values")
        if any(b <= a for a, b in zip(self.times[:-1], self.times[1:])):
            raise DomainError("tabulated times must be strictly increasing")

    def _value(self, t):
        if t < self.times[0] or t > self.times[-1]:
            raise DomainError(
                f"t={t} outside tabulated range [{self.times[0]}, {self.times[-1]}]"
            )
        idx = min(bisect_right(self.times, t) - 1, len(self.values) - 1)
        return self.values[idx]

    def _discontinuities(self, t0, t1):
        return [
            tk
            for i, tk in enumerate(self.times[1:], start=1)
            if t0 < tk <= t1 and self.values[i] != self.values[i - 1]
        ]


def _dedup(points: Iterable[float]) -> list[float]:
    out: list[float] = []
    for p in sorted(points):
        if not out or p - out[-1] > BREAKPOINT_DEDUP_TOL:
            out.append(p)
    return out


def collect_breakpoints(fns: Sequence[RateFunction], t0: float, t1: float) -> list[float]:
    """Union of the discontinuity times of several rate functions."""
    pts: list[float] = []
    for f in fns:
        pts.extend(f.breakpoints(t0, t1))
    return _dedup(pts)


def time_grid(
    critical: Sequence[float], t_end: float, dt: float, extra: Sequence[float] = ()
) -> np.ndarray:
    """Step grid on [0, t_end] with nominal step dt.

    The grid contains 0, t_end, every critical point (rate discontinuities)
    and every extra point; each gap is subdivided uniformly so no step
    exceeds dt and no step straddles a discontinuity.
    """
    if dt <= 0:
        raise DomainError(f"time step must be positive, got dt={dt}")
    if t_end < 0:
        raise DomainError(f"t_end must be nonnegative, got {t_end}")
    anchors = _dedup(
        [0.0, t_end]
        + [p for p in critical if 0.0 < p < t_end]
        + [p for p in extra if 0.0 < p < t_end]
    )
    edges = [0.0]
    for a, b in zip(anchors[:-1], anchors[1:]):
        n = max(1, math.ceil((b - a) / dt - 1e-9))
        h = (b - a) / n
        edges.extend(a + j * h for j in range(1, n))
        edges.append(b)
    return np.asarray(edges)


def segment_ranges(times: np.ndarray, critical: Sequence[float]) -> list[tuple[int, int]]:
    """Index ranges [i, j] of a step grid between consecutive critical points.

    Within each range the grid spacing is uniform and no rate discontinuity
    occurs, so a constant one-step propagator is valid throughout.
    """
    t_end = float(times[-1])
    anchors = _dedup([0.0, t_end] + [c for c in critical if 0.0 < c < t_end])
    idx = [int(np.argmin(np.abs(times - a))) for a in anchors]
    return [(i, j) for i, j in zip(idx[:-1], idx[1:]) if j > i]


def negative_intervals(f: RateFunction, t0: float, t1: float) -> list[tuple[float, float]]:
    """Maximal intervals within [t0, t1] on which f is negative."""
    edges = [t0] + [b for b in f.breakpoints(t0, t1) if t0 < b < t1] + [t1]
    out: list[tuple[float, float]] = []
    for a, b in zip(edges[:-1], edges[1:]):
        if f.evaluate(0.5 * (a + b)) < 0:
            if out and out[-1][1] == a:
                out[-1] = (out[-1][0], b)
            else:
                out.append((a, b))
    return out


def last_negative_time(fns: Sequence[RateFunction], t0: float, t1: float) -> float | None:
    """Latest time in [t0, t1] up to which any of the rates is negative."""
    last = None
    for f in fns:
        for _, b in negative_intervals(f, t0, t1):
            last = b if last is None else max(last, b)
    return last
