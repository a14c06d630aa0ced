"""Classical rate equations with possibly negative rates.

Conventions: gamma_kl is the rate of transitions l -> k (it multiplies p_l in
the gain term of state k).  The generator matrix Q has Q[k, l] = gamma_kl(t)
for k != l and Q[l, l] = -(total outflow rate from l), so dP/dt = Q P and the
columns of Q sum to zero.

A negative gamma_kl is a reversed process: it moves probability (or ensemble
members) from k back to l with the effective positive rate
|gamma_kl| * p_l / p_k, which depends on the earlier states of the system.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, PositivityError, StepSizeError, UndefinedSourceError
from .rates import (
    Constant,
    Difference,
    PiecewiseConstant,
    RateFunction,
    SignPeriodic,
    collect_breakpoints,
    segment_ranges,
    time_grid,
)

logger = logging.getLogger(__name__)

PROBABILITY_SUM_TOL = 1e-9
#: Hard bound on the summed positive-rate step probability of one member.
MAX_STEP_PROBABILITY = 0.1


class ProbabilityVector:
    """Classical state: nonnegative entries summing to one."""

    __slots__ = ("entries",)

    def __init__(self, entries):
        p = np.asarray(entries, dtype=float).reshape(-1)
        if abs(p.sum() - 1.0) > PROBABILITY_SUM_TOL:
            raise DomainError(f"probabilities sum to {p.sum()}, not 1")
        if np.any(p < -1e-12):
            raise DomainError("probability entries must be nonnegative")
        self.entries = np.where((p < 0) & (p > -1e-12), 0.0, p)

    @property
    def dim(self) -> int:
        return self.entries.size

    def __repr__(self):
        return f"ProbabilityVector({self.entries!r})"


@dataclass(frozen=True)
class RateMatrixSpec:
    """Classical chain: rates[(k, l)] is the rate of transitions l -> k."""

    n: int
    rates: dict[tuple[int, int], RateFunction]
    topology: str = ""

    def __post_init__(self):
        for (k, l) in self.rates:
            if k == l:
                raise DomainError(f"self-rate ({k},{k}) is not allowed")
            if not (0 <= k < self.n and 0 <= l < self.n):
                raise DomainError(f"rate index ({k},{l}) outside 0..{self.n - 1}")

    def breakpoints(self, t0: float, t1: float) -> list[float]:
        return collect_breakpoints(list(self.rates.values()), t0, t1)

    def sorted_items(self):
        return sorted(self.rates.items())


@dataclass
class ClassicalEnsemble:
    """Integer occupation counts over the chain states."""

    counts: np.ndarray
    total: int

    def __init__(self, counts):
        self.counts = np.asarray(counts, dtype=np.int64).copy()
        if np.any(self.counts < 0):
            raise DomainError("ensemble counts must be nonnegative")
        self.total = int(self.counts.sum())

    def fractions(self) -> np.ndarray:
        return self.counts / self.total


@dataclass
class ChainTrajectory:
    """Aggregated jump events of one sampled ensemble run."""

    seed: int
    events: list[tuple[float, int, int, int]] = field(default_factory=list)
    # each event: (time, from_state, to_state, members_moved)


@dataclass
class ClassicalResult:
    times: np.ndarray
    probabilities: np.ndarray  # shape (T, n)
    step: float


@dataclass
class SampleResult:
    times: np.ndarray
    counts: np.ndarray  # shape (T, n), integer
    total: int
    step: float
    trajectory: ChainTrajectory
    forward_jumps: int
    reverse_jumps: int
    max_step_probability: float
    reverse_prob_clamped: int

    def fractions(self) -> np.ndarray:
        return self.counts / self.total


def rate_rhs(spec: RateMatrixSpec, p, t: float) -> np.ndarray:
    """dp_k/dt = sum_{l != k} (gamma_kl(t) p_l - gamma_lk(t) p_k)."""
    v = p.entries if isinstance(p, ProbabilityVector) else np.asarray(p, dtype=float)
    if v.size != spec.n:
        raise DomainError(f"probability vector size {v.size} does not match n={spec.n}")
    out = np.zeros(spec.n)
    for (k, l), f in spec.rates.items():
        g = f.evaluate(t)
        out[k] += g * v[l]
        out[l] -= g * v[l]
    return out


def q_matrix(spec: RateMatrixSpec, t: float) -> np.ndarray:
    """Generator matrix with dP/dt = Q P; columns sum to zero."""
    q = np.zeros((spec.n, spec.n))
    for (k, l), f in spec.rates.items():
        g = f.evaluate(t)
        q[k, l] += g
        q[l, l] -= g
    return q


def validate_markov(spec: RateMatrixSpec, t_grid) -> tuple[bool, list[tuple[int, int, float]]]:
    """True iff every rate is nonnegative on the grid; lists violations."""
    incidents = []
    for t in t_grid:
        for (k, l), f in spec.sorted_items():
            if f.evaluate(float(t)) < 0:
                incidents.append((k, l, float(t)))
    return (not incidents), incidents


def effective_rate_classical(gamma: float, p, k: int, l: int) -> float:
    """Effective positive loss rate |gamma_kl| p_l / p_k for a negative gain rate."""
    if gamma >= 0:
        raise DomainError(f"effective rate requires a negative rate, got {gamma}")
    v = p.entries if isinstance(p, ProbabilityVector) else np.asarray(p, dtype=float)
    if v[l] <= 0:
        return 0.0
    if v[k] <= 0:
        raise UndefinedSourceError(
            f"effective rate undefined: p_{k}=0 while p_{l}={v[l]:.3g}>0"
        )
    return abs(gamma) * v[l] / v[k]


def _rk4_step_matrix(q: np.ndarray, h: float) -> np.ndarray:
    a = h * q
    a2 = a @ a
    return np.eye(q.shape[0]) + a + a2 / 2.0 + (a2 @ a) / 6.0 + (a2 @ a2) / 24.0


def integrate(
    spec: RateMatrixSpec,
    p0,
    t_end: float,
    dt: float,
    store_stride: int = 1,
) -> ClassicalResult:
    """RK4 on the rate equation, steps aligned to the rate breakpoints.

    Positivity is monitored: a component below -1e-8 aborts (an unphysical
    negative-rate specification); output values within 1e-12 of zero are
    clamped to zero.
    """
    if dt <= 0:
        raise DomainError(f"time step must be positive, got dt={dt}")
    p = (p0.entries if isinstance(p0, ProbabilityVector) else ProbabilityVector(p0).entries).copy()
    critical = spec.breakpoints(0.0, t_end)
    times = time_grid(critical, t_end, dt)
    out_times = [0.0]
    out_probs = [p.copy()]
    for i0, i1 in segment_ranges(times, critical):
        h = times[i0 + 1] - times[i0]
        trans = _rk4_step_matrix(q_matrix(spec, float(times[i0])), float(h))
        for k in range(i0, i1):
            p = trans @ p
            if p.min() < -1e-8:
                bad = int(p.argmin())
                raise PositivityError(
                    f"probability p_{bad} = {p[bad]:.3g} < -1e-8 at t={times[k + 1]:.6g}",
                    state=bad,
                    time=float(times[k + 1]),
                )
            if (k + 1) % store_stride == 0 or k + 1 == len(times) - 1:
                out_times.append(float(times[k + 1]))
                out_probs.append(np.where((p < 0) & (p > -1e-12), 0.0, p))
    return ClassicalResult(np.asarray(out_times), np.asarray(out_probs), dt)


def two_state_tables(
    gamma: float, s1: float, s2: float, horizon: float = 200.0
) -> tuple[PiecewiseConstant, PiecewiseConstant]:
    """Alternating rate tables gamma_1 (on first) and gamma_2 (off first).

    The tables continue periodically with period 2*(s2 - s1) beyond s2;
    pieces are materialized up to `horizon`.
    """
    if not (0 < s1 < s2):
        raise DomainError(f"need 0 < s1 < s2, got s1={s1}, s2={s2}")
    if gamma <= 0:
        raise DomainError(f"amplitude must be positive, got {gamma}")
    breaks = [s1]
    seg = s2 - s1
    while breaks[-1] < horizon:
        breaks.append(breaks[-1] + seg)
    g1_vals = [gamma if i % 2 == 0 else 0.0 for i in range(len(breaks) + 1)]
    g2_vals = [0.0 if i % 2 == 0 else gamma for i in range(len(breaks) + 1)]
    g1 = PiecewiseConstant(tuple(breaks), tuple(g1_vals))
    g2 = PiecewiseConstant(tuple(breaks), tuple(g2_vals))
    return g1, g2


def build_two_state(
    variant: str, gamma: float, s1: float, s2: float, horizon: float = 200.0
) -> RateMatrixSpec:
    """Two-state model: alternating channels (markov) or one signed rate (nonmarkov)."""
    g1, g2 = two_state_tables(gamma, s1, s2, horizon)
    if variant == "markov":
        rates = {(1, 0): g1, (0, 1): g2}
    elif variant == "nonmarkov":
        rates = {(1, 0): Difference(g1, g2)}
    else:
        raise DomainError(f"unknown two-state variant {variant!r}")
    return RateMatrixSpec(2, rates, topology=f"two-state/{variant}")


def ring_rate_pair(gamma: float) -> tuple[SignPeriodic, SignPeriodic]:
    """The square waves f (phase -pi/2) and g (phase +pi/2) of the ring models."""
    f = SignPeriodic(gamma, -math.pi / 2, 1)
    g = SignPeriodic(gamma, math.pi / 2, 1)
    return f, g


def build_ring(variant: str, gamma: float, n: int = 4) -> RateMatrixSpec:
    """Four named ring configurations on n cyclic states.

    a: clockwise rate r = f - g (oscillating sign), no anti-clockwise rates.
    b: Markovian counterpart of (a): clockwise f, anti-clockwise g.
    c: constant clockwise rate, anti-clockwise rate r = f - g.
    d: Markovian counterpart of (c): clockwise gamma+g, anti-clockwise gamma-g.
    """
    if gamma <= 0:
        raise DomainError(f"amplitude must be positive, got {gamma}")
    if n < 3:
        raise DomainError(f"ring needs at least 3 states, got n={n}")
    f, g = ring_rate_pair(gamma)
    r = Difference(f, g)
    rates: dict[tuple[int, int], RateFunction] = {}

    def clockwise(fn):
        for i in range(n):
            rates[((i + 1) % n, i)] = fn

    def anticlockwise(fn):
        for i in range(n):
            rates[((i - 1) % n, i)] = fn

    if variant == "a":
        clockwise(r)
    elif variant == "b":
        clockwise(f)
        anticlockwise(g)
    elif variant == "c":
        clockwise(Constant(gamma))
        anticlockwise(r)
    elif variant == "d":
        g_complement = SignPeriodic(gamma, math.pi / 2, -1)  # gamma - g
        clockwise(Difference(Constant(2 * gamma), g_complement))  # gamma + g
        anticlockwise(g_complement)
    else:
        raise DomainError(f"unknown ring variant {variant!r}")
    return RateMatrixSpec(n, rates, topology=f"ring/{variant}")


def sample_ensemble(
    spec: RateMatrixSpec,
    counts0,
    t_end: float,
    dt: float,
    seed: int,
    store_stride: int = 1,
) -> SampleResult:
    """Fixed-step count-level sampling of the (non-)Markov chain.

    Positive rates move members forward with per-member probability
    gamma*dt; a negative gamma_kl moves members from k back to l with
    per-member probability |gamma_kl| * (n_l / n_k) * dt (zero when either
    count is zero).  Deterministic given the seed.
    """
    ens = counts0 if isinstance(counts0, ClassicalEnsemble) else ClassicalEnsemble(counts0)
    counts = ens.counts.copy()
    if counts.size != spec.n:
        raise DomainError(f"counts size {counts.size} does not match n={spec.n}")
    times = time_grid(spec.breakpoints(0.0, t_end), t_end, dt)
    rng = np.random.default_rng([seed])
    items = spec.sorted_items()
    out_times = [0.0]
    out_counts = [counts.copy()]
    trajectory = ChainTrajectory(seed)
    forward = reverse = clamped = 0
    max_p = 0.0
    for s in range(len(times) - 1):
        t = float(times[s])
        h = float(times[s + 1] - times[s])
        gvals = [(k, l, f.evaluate(t)) for (k, l), f in items]
        snapshot = counts.copy()
        delta = np.zeros(spec.n, dtype=np.int64)
        for src in range(spec.n):
            n_src = int(snapshot[src])
            if n_src == 0:
                continue
            dests: list[tuple[int, float, bool]] = []  # (dest, prob, is_reverse)
            markov_p = 0.0
            total_p = 0.0
            for k, l, g in gvals:
                if g > 0 and l == src:
                    p = g * h
                    markov_p += p
                    total_p += p
                    dests.append((k, p, False))
                elif g < 0 and k == src:
                    n_tgt = int(snapshot[l])
                    if n_tgt == 0:
                        continue
                    p = abs(g) * (n_tgt / n_src) * h
                    if p > MAX_STEP_PROBABILITY:
                        clamped += 1
                        p = min(p, 1.0)
                    total_p += p
                    dests.append((l, p, True))
            if markov_p > MAX_STEP_PROBABILITY:
                raise StepSizeError(
                    f"summed jump probability {markov_p:.3g} exceeds "
                    f"{MAX_STEP_PROBABILITY} at t={t:.6g}; reduce dt"
                )
            max_p = max(max_p, total_p)
            if not dests:
                continue
            probs = [p for _, p, _ in dests]
            if total_p > 1.0:
                probs = [p / total_p for p in probs]
            draws = rng.multinomial(n_src, probs + [max(0.0, 1.0 - sum(probs))])
            for (dest, _, is_rev), moved in zip(dests, draws[:-1]):
                if moved == 0:
                    continue
                delta[src] -= moved
                delta[dest] += moved
                trajectory.events.append((t, src, dest, int(moved)))
                if is_rev:
                    reverse += int(moved)
                else:
                    forward += int(moved)
        counts = counts + delta
        if counts.sum() != ens.total:
            raise RuntimeError("ensemble count conservation violated")  # pragma: no cover
        if (s + 1) % store_stride == 0 or s + 1 == len(times) - 1:
            out_times.append(float(times[s + 1]))
            out_counts.append(counts.copy())
    return SampleResult(
        np.asarray(out_times),
        np.asarray(out_counts),
        ens.total,
        dt,
        trajectory,
        forward,
        reverse,
        max_p,
        clamped,
    )
