"""Non-Markovian quantum jump engine.

The ensemble is stored as distinct state vectors with integer occupation
counts N_alpha (sum N_alpha = N).  Positive channels produce ordinary jumps;
a channel with a temporarily negative rate reverses the jump direction: a
member in the jump-result state |psi_alpha> = L|psi_alpha'> / ||.|| returns
to the target |psi_alpha'> with probability

    P = (N_alpha' / N_alpha) * |gamma(t)| * dt * <psi_alpha'| L^+L |psi_alpha'>,

which vanishes when the target state is unoccupied: jumps that never
occurred cannot be reversed.

The ensemble is one coupled stochastic system (probabilities depend on the
counts), so steps are sequential and a single PCG64 stream seeded from the
run seed drives all draws.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, StepSizeError, UndefinedSourceError
from .quantum import (
    Channel,
    StateVector,
    TimeLocalGenerator,
    effective_hamiltonian,
    phase_distance,
)
from .rates import last_negative_time, time_grid

logger = logging.getLogger(__name__)

MATCH_TOL = 1e-9
#: Hard bound on the summed Markovian (positive-channel) step probability.
MAX_STEP_PROBABILITY = 0.1


@dataclass(frozen=True)
class ReverseJumpOperator:
    """Bookkeeping record |psi_target><psi_source| for a reversed channel."""

    source: int
    target: int
    label: str


class JumpEnsemble:
    """Distinct state vectors with integer occupation counts."""

    def __init__(self, states, counts):
        self.states: list[np.ndarray] = [
            np.asarray(s.amplitudes if isinstance(s, StateVector) else s, dtype=complex)
            for s in states
        ]
        self.counts = np.asarray(counts, dtype=np.int64).copy()
        if len(self.states) != len(self.counts):
            raise DomainError("states and counts length mismatch")
        if np.any(self.counts < 0):
            raise DomainError("occupation counts must be nonnegative")

    @classmethod
    def from_pure(cls, psi: StateVector, n: int) -> "JumpEnsemble":
        return cls([psi.normalized().amplitudes], [n])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def find(self, psi, tol: float = MATCH_TOL) -> int | None:
        v = psi.amplitudes if isinstance(psi, StateVector) else np.asarray(psi)
        for idx, s in enumerate(self.states):
            if phase_distance(s, v) < tol:
                return idx
        return None

    def density_matrix(self) -> np.ndarray:
        d = self.states[0].size
        rho = np.zeros((d, d), dtype=complex)
        n = self.total
        for s, c in zip(self.states, self.counts):
            if c:
                rho += (c / n) * np.outer(s, s.conj())
        return rho

    def pruned(self) -> "JumpEnsemble":
        keep = [i for i, c in enumerate(self.counts) if c > 0]
        return JumpEnsemble([self.states[i] for i in keep], self.counts[keep])

    def copy(self) -> "JumpEnsemble":
        return JumpEnsemble([s.copy() for s in self.states], self.counts)


@dataclass
class NmqjStats:
    """Instrumentation counters for one non-Markovian run."""

    forward_jumps: int = 0
    reverse_jumps: int = 0
    zero_target_attempts: int = 0
    max_step_probability: float = 0.0
    reverse_prob_clamped: int = 0
    forward_events: list[tuple[float, str, int]] = field(default_factory=list)
    reverse_events: list[tuple[float, str, int, int, int]] = field(default_factory=list)


@dataclass
class NmqjResult:
    times: np.ndarray
    states: list[np.ndarray]
    step: float
    n_trajectories: int
    stats: NmqjStats

    def populations(self) -> np.ndarray:
        return np.array([np.diag(s).real for s in self.states])


def reverse_target(
    ensemble: JumpEnsemble, channel: Channel | np.ndarray, alpha: int, tol: float = MATCH_TOL
) -> int | None:
    """Member index alpha' with L|psi_alpha'> / ||.|| equal to |psi_alpha>.

    Returns None when no member qualifies.  If several members qualify
    within the matching tolerance the one with the larger count is chosen
    and a warning is logged.
    """
    op = channel.operator if isinstance(channel, Channel) else np.asarray(channel, dtype=complex)
    target_state = ensemble.states[alpha]
    candidates = []
    for j, s in enumerate(ensemble.states):
        v = op @ s
        norm = np.linalg.norm(v)
        if norm <= 1e-12:
            continue
        if phase_distance(v / norm, target_state) < tol:
            candidates.append(j)
    if not candidates:
        return None
    if len(candidates) > 1:
        candidates.sort(key=lambda j: (-ensemble.counts[j], j))
        logger.warning(
            "ambiguous reverse target for member %d: candidates %s; choosing %d",
            alpha,
            candidates,
            candidates[0],
        )
    return candidates[0]


def reverse_jump_probability(
    ensemble: JumpEnsemble,
    alpha: int,
    alpha_prime: int,
    channel: Channel,
    t: float,
    dt: float,
) -> float:
    """P = (N_alpha'/N_alpha) |gamma(t)| dt <psi_alpha'|L^+L|psi_alpha'>."""
    gamma = channel.rate.evaluate(t)
    if gamma >= 0:
        raise DomainError(f"reversed jumps require a negative rate, got gamma={gamma} at t={t}")
    n_src = int(ensemble.counts[alpha])
    if n_src == 0:
        raise UndefinedSourceError(f"reverse source member {alpha} has zero occupation")
    n_tgt = int(ensemble.counts[alpha_prime])
    if n_tgt == 0:
        return 0.0
    v = channel.operator @ ensemble.states[alpha_prime]
    return (n_tgt / n_src) * abs(gamma) * dt * np.vdot(v, v).real


def effective_rate(
    ensemble: JumpEnsemble, alpha: int, alpha_prime: int, channel: Channel, t: float
) -> float:
    """gamma_tilde = |gamma(t)| * N_alpha' / N_alpha."""
    gamma = channel.rate.evaluate(t)
    if gamma >= 0:
        raise DomainError(f"effective rate requires a negative rate, got gamma={gamma} at t={t}")
    n_src = int(ensemble.counts[alpha])
    if n_src == 0:
        raise UndefinedSourceError(f"reverse source member {alpha} has zero occupation")
    return abs(gamma) * int(ensemble.counts[alpha_prime]) / n_src


def _advance_states(g: TimeLocalGenerator, states, t: float, dt: float):
    heff = effective_hamiltonian(g, t)
    out = []
    for s in states:
        phi = s - 1j * dt * (heff @ s)
        n2 = np.vdot(phi, phi).real
        if n2 < 1e-12:
            raise StepSizeError(f"deterministic step underflow at t={t}; reduce dt")
        out.append(phi / np.sqrt(n2))
    return out


def step(
    g: TimeLocalGenerator,
    ensemble: JumpEnsemble,
    t: float,
    dt: float,
    rng: np.random.Generator,
    stats: NmqjStats | None = None,
) -> JumpEnsemble:
    """One coupled ensemble step: sample jumps from the time-t counts and
    states, apply all count moves simultaneously, then advance every member
    state deterministically.  Total occupation is conserved exactly.
    """
    if dt <= 0:
        raise DomainError(f"time step must be positive, got dt={dt}")
    if stats is None:
        stats = NmqjStats()
    states = [s.copy() for s in ensemble.states]
    counts0 = ensemble.counts.copy()
    new_counts = counts0.astype(np.int64).copy()
    pending_new: list[tuple[np.ndarray, int]] = []  # (state, count) for unmatched results
    gammas = [ch.rate.evaluate(t) for ch in g.channels]

    for a in range(len(states)):
        n_a = int(counts0[a])
        if n_a == 0:
            continue
        outcomes: list[tuple[float, object]] = []  # (prob, action)
        markov_p = 0.0
        total_p = 0.0
        for i, ch in enumerate(g.channels):
            gamma = gammas[i]
            if gamma > 0:
                v = ch.operator @ states[a]
                q = np.vdot(v, v).real
                p = gamma * dt * q
                if p <= 0:
                    continue
                markov_p += p
                total_p += p
                outcomes.append((p, ("forward", i, v / np.sqrt(q))))
            elif gamma < 0:
                ap = reverse_target(ensemble, ch, a)
                if ap is None:
                    continue
                if counts0[ap] == 0:
                    stats.zero_target_attempts += 1
                    continue
                v = ch.operator @ states[ap]
                q = np.vdot(v, v).real
                p = (counts0[ap] / n_a) * abs(gamma) * dt * q
                if p > MAX_STEP_PROBABILITY:
                    # occupation-ratio probabilities legitimately exceed the
                    # Markovian guard near a complete return; clamp, do not abort
                    stats.reverse_prob_clamped += 1
                    p = min(p, 1.0)
                total_p += p
                outcomes.append((p, ("reverse", i, ap)))
        if markov_p > MAX_STEP_PROBABILITY:
            raise StepSizeError(
                f"summed jump probability {markov_p:.3g} exceeds "
                f"{MAX_STEP_PROBABILITY} at t={t:.6g}; reduce dt"
            )
        stats.max_step_probability = max(stats.max_step_probability, total_p)
        if not outcomes:
            continue
        probs = [p for p, _ in outcomes]
        scale = 1.0
        if total_p > 1.0:
            scale = 1.0 / total_p
            probs = [p * scale for p in probs]
        draws = rng.multinomial(n_a, probs + [max(0.0, 1.0 - sum(probs))])
        for (p, action), n_moved in zip(outcomes, draws[:-1]):
            if n_moved == 0:
                continue
            kind = action[0]
            if kind == "forward":
                _, i, result = action
                j = None
                for idx, s in enumerate(states):
                    if phase_distance(s, result) < MATCH_TOL:
                        j = idx
                        break
                if j is None:
                    for k, (s, _) in enumerate(pending_new):
                        if phase_distance(s, result) < MATCH_TOL:
                            pending_new[k] = (s, pending_new[k][1] + int(n_moved))
                            break
                    else:
                        pending_new.append((result, int(n_moved)))
                else:
                    new_counts[j] += n_moved
                new_counts[a] -= n_moved
                stats.forward_jumps += int(n_moved)
                stats.forward_events.append((float(t), g.channels[i].label, int(n_moved)))
            else:
                _, i, ap = action
                new_counts[a] -= n_moved
                new_counts[ap] += n_moved
                stats.reverse_jumps += int(n_moved)
                stats.reverse_events.append(
                    (float(t), g.channels[i].label, a, ap, int(n_moved))
                )

    for s, c in pending_new:
        states.append(s)
        new_counts = np.append(new_counts, c)

    if new_counts.sum() != counts0.sum():
        raise RuntimeError("ensemble count conservation violated")  # pragma: no cover

    states = _advance_states(g, states, t, dt)

    # merge members that collided after the deterministic advance
    merged_states: list[np.ndarray] = []
    merged_counts: list[int] = []
    for s, c in zip(states, new_counts):
        for k, ms in enumerate(merged_states):
            if phase_distance(ms, s) < MATCH_TOL:
                merged_counts[k] += int(c)
                break
        else:
            merged_states.append(s)
            merged_counts.append(int(c))
    return JumpEnsemble(merged_states, merged_counts)


def run_ensemble_nm(
    g: TimeLocalGenerator,
    psi0: StateVector,
    t_end: float,
    dt: float,
    n_total: int,
    seed: int,
    store_stride: int = 1,
) -> NmqjResult:
    """Evolve one coupled jump ensemble of size N; deterministic given seed."""
    if n_total < 1:
        raise DomainError(f"ensemble size must be >= 1, got {n_total}")
    times = time_grid(g.breakpoints(0.0, t_end), t_end, dt)
    rng = np.random.default_rng([seed])
    ens = JumpEnsemble.from_pure(psi0, n_total)
    stats = NmqjStats()
    last_neg = last_negative_time([ch.rate for ch in g.channels], 0.0, t_end)
    out_times = [0.0]
    out_states = [ens.density_matrix()]
    for s in range(len(times) - 1):
        t = float(times[s])
        h = float(times[s + 1] - times[s])
        ens = step(g, ens, t, h, rng, stats)
        if last_neg is None or times[s + 1] >= last_neg - 1e-12:
            ens = ens.pruned()
        if (s + 1) % store_stride == 0 or s + 1 == len(times) - 1:
            out_times.append(float(times[s + 1]))
            out_states.append(ens.density_matrix())
    return NmqjResult(np.asarray(out_times), out_states, dt, n_total, stats)
