"""Markovian Monte Carlo wave-function unraveling.

Deterministic non-Hermitian evolution (first-order step with the effective
Hamiltonian, then renormalization) interrupted by quantum jumps.  Requires
all rates to be nonnegative over the simulated horizon; negative rates belong
to the non-Markovian ensemble engine.

RNG contract: numpy PCG64 seeded with SeedSequence([seed, k]) for trajectory
k, one uniform variate per step, consumed in step order.  The ensemble engine
reproduces trajectory k of run_ensemble bit for bit.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DomainError,
    ImpossibleJumpError,
    NegativeRateError,
    StepSizeError,
)
from .quantum import Channel, StateVector, TimeLocalGenerator, effective_hamiltonian
from .rates import time_grid

#: Hard per-step bound on the summed jump probability of a trajectory.
MAX_STEP_PROBABILITY = 0.1


@dataclass
class Trajectory:
    """One stochastic realization."""

    seed: int
    index: int
    times: np.ndarray
    states: list[np.ndarray]
    jump_records: list[tuple[float, str]] = field(default_factory=list)


@dataclass
class EnsembleResult:
    """Ensemble-averaged density matrices plus jump bookkeeping."""

    times: np.ndarray
    states: list[np.ndarray]
    step: float
    n_trajectories: int
    jump_records: list[tuple[float, int, str]]
    max_step_probability: float

    def populations(self) -> np.ndarray:
        return np.array([np.diag(s).real for s in self.states])


def _require_positive_rates(g: TimeLocalGenerator, t_end: float) -> None:
    for ch in g.channels:
        edges = [0.0] + [b for b in ch.rate.breakpoints(0.0, t_end) if b < t_end] + [t_end]
        for a, b in zip(edges[:-1], edges[1:]):
            if ch.rate.evaluate(0.5 * (a + b)) < 0:
                raise NegativeRateError(
                    f"negative rate in Markovian engine (channel {ch.label!r} on "
                    f"[{a:.6g}, {b:.6g})); use the non-Markovian jump engine"
                )


def deterministic_step(g: TimeLocalGenerator, psi: StateVector, t: float, dt: float) -> StateVector:
    """One renormalized first-order step with the effective Hamiltonian."""
    if dt <= 0:
        raise DomainError(f"time step must be positive, got dt={dt}")
    heff = effective_hamiltonian(g, t)
    phi = psi.amplitudes - 1j * dt * (heff @ psi.amplitudes)
    n2 = np.vdot(phi, phi).real
    if n2 < 1e-12:
        raise StepSizeError(f"deterministic step underflow at t={t}: norm^2={n2:.3g}")
    return StateVector(phi / np.sqrt(n2))


def jump_probability(
    g: TimeLocalGenerator, psi: StateVector, channel: int, t: float, dt: float
) -> float:
    """p = gamma_i(t) * dt * <psi| L_i^+ L_i |psi>."""
    ch = g.channels[channel]
    gamma = ch.rate.evaluate(t)
    if gamma < 0:
        raise NegativeRateError(
            f"negative rate in Markovian engine (channel {ch.label!r} at t={t}); "
            "use the non-Markovian jump engine"
        )
    v = ch.operator @ psi.amplitudes
    p = gamma * dt * np.vdot(v, v).real
    if p > MAX_STEP_PROBABILITY:
        raise StepSizeError(
            f"jump probability {p:.3g} exceeds {MAX_STEP_PROBABILITY} at t={t}; reduce dt"
        )
    return p


def apply_jump(psi: StateVector, channel: Channel | np.ndarray) -> StateVector:
    """L psi / ||L psi||."""
    op = channel.operator if isinstance(channel, Channel) else np.asarray(channel, dtype=complex)
    v = op @ psi.amplitudes
    n = np.linalg.norm(v)
    if n <= 1e-12:
        raise ImpossibleJumpError("jump operator annihilates this state")
    return StateVector(v / n)


def _step_tables(g: TimeLocalGenerator, times: np.ndarray):
    """Per-step first-order propagator and gamma*h coefficients."""
    n_steps = len(times) - 1
    d = g.dim
    n_ch = len(g.channels)
    props = np.empty((n_steps, d, d), dtype=complex)
    pcoef = np.empty((n_steps, n_ch))
    eye = np.eye(d)
    for s in range(n_steps):
        t = times[s]
        h = times[s + 1] - times[s]
        props[s] = eye - 1j * h * effective_hamiltonian(g, t)
        for i, ch in enumerate(g.channels):
            pcoef[s, i] = ch.rate.evaluate(t) * h
    return props, pcoef


def _run_chunk(g, psi0, times, props, pcoef, seed, k0, k1, collect_jumps):
    d = g.dim
    n_steps = len(times) - 1
    m = k1 - k0
    ops = [np.ascontiguousarray(ch.operator) for ch in g.channels]
    labels = [ch.label for ch in g.channels]
    uni = np.empty((m, n_steps))
    for j, k in enumerate(range(k0, k1)):
        uni[j] = np.random.default_rng([seed, k]).random(n_steps)
    psi = np.tile(psi0, (m, 1)).astype(complex)
    rho_sum = np.zeros((n_steps + 1, d, d), dtype=complex)
    rho_sum[0] = m * np.outer(psi0, psi0.conj())
    jumps: list[tuple[float, int, str]] = []
    max_p = 0.0
    for s in range(n_steps):
        probs = np.empty((m, len(ops)))
        l_psi = []
        for i, op in enumerate(ops):
            lp = psi @ op.T
            l_psi.append(lp)
            probs[:, i] = pcoef[s, i] * np.einsum("md,md->m", lp, lp.conj()).real
        ptot = probs.sum(axis=1)
        step_max = float(ptot.max()) if m else 0.0
        if step_max > MAX_STEP_PROBABILITY:
            raise StepSizeError(
                f"summed jump probability {step_max:.3g} exceeds "
                f"{MAX_STEP_PROBABILITY} at t={times[s]:.6g}; reduce dt"
            )
        max_p = max(max_p, step_max)
        u = uni[:, s]
        new_psi = np.empty_like(psi)
        lower = np.zeros(m)
        jumped = np.zeros(m, dtype=bool)
        for i in range(len(ops)):
            sel = (u >= lower) & (u < lower + probs[:, i])
            lower = lower + probs[:, i]
            if np.any(sel):
                jp = l_psi[i][sel]
                norms = np.sqrt(np.einsum("md,md->m", jp, jp.conj()).real)
                new_psi[sel] = jp / norms[:, None]
                jumped |= sel
                if collect_jumps:
                    t_jump = float(times[s + 1])
                    jumps.extend((t_jump, k0 + int(r), labels[i]) for r in np.nonzero(sel)[0])
        nj = ~jumped
        if np.any(nj):
            phi = psi[nj] @ props[s].T
            n2 = np.einsum("md,md->m", phi, phi.conj()).real
            if n2.min() < 1e-12:
                raise StepSizeError(
                    f"deterministic step underflow at t={times[s]:.6g}; reduce dt"
                )
            new_psi[nj] = phi / np.sqrt(n2)[:, None]
        psi = new_psi
        rho_sum[s + 1] = np.einsum("mi,mj->ij", psi, psi.conj())
    return rho_sum, jumps, max_p


def run_ensemble(
    g: TimeLocalGenerator,
    psi0: StateVector,
    t_end: float,
    dt: float,
    n_trajectories: int,
    seed: int,
    *,
    workers: int | None = None,
    chunk_size: int = 2048,
    collect_jumps: bool = True,
) -> EnsembleResult:
    """Average N independent trajectories; deterministic given (seed, N, dt)."""
    if n_trajectories < 1:
        raise DomainError(f"ensemble size must be >= 1, got {n_trajectories}")
    _require_positive_rates(g, t_end)
    psi0 = psi0.normalized()
    critical = g.breakpoints(0.0, t_end)
    times = time_grid(critical, t_end, dt)
    props, pcoef = _step_tables(g, times)
    bounds = list(range(0, n_trajectories, chunk_size)) + [n_trajectories]
    chunks = [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if workers is None:
        workers = int(os.environ.get("SIM_THREADS", "1") or "1")
    args = [
        (g, psi0.amplitudes, times, props, pcoef, seed, a, b, collect_jumps)
        for a, b in chunks
    ]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _run_chunk(*a), args))
    else:
        parts = [_run_chunk(*a) for a in args]
    d = g.dim
    rho_sum = np.zeros((len(times), d, d), dtype=complex)
    jumps: list[tuple[float, int, str]] = []
    max_p = 0.0
    for part_rho, part_jumps, part_max in parts:  # fixed chunk order: deterministic
        rho_sum += part_rho
        jumps.extend(part_jumps)
        max_p = max(max_p, part_max)
    states = [rho_sum[k] / n_trajectories for k in range(len(times))]
    return EnsembleResult(times, states, dt, n_trajectories, jumps, max_p)


def run_trajectory(
    g: TimeLocalGenerator,
    psi0: StateVector,
    t_end: float,
    dt: float,
    seed: int,
    index: int = 0,
) -> Trajectory:
    """Single trajectory; identical to member `index` of run_ensemble."""
    _require_positive_rates(g, t_end)
    psi0 = psi0.normalized()
    times = time_grid(g.breakpoints(0.0, t_end), t_end, dt)
    props, pcoef = _step_tables(g, times)
    rng = np.random.default_rng([seed, index])
    psi = psi0.amplitudes.copy()
    states = [psi.copy()]
    records: list[tuple[float, str]] = []
    ops = [ch.operator for ch in g.channels]
    for s in range(len(times) - 1):
        probs = []
        l_psi = []
        for i, op in enumerate(ops):
            lp = op @ psi
            l_psi.append(lp)
            probs.append(pcoef[s, i] * np.vdot(lp, lp).real)
        ptot = sum(probs)
        if ptot > MAX_STEP_PROBABILITY:
            raise StepSizeError(
                f"summed jump probability {ptot:.3g} exceeds "
                f"{MAX_STEP_PROBABILITY} at t={times[s]:.6g}; reduce dt"
            )
        u = rng.random()
        lower = 0.0
        jumped = False
        for i, p in enumerate(probs):
            if lower <= u < lower + p:
                psi = l_psi[i] / np.linalg.norm(l_psi[i])
                records.append((float(times[s + 1]), g.channels[i].label))
                jumped = True
                break
            lower += p
        if not jumped:
            phi = psi @ props[s].T
            n2 = np.vdot(phi, phi).real
            if n2 < 1e-12:
                raise StepSizeError(
                    f"deterministic step underflow at t={times[s]:.6g}; reduce dt"
                )
            psi = phi / np.sqrt(n2)
        states.append(psi.copy())
    return Trajectory(seed, index, times, states, records)
