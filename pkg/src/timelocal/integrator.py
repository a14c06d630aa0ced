"""Deterministic propagation, the analytic two-level solution and the CP auditor.

Propagation is classic fixed-step RK4 with steps aligned to the rate
discontinuities.  Because all rate profiles are piecewise constant (and H and
the Lindblad operators are constant), the generator is constant between
breakpoints; the RK4 update there is the fixed matrix

    T = 1 + hS + (hS)^2/2 + (hS)^3/6 + (hS)^4/24

acting on the vectorized state, which is algebraically identical to the four
explicit RK4 stages and keeps long runs cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalBlowupError
from .quantum import DensityMatrix, TimeLocalGenerator
from .rates import RateFunction, segment_ranges, time_grid

CP_EIGENVALUE_TOL = 1e-8


@dataclass
class PropagationResult:
    """Density-matrix trajectory on a fixed output grid."""

    times: np.ndarray
    states: list[np.ndarray]
    step: float

    def populations(self) -> np.ndarray:
        return np.array([np.diag(s).real for s in self.states])


@dataclass
class ChoiReport:
    """Outcome of a complete-positivity check at one time."""

    time: float
    min_eigenvalue: float
    is_cp: bool
    tolerance: float


def liouvillian(g: TimeLocalGenerator, t: float) -> np.ndarray:
    """Matrix S with S @ vec(rho) = vec(drho/dt) (row-major vec)."""
    d = g.dim
    eye = np.eye(d)
    h = g.hamiltonian
    s = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for ch in g.channels:
        gamma = ch.rate.evaluate(t)
        if gamma == 0.0:
            continue
        L = ch.operator
        LdL = L.conj().T @ L
        s = s + gamma * (
            np.kron(L, L.conj())
            - 0.5 * (np.kron(LdL, eye) + np.kron(eye, LdL.T))
        )
    return s


def _rk4_step_matrix(s: np.ndarray, h: float) -> np.ndarray:
    a = h * s
    a2 = a @ a
    a3 = a2 @ a
    a4 = a2 @ a2
    return np.eye(s.shape[0]) + a + a2 / 2.0 + a3 / 6.0 + a4 / 24.0


def propagate(
    g: TimeLocalGenerator,
    rho0,
    t_end: float,
    dt: float,
    store_stride: int = 1,
) -> PropagationResult:
    """RK4 propagation of the time-local equation.

    Stored states are re-Hermitized ((rho + rho^+)/2) and trace-renormalized
    each step to suppress round-off drift.
    """
    if dt <= 0:
        raise DomainError(f"time step must be positive, got dt={dt}")
    rho = rho0.matrix if isinstance(rho0, DensityMatrix) else DensityMatrix(rho0).matrix
    d = g.dim
    if rho.shape != (d, d):
        raise DomainError(f"initial state shape {rho.shape} does not match dimension {d}")
    critical = g.breakpoints(0.0, t_end)
    times = time_grid(critical, t_end, dt)
    v = rho.reshape(-1).astype(complex)
    out_times = [0.0]
    out_states = [rho.copy()]
    for i0, i1 in segment_ranges(times, critical):
        h = times[i0 + 1] - times[i0]
        trans = _rk4_step_matrix(liouvillian(g, times[i0]), h)
        for k in range(i0, i1):
            v = trans @ v
            if not np.all(np.isfinite(v)):
                raise NumericalBlowupError(
                    f"propagation produced non-finite values at t={times[k + 1]:.6g}",
                    time=float(times[k + 1]),
                )
            m = v.reshape(d, d)
            m = 0.5 * (m + m.conj().T)
            tr = np.trace(m).real
            if abs(tr) > 1e-8:
                m = m / tr
            v = m.reshape(-1)
            if (k + 1) % store_stride == 0 or k + 1 == len(times) - 1:
                out_times.append(float(times[k + 1]))
                out_states.append(m.copy())
    return PropagationResult(np.asarray(out_times), out_states, dt)


def analytic_two_level(gamma: RateFunction, rho0, t: float) -> np.ndarray:
    """Closed-form solution for the single-channel two-level system, H=0.

    In the basis (|e>, |g>): the excited population is scaled by
    kappa(t) = exp(-integral of gamma over [0, t]) and coherences by
    sqrt(kappa).
    """
    m = rho0.matrix if isinstance(rho0, DensityMatrix) else np.asarray(rho0, dtype=complex)
    if m.shape != (2, 2):
        raise DomainError(f"analytic solution is for d=2 only, got shape {m.shape}")
    kappa = math.exp(-gamma.integral(0.0, t))
    sq = math.sqrt(kappa)
    ree = kappa * m[0, 0]
    return np.array(
        [[ree, sq * m[0, 1]], [sq * m[1, 0], 1.0 - ree]], dtype=complex
    )


def dynamical_map_grid(
    g: TimeLocalGenerator, t_grid, dt: float
) -> list[np.ndarray]:
    """Dynamical-map matrices M(t) for every t in t_grid.

    M(t) has column vec(Phi_t(E_kl)) at index k*d+l.  Built as the ordered
    product of the per-step RK4 matrices; no per-step conditioning is applied
    so the map stays exactly linear.
    """
    t_grid = [float(t) for t in t_grid]
    if any(t < 0 for t in t_grid):
        raise DomainError("map times must be nonnegative")
    if dt <= 0:
        raise DomainError(f"time step must be positive, got dt={dt}")
    t_max = max(t_grid) if t_grid else 0.0
    critical = g.breakpoints(0.0, t_max)
    times = time_grid(critical, t_max, dt, extra=t_grid)
    m = np.eye(g.dim * g.dim, dtype=complex)
    wanted = sorted(set(t_grid))
    results: dict[float, np.ndarray] = {}

    def capture(t):
        for w in wanted:
            if abs(t - w) < 1e-9 and w not in results:
                results[w] = m.copy()

    capture(0.0)
    for i0, i1 in segment_ranges(times, sorted(set(critical) | set(wanted))):
        h = times[i0 + 1] - times[i0]
        trans = _rk4_step_matrix(liouvillian(g, times[i0]), h)
        for k in range(i0, i1):
            with np.errstate(over="ignore", invalid="ignore"):
                m = trans @ m
            if not np.all(np.isfinite(m)):
                raise NumericalBlowupError(
                    f"map propagation produced non-finite values at t={times[k + 1]:.6g}",
                    time=float(times[k + 1]),
                )
        capture(times[i1])
    return [results[t] for t in t_grid]


def dynamical_map(g: TimeLocalGenerator, t: float, dt: float) -> np.ndarray:
    """The map matrix M with M @ vec(rho0) = vec(rho(t))."""
    return dynamical_map_grid(g, [t], dt)[0]


def apply_map(m: np.ndarray, rho: np.ndarray) -> np.ndarray:
    d = int(round(math.sqrt(m.shape[0])))
    return (m @ np.asarray(rho, dtype=complex).reshape(-1)).reshape(d, d)


def choi_matrix(m: np.ndarray) -> np.ndarray:
    """Choi matrix C = sum_kl E_kl (x) Phi(E_kl) from the map matrix."""
    d = int(round(math.sqrt(m.shape[0])))
    c = np.zeros((d * d, d * d), dtype=complex)
    for k in range(d):
        for l in range(d):
            block = m[:, k * d + l].reshape(d, d)
            c[k * d : (k + 1) * d, l * d : (l + 1) * d] = block
    return c


def cp_check(
    g: TimeLocalGenerator,
    t_grid,
    dt: float,
    tol: float = CP_EIGENVALUE_TOL,
) -> list[ChoiReport]:
    """Complete-positivity audit: minimum Choi eigenvalue at each time."""
    if tol <= 0:
        raise DomainError(f"CP tolerance must be positive, got {tol}")
    maps = dynamical_map_grid(g, t_grid, dt)
    reports = []
    for t, m in zip(t_grid, maps):
        c = choi_matrix(m)
        c = 0.5 * (c + c.conj().T)
        min_eig = float(np.linalg.eigvalsh(c)[0])
        reports.append(ChoiReport(float(t), min_eig, min_eig >= -tol, tol))
    return reports
