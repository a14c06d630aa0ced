"""Core quantum objects: state vectors, density matrices, channels, generators.

The generator implements the time-local master equation

    drho/dt = -i[H, rho] + sum_i gamma_i(t) (L_i rho L_i^+ - 1/2 {L_i^+ L_i, rho})

with a constant Hermitian H, constant Lindblad operators L_i and
time-dependent rates gamma_i(t) that may be temporarily negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .rates import RateFunction, collect_breakpoints

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-9
PHASE_MATCH_TOL = 1e-9


class StateVector:
    """A pure state; unit Euclidean norm after normalization."""

    __slots__ = ("amplitudes",)

    def __init__(self, amplitudes, normalize: bool = False):
        v = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if normalize:
            n = np.linalg.norm(v)
            if n <= 1e-12:
                raise DomainError("cannot normalize a (near-)zero vector")
            v = v / n
        self.amplitudes = v

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        return StateVector(self.amplitudes, normalize=True)

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def __repr__(self):
        return f"StateVector({self.amplitudes!r})"


def phase_distance(a, b) -> float:
    """Euclidean distance minimized over a global phase of b."""
    u = a.amplitudes if isinstance(a, StateVector) else np.asarray(a, dtype=complex)
    v = b.amplitudes if isinstance(b, StateVector) else np.asarray(b, dtype=complex)
    d2 = (
        np.vdot(u, u).real
        + np.vdot(v, v).real
        - 2.0 * abs(np.vdot(u, v))
    )
    return math.sqrt(max(d2, 0.0))


def same_up_to_phase(a, b, tol: float = PHASE_MATCH_TOL) -> bool:
    return phase_distance(a, b) < tol


class DensityMatrix:
    """A density matrix; Hermitian and unit trace within tolerance.

    Positivity is deliberately not an invariant: auditing it is the job of
    the complete-positivity checker.
    """

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DomainError(f"density matrix must be square, got shape {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > HERMITICITY_TOL:
            raise DomainError("density matrix is not Hermitian within tolerance")
        tr = np.trace(m)
        if abs(tr - 1.0) > TRACE_TOL:
            raise DomainError(f"density matrix trace {tr} is not 1 within tolerance")
        self.matrix = m

    @classmethod
    def from_ket(cls, psi) -> "DensityMatrix":
        sv = psi if isinstance(psi, StateVector) else StateVector(psi)
        return cls(sv.normalized().projector())

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __repr__(self):
        return f"DensityMatrix({self.matrix!r})"


@dataclass(frozen=True)
class Channel:
    """A dissipation channel: a Lindblad operator with its time-dependent rate."""

    operator: np.ndarray
    rate: RateFunction
    label: str = ""

    def __post_init__(self):
        op = np.asarray(self.operator, dtype=complex)
        if op.ndim != 2 or op.shape[0] != op.shape[1]:
            raise DomainError(f"Lindblad operator must be square, got shape {op.shape}")
        if not np.any(op):
            raise DomainError("Lindblad operator must have a nonzero entry")
        object.__setattr__(self, "operator", op)


@dataclass(frozen=True)
class TimeLocalGenerator:
    """H plus a list of channels; right-hand side of the time-local equation."""

    hamiltonian: np.ndarray
    channels: tuple[Channel, ...]

    def __post_init__(self):
        h = np.asarray(self.hamiltonian, dtype=complex)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise DomainError(f"Hamiltonian must be square, got shape {h.shape}")
        if np.max(np.abs(h - h.conj().T)) > 1e-12:
            raise DomainError("Hamiltonian is not Hermitian within 1e-12")
        chs = tuple(self.channels)
        for ch in chs:
            if ch.operator.shape != h.shape:
                raise DomainError(
                    f"channel {ch.label!r} dimension {ch.operator.shape} "
                    f"does not match Hamiltonian {h.shape}"
                )
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "channels", chs)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    def rates_at(self, t: float) -> np.ndarray:
        return np.array([ch.rate.evaluate(t) for ch in self.channels])

    def breakpoints(self, t0: float, t1: float) -> list[float]:
        return collect_breakpoints([ch.rate for ch in self.channels], t0, t1)


def apply_generator(g: TimeLocalGenerator, rho, t: float) -> np.ndarray:
    """Right-hand side of the time-local master equation at time t."""
    if t < 0:
        raise DomainError(f"generator applied at negative time t={t}")
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    if m.shape != (g.dim, g.dim):
        raise DomainError(f"state shape {m.shape} does not match generator dimension {g.dim}")
    h = g.hamiltonian
    out = -1j * (h @ m - m @ h)
    for ch in g.channels:
        gamma = ch.rate.evaluate(t)
        if gamma == 0.0:
            continue
        L = ch.operator
        LdL = L.conj().T @ L
        out += gamma * (L @ m @ L.conj().T - 0.5 * (LdL @ m + m @ LdL))
    return out


def effective_hamiltonian(g: TimeLocalGenerator, t: float) -> np.ndarray:
    """Non-Hermitian effective Hamiltonian H - (i/2) sum_i gamma_i(t) L_i^+ L_i."""
    if t < 0:
        raise DomainError(f"effective Hamiltonian at negative time t={t}")
    heff = g.hamiltonian.astype(complex).copy()
    for ch in g.channels:
        gamma = ch.rate.evaluate(t)
        if gamma == 0.0:
            continue
        L = ch.operator
        heff -= 0.5j * gamma * (L.conj().T @ L)
    return heff


def sigma_minus() -> np.ndarray:
    """Lowering operator |g><e| in the basis (|e>, |g>)."""
    return np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)


def two_level_decay(rate: RateFunction, label: str = "decay") -> TimeLocalGenerator:
    """Single-channel two-level generator with H=0 and L=sigma_minus."""
    return TimeLocalGenerator(
        hamiltonian=np.zeros((2, 2)),
        channels=(Channel(sigma_minus(), rate, label),),
    )


def excited_state() -> StateVector:
    return StateVector([1.0, 0.0])


def ground_state() -> StateVector:
    return StateVector([0.0, 1.0])
