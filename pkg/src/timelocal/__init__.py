"""Simulation toolkit for time-local master equations with temporarily
negative decay rates: deterministic propagation, complete-positivity
auditing, Markovian and non-Markovian jump unravelings, and classical
(non-)Markov chains."""

__version__ = "0.1.0"

from .classical import (
    ClassicalEnsemble,
    ProbabilityVector,
    RateMatrixSpec,
    build_ring,
    build_two_state,
    effective_rate_classical,
    integrate,
    q_matrix,
    rate_rhs,
    sample_ensemble,
    validate_markov,
)
from .integrator import (
    ChoiReport,
    PropagationResult,
    analytic_two_level,
    choi_matrix,
    cp_check,
    dynamical_map,
    propagate,
)
from .mcwf import EnsembleResult, Trajectory, apply_jump, deterministic_step, jump_probability, run_ensemble
from .nmqj import JumpEnsemble, effective_rate, reverse_jump_probability, reverse_target, run_ensemble_nm
from .quantum import (
    Channel,
    DensityMatrix,
    StateVector,
    TimeLocalGenerator,
    apply_generator,
    effective_hamiltonian,
)
from .rates import Constant, Difference, PiecewiseConstant, RateFunction, SignPeriodic, Tabulated
