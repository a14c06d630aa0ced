import numpy as np
import pytest

from timelocal.errors import ImpossibleJumpError, NegativeRateError, StepSizeError
from timelocal.integrator import propagate
from timelocal.mcwf import (
    apply_jump,
    deterministic_step,
    jump_probability,
    run_ensemble,
    run_trajectory,
)
from timelocal.quantum import (
    Channel,
    DensityMatrix,
    StateVector,
    TimeLocalGenerator,
    excited_state,
    ground_state,
    sigma_minus,
    two_level_decay,
)
from timelocal.rates import Constant


def test_deterministic_step_fixed_points():
    g = two_level_decay(Constant(0.4))
    for psi in (ground_state(), excited_state()):
        out = deterministic_step(g, psi, 0.0, 1e-3)
        assert np.allclose(out.amplitudes, psi.amplitudes, atol=1e-12)


def test_deterministic_step_amplitude_ratio():
    g = two_level_decay(Constant(0.4))
    psi = StateVector([1.0, 1.0], normalize=True)
    out = deterministic_step(g, psi, 0.0, 1e-3)
    ratio = (out.amplitudes[0] / out.amplitudes[1]).real
    assert ratio == pytest.approx(1.0 - 0.4 * 1e-3 / 2.0, abs=1e-12)
    assert out.norm() == pytest.approx(1.0)


def test_jump_probability_values():
    g = two_level_decay(Constant(0.4))
    assert jump_probability(g, excited_state(), 0, 0.0, 1e-3) == pytest.approx(4.0e-4)
    assert jump_probability(g, ground_state(), 0, 0.0, 1e-3) == 0.0
    half = StateVector([1.0, 1.0], normalize=True)
    assert jump_probability(g, half, 0, 0.0, 1e-3) == pytest.approx(2.0e-4)


def test_jump_probability_negative_rate_redirects():
    g = two_level_decay(Constant(-0.4))
    with pytest.raises(NegativeRateError):
        jump_probability(g, excited_state(), 0, 0.0, 1e-3)


def test_jump_probability_guard():
    g = two_level_decay(Constant(0.4))
    with pytest.raises(StepSizeError):
        jump_probability(g, excited_state(), 0, 0.0, 0.5)


def test_apply_jump():
    assert np.allclose(apply_jump(excited_state(), sigma_minus()).amplitudes, [0.0, 1.0])
    half = StateVector([1.0, 1.0], normalize=True)
    assert np.allclose(apply_jump(half, sigma_minus()).amplitudes, [0.0, 1.0])
    with pytest.raises(ImpossibleJumpError):
        apply_jump(ground_state(), sigma_minus())


def test_run_ensemble_no_dynamics():
    g = two_level_decay(Constant(0.0))
    res = run_ensemble(g, excited_state(), 1.0, 1e-2, 1, 0)
    for s in res.states:
        assert np.allclose(s, [[1.0, 0.0], [0.0, 0.0]], atol=1e-12)


def test_run_ensemble_binomial_agreement():
    n = 4000
    res = run_ensemble(two_level_decay(Constant(0.4)), excited_state(), 5.0, 1e-3, n, 3)
    p = np.exp(-2.0)
    sigma = np.sqrt(p * (1 - p) / n)
    assert abs(res.states[-1][0, 0].real - p) < 3 * sigma


def test_run_ensemble_jump_fraction():
    n = 4000
    res = run_ensemble(two_level_decay(Constant(0.4)), excited_state(), 5.0, 1e-3, n, 3)
    jumped = len({k for _, k, _ in res.jump_records})
    p = 1.0 - np.exp(-2.0)
    sigma = np.sqrt(p * (1 - p) / n)
    assert abs(jumped / n - p) < 3 * sigma


def test_run_ensemble_deterministic():
    g = two_level_decay(Constant(0.4))
    a = run_ensemble(g, excited_state(), 2.0, 1e-3, 300, 9)
    b = run_ensemble(g, excited_state(), 2.0, 1e-3, 300, 9)
    assert a.jump_records == b.jump_records
    assert all(np.array_equal(x, y) for x, y in zip(a.states, b.states))


def test_trajectory_matches_ensemble_member():
    g = two_level_decay(Constant(0.4))
    ens = run_ensemble(g, excited_state(), 3.0, 1e-3, 50, 21)
    for index in (0, 17, 49):
        traj = run_trajectory(g, excited_state(), 3.0, 1e-3, 21, index)
        expected = sorted(t for t, k, _ in ens.jump_records if k == index)
        assert [t for t, _ in traj.jump_records] == expected


def test_trajectory_states_normalized():
    traj = run_trajectory(two_level_decay(Constant(0.4)), excited_state(), 2.0, 1e-3, 5)
    for s in traj.states:
        assert np.linalg.norm(s) == pytest.approx(1.0, abs=1e-9)


def test_negative_rate_rejected_up_front():
    g = two_level_decay(Constant(-0.4))
    with pytest.raises(NegativeRateError):
        run_ensemble(g, excited_state(), 1.0, 1e-3, 10, 0)


def random_positive_generator(rng, d):
    h = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    h = 0.5 * (h + h.conj().T)
    channels = []
    for i in range(2):
        op = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        channels.append(Channel(op / np.linalg.norm(op), Constant(float(rng.uniform(0.2, 0.8))), f"ch{i}"))
    return TimeLocalGenerator(h, tuple(channels))


def test_unraveling_consistency():
    rng = np.random.default_rng(17)
    n = 5000
    for d in (2, 3, 3):
        g = random_positive_generator(rng, d)
        psi0 = StateVector(rng.normal(size=d) + 1j * rng.normal(size=d), normalize=True)
        ens = run_ensemble(g, psi0, 1.0, 1e-3, n, 2, collect_jumps=False)
        ode = propagate(g, DensityMatrix.from_ket(psi0), 1.0, 1e-3)
        sigma = 0.5 / np.sqrt(n)
        for frac in (0.2, 0.4, 0.6, 0.8, 1.0):
            i = np.argmin(np.abs(ens.times - frac))
            j = np.argmin(np.abs(ode.times - frac))
            assert np.max(np.abs(ens.states[i] - ode.states[j])) < 4 * sigma
