import numpy as np
import pytest

from timelocal import classical
from timelocal.errors import DomainError, NumericalBlowupError
from timelocal.integrator import (
    analytic_two_level,
    apply_map,
    choi_matrix,
    cp_check,
    dynamical_map,
    propagate,
)
from timelocal.quantum import DensityMatrix, excited_state, two_level_decay
from timelocal.rates import Constant, Difference, PiecewiseConstant


def memory_rate():
    g1, g2 = classical.two_state_tables(0.4, 5.0, 10.0)
    return Difference(g1, g2)


def excited_rho():
    return DensityMatrix.from_ket(excited_state())


def test_propagate_constant_rate():
    res = propagate(two_level_decay(Constant(0.4)), excited_rho(), 5.0, 1e-3)
    assert res.states[-1][0, 0].real == pytest.approx(np.exp(-2.0), abs=1e-6)


def test_propagate_zero_generator():
    rho0 = DensityMatrix(np.array([[0.7, 0.1], [0.1, 0.3]]))
    res = propagate(two_level_decay(Constant(0.0)), rho0, 3.0, 1e-2)
    assert np.allclose(res.states[-1], rho0.matrix, atol=1e-14)


def test_propagate_memory_return():
    res = propagate(two_level_decay(memory_rate()), excited_rho(), 10.0, 1e-3)
    assert np.allclose(res.states[-1], excited_rho().matrix, atol=1e-6)


def test_analytic_identity_at_zero():
    rho0 = DensityMatrix(np.array([[0.6, 0.2j], [-0.2j, 0.4]]))
    assert np.allclose(analytic_two_level(Constant(1.0), rho0, 0.0), rho0.matrix)


def test_analytic_exponential_decay():
    out = analytic_two_level(Constant(1.0), excited_rho(), 1.0)
    assert out[0, 0].real == pytest.approx(np.exp(-1.0))
    assert out[1, 1].real == pytest.approx(1.0 - np.exp(-1.0))


def test_analytic_memory_return():
    out = analytic_two_level(memory_rate(), excited_rho(), 10.0)
    assert np.allclose(out, excited_rho().matrix, atol=1e-14)


def test_analytic_requires_two_level():
    with pytest.raises(DomainError):
        analytic_two_level(Constant(1.0), np.eye(3) / 3.0, 1.0)


def test_propagate_matches_analytic_with_coherences():
    rho0 = DensityMatrix(np.array([[0.5, 0.3 - 0.1j], [0.3 + 0.1j, 0.5]]))
    res = propagate(two_level_decay(Constant(0.4)), rho0, 4.0, 1e-3)
    assert np.allclose(res.states[-1], analytic_two_level(Constant(0.4), rho0, 4.0), atol=1e-6)


def test_dynamical_map_identity_at_zero():
    m = dynamical_map(two_level_decay(Constant(0.4)), 0.0, 1e-2)
    assert np.allclose(m, np.eye(4), atol=1e-12)


def test_dynamical_map_matches_analytic():
    g = two_level_decay(Constant(0.4))
    m = dynamical_map(g, 3.0, 1e-3)
    out = apply_map(m, excited_rho().matrix)
    assert np.allclose(out, analytic_two_level(Constant(0.4), excited_rho(), 3.0), atol=1e-6)


def test_dynamical_map_linearity_consistency():
    g = two_level_decay(memory_rate())
    rho0 = DensityMatrix(np.array([[0.3, 0.2], [0.2, 0.7]]))
    m = dynamical_map(g, 7.0, 1e-3)
    res = propagate(g, rho0, 7.0, 1e-3)
    assert np.allclose(apply_map(m, rho0.matrix), res.states[-1], atol=1e-8)


def test_dynamical_map_trace_preserving():
    g = two_level_decay(memory_rate())
    m = dynamical_map(g, 6.0, 1e-3)
    d = 2
    for k in range(d):
        for l in range(d):
            block = m[:, k * d + l].reshape(d, d)
            expected = 1.0 if k == l else 0.0
            assert np.trace(block).real == pytest.approx(expected, abs=1e-8)
            assert abs(np.trace(block).imag) < 1e-8


def test_cp_check_positive_rate():
    reports = cp_check(two_level_decay(Constant(0.4)), [1.0, 5.0, 10.0], 1e-2)
    assert all(r.is_cp for r in reports)


def test_cp_check_negative_rate():
    reports = cp_check(two_level_decay(Constant(-0.4)), [1.0], 1e-3)
    assert not reports[0].is_cp
    assert reports[0].min_eigenvalue < -1e-3


def test_cp_check_memory_profile():
    grid = [0.5 * k for k in range(1, 21)]
    reports = cp_check(two_level_decay(memory_rate()), grid, 5e-3)
    assert all(r.is_cp for r in reports)


def test_choi_reshuffle_shape():
    m = dynamical_map(two_level_decay(Constant(0.4)), 1.0, 1e-2)
    c = choi_matrix(m)
    assert c.shape == (4, 4)
    # trace of the Choi matrix equals d for a trace-preserving map
    assert np.trace(c).real == pytest.approx(2.0, abs=1e-8)


def test_rk4_order():
    g = two_level_decay(Constant(0.4))

    def max_err(dt):
        res = propagate(g, excited_rho(), 10.0, dt)
        return max(
            abs(s[0, 0].real - np.exp(-0.4 * t)) for t, s in zip(res.times, res.states)
        )

    ratio = max_err(0.2) / max_err(0.1)
    assert 12.0 <= ratio <= 20.0


def test_trace_and_hermiticity_preserved():
    g = two_level_decay(
        PiecewiseConstant((4.0, 8.0, 12.0, 16.0), (0.4, -0.3, 0.4, -0.2, 0.3))
    )
    res = propagate(g, excited_rho(), 20.0, 1e-3, store_stride=500)
    for s in res.states:
        assert abs(np.trace(s).real - 1.0) < 1e-9
        assert np.max(np.abs(s - s.conj().T)) < 1e-9


def test_semigroup_composition():
    g = two_level_decay(Constant(0.4))
    m1 = dynamical_map(g, 1.5, 1e-3)
    m2 = dynamical_map(g, 2.5, 1e-3)
    m12 = dynamical_map(g, 4.0, 1e-3)
    assert np.allclose(m2 @ m1, m12, atol=1e-7)


def test_propagate_rejects_bad_step():
    with pytest.raises(DomainError):
        propagate(two_level_decay(Constant(0.4)), excited_rho(), 1.0, 0.0)


def test_map_blowup_reported():
    # the map builder applies no per-step conditioning, so a strongly
    # negative rate overflows and must be reported with its time
    g = two_level_decay(Constant(-80.0))
    with pytest.raises(NumericalBlowupError) as exc:
        dynamical_map(g, 50.0, 1e-2)
    assert exc.value.time is not None
