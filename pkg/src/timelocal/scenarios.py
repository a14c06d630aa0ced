"""Built-in scenarios with the published experiment parameters hard-coded.

Each scenario produces figure-ready tabular data in long format.  The data
maps onto the experiments as follows:

  fig1        two-state chain, Gamma=0.4/s, s1=5s, s2=10s, both variants and
              three initial occupations; columns t, variant, p1_init, p1,
              eff_rate (the 2->1 rate: the bare table rate for the Markov
              variant, the history-dependent effective rate otherwise).
  fig3        ring variants a (oscillating-sign clockwise rate) and b (its
              Markovian counterpart), Gamma=0.5/s; columns t, variant, p1..p4.
  fig4        ring variants c and d, Gamma=0.5/s; same columns as fig3.
  fig5        effective rates of the non-Markovian rings a and c; columns t,
              variant, eff_1..eff_4 (per source state).
  two_level_q two-level quantum system with the fig1 rate profile: ODE
              propagation vs the non-Markovian jump ensemble.
  cp_demo     Choi-spectrum audit for a constant positive rate, a constant
              negative rate and the fig1 memory profile.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import classical, integrator, nmqj
from .errors import ConfigError
from .quantum import DensityMatrix, excited_state, two_level_decay
from .rates import Constant, Difference

TWO_STATE_GAMMA = 0.4
TWO_STATE_S1 = 5.0
TWO_STATE_S2 = 10.0
RING_GAMMA = 0.5


@dataclass
class ScenarioResult:
    name: str
    columns: list[str]
    rows: list[tuple]
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    runner: Callable[..., ScenarioResult]
    defaults: dict


def _eff_rate_two_state(variant: str, g2, t: float, p1: float, p2: float) -> float:
    bare = g2.evaluate(t)
    if variant == "markov":
        return bare
    if bare == 0.0 or p1 <= 0.0:
        return 0.0
    return bare * p1 / p2


def run_fig1(seed: int = 0, dt: float = 1e-3, stride: int = 100, **_) -> ScenarioResult:
    _, g2 = classical.two_state_tables(TWO_STATE_GAMMA, TWO_STATE_S1, TWO_STATE_S2)
    rows = []
    for variant in ("markov", "nonmarkov"):
        spec = classical.build_two_state(variant, TWO_STATE_GAMMA, TWO_STATE_S1, TWO_STATE_S2)
        for p1_init in (1.0, 0.5, 0.0):
            res = classical.integrate(spec, [p1_init, 1.0 - p1_init], 12.0, dt, stride)
            for t, p in zip(res.times, res.probabilities):
                rows.append(
                    (
                        float(t),
                        variant,
                        p1_init,
                        float(p[0]),
                        _eff_rate_two_state(variant, g2, float(t), float(p[0]), float(p[1])),
                    )
                )
    return ScenarioResult(
        "fig1",
        ["t", "variant", "p1_init", "p1", "eff_rate"],
        rows,
        {"dt": dt, "seed": seed, "n": None, "max_step_probability": 0.0},
    )


def _run_ring_populations(name, variants, seed, dt, stride):
    rows = []
    for variant in variants:
        spec = classical.build_ring(variant, RING_GAMMA)
        res = classical.integrate(spec, [1.0, 0.0, 0.0, 0.0], 40.0, dt, stride)
        for t, p in zip(res.times, res.probabilities):
            rows.append((float(t), variant, *[float(x) for x in p]))
    return ScenarioResult(
        name,
        ["t", "variant", "p1", "p2", "p3", "p4"],
        rows,
        {"dt": dt, "seed": seed, "n": None, "max_step_probability": 0.0},
    )


def run_fig3(seed: int = 0, dt: float = 1e-3, stride: int = 100, **_) -> ScenarioResult:
    return _run_ring_populations("fig3", ("a", "b"), seed, dt, stride)


def run_fig4(seed: int = 0, dt: float = 1e-3, stride: int = 100, **_) -> ScenarioResult:
    return _run_ring_populations("fig4", ("c", "d"), seed, dt, stride)


def ring_effective_rates(variant: str, t: float, p: np.ndarray, gamma: float = RING_GAMMA):
    """Per-source-state effective rates of the non-Markovian ring variants.

    Variant a: the anti-clockwise effective rate |r| p_{i-1}/p_i while the
    clockwise rate r is negative, else 0.  Variant c: the composite clockwise
    rate, gamma while the anti-clockwise rate r is nonnegative and
    gamma + |r| p_{i+1}/p_i while it is negative.
    """
    f, g = classical.ring_rate_pair(gamma)
    r = f.evaluate(t) - g.evaluate(t)
    n = p.size
    out = np.zeros(n)
    if variant == "a":
        if r < 0:
            for i in range(n):
                if p[i] > 1e-12:
                    out[i] = abs(r) * p[(i - 1) % n] / p[i]
    elif variant == "c":
        out[:] = gamma
        if r < 0:
            for i in range(n):
                if p[i] > 1e-12:
                    out[i] = gamma + abs(r) * p[(i + 1) % n] / p[i]
    else:
        raise ConfigError(f"no effective-rate series for ring variant {variant!r}")
    return out


def run_fig5(seed: int = 0, dt: float = 1e-3, stride: int = 100, **_) -> ScenarioResult:
    rows = []
    for variant in ("a", "c"):
        spec = classical.build_ring(variant, RING_GAMMA)
        res = classical.integrate(spec, [1.0, 0.0, 0.0, 0.0], 40.0, dt, stride)
        for t, p in zip(res.times, res.probabilities):
            eff = ring_effective_rates(variant, float(t), p)
            rows.append((float(t), variant, *[float(x) for x in eff]))
    return ScenarioResult(
        "fig5",
        ["t", "variant", "eff_1", "eff_2", "eff_3", "eff_4"],
        rows,
        {"dt": dt, "seed": seed, "n": None, "max_step_probability": 0.0},
    )


def memory_rate(gamma: float = TWO_STATE_GAMMA, s1: float = TWO_STATE_S1, s2: float = TWO_STATE_S2):
    """The signed rate gamma_1 - gamma_2 of the two-state memory model."""
    g1, g2 = classical.two_state_tables(gamma, s1, s2)
    return Difference(g1, g2)


def run_two_level_q(
    seed: int = 42, dt: float = 1e-3, stride: int = 100, n: int = 10000, **_
) -> ScenarioResult:
    g = two_level_decay(memory_rate())
    rho0 = DensityMatrix.from_ket(excited_state())
    ode = integrator.propagate(g, rho0, 10.0, dt, store_stride=stride)
    ens = nmqj.run_ensemble_nm(g, excited_state(), 10.0, dt, n, seed, store_stride=stride)
    rows = []
    for t, m_ode, m_ens in zip(ode.times, ode.states, ens.states):
        rows.append((float(t), float(m_ode[0, 0].real), float(m_ens[0, 0].real)))
    return ScenarioResult(
        "two_level_q",
        ["t", "rho_ee_ode", "rho_ee_nmqj"],
        rows,
        {
            "dt": dt,
            "seed": seed,
            "n": n,
            "max_step_probability": ens.stats.max_step_probability,
        },
    )


def run_cp_demo(seed: int = 0, dt: float = 5e-3, **_) -> ScenarioResult:
    grid = [0.5 * k for k in range(1, 21)]
    cases = {
        "const_positive": Constant(TWO_STATE_GAMMA),
        "const_negative": Constant(-TWO_STATE_GAMMA),
        "memory": memory_rate(),
    }
    rows = []
    for case, rate in cases.items():
        g = two_level_decay(rate)
        for rep in integrator.cp_check(g, grid, dt):
            rows.append((rep.time, case, rep.min_eigenvalue, rep.is_cp))
    return ScenarioResult(
        "cp_demo",
        ["t", "case", "min_eigenvalue", "is_cp"],
        rows,
        {"dt": dt, "seed": seed, "n": None, "max_step_probability": 0.0},
    )


SCENARIOS: dict[str, Scenario] = {
    s.name: s
    for s in [
        Scenario(
            "fig1",
            "two-state chain, Markov vs memory variant, three initial occupations",
            run_fig1,
            {"seed": 0, "dt": 1e-3, "stride": 100},
        ),
        Scenario(
            "fig3",
            "four-state ring variants a and b, populations over 40 s",
            run_fig3,
            {"seed": 0, "dt": 1e-3, "stride": 100},
        ),
        Scenario(
            "fig4",
            "four-state ring variants c and d, populations over 40 s",
            run_fig4,
            {"seed": 0, "dt": 1e-3, "stride": 100},
        ),
        Scenario(
            "fig5",
            "effective rates of the non-Markovian rings a and c",
            run_fig5,
            {"seed": 0, "dt": 1e-3, "stride": 100},
        ),
        Scenario(
            "two_level_q",
            "two-level memory profile: ODE vs non-Markovian jump ensemble",
            run_two_level_q,
            {"seed": 42, "dt": 1e-3, "stride": 100, "n": 10000},
        ),
        Scenario(
            "cp_demo",
            "Choi-spectrum audit for positive, negative and memory rate profiles",
            run_cp_demo,
            {"seed": 0, "dt": 5e-3},
        ),
    ]
}


def list_scenarios() -> list[tuple[str, str]]:
    return [(s.name, s.description) for s in SCENARIOS.values()]


def run_scenario(name: str, **overrides) -> ScenarioResult:
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; available: {sorted(SCENARIOS)}")
    sc = SCENARIOS[name]
    params = dict(sc.defaults)
    params.update({k: v for k, v in overrides.items() if v is not None})
    if params.get("dt", 1) <= 0:
        raise ConfigError(f"dt must be positive, got {params['dt']}")
    return sc.runner(**params)
