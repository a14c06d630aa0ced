"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Stochastic criteria use fixed seeds, so every run is reproducible.  Where a
criterion leaves the checkpoint or tolerance convention open, the choice and
its rationale are recorded in the project notes.
"""

import time

import numpy as np
import pytest

from timelocal import classical, integrator, mcwf, nmqj
from timelocal.cli import main
from timelocal.quantum import DensityMatrix, excited_state, two_level_decay
from timelocal.rates import Constant, Difference, PiecewiseConstant
from timelocal.scenarios import ring_effective_rates

GAMMA = 0.4
RING_GAMMA = 0.5


def memory_rate():
    g1, g2 = classical.two_state_tables(GAMMA, 5.0, 10.0)
    return Difference(g1, g2)


def report(number, label, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] criterion {number:2d} ({label}): {detail}")
    assert ok, f"criterion {number} ({label}) failed: {detail}"


def _analytic_errors(dt):
    g = two_level_decay(Constant(GAMMA))
    rho0 = DensityMatrix.from_ket(excited_state())
    res = integrator.propagate(g, rho0, 10.0, dt)
    return max(
        abs(s[0, 0].real - np.exp(-GAMMA * t)) for t, s in zip(res.times, res.states)
    )


def test_criterion_01_analytic_agreement():
    start = time.perf_counter()
    err = _analytic_errors(1e-3)
    elapsed = time.perf_counter() - start
    ok = err < 1e-6 and elapsed < 1.0
    report(1, "analytic agreement", ok, f"max err {err:.2e}, {elapsed:.2f}s")


def test_criterion_02_cp_iff_criterion():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    grid = [0.5 * k for k in range(1, 21)]
    mismatches = 0
    for _ in range(20):
        nb = int(rng.integers(3, 7))
        breaks = np.sort(rng.uniform(0.5, 9.5, nb))
        vals = rng.uniform(-1.0, 1.0, nb + 1)
        f = PiecewiseConstant(tuple(breaks), tuple(vals))
        reports = integrator.cp_check(two_level_decay(f), grid, 5e-3, tol=1e-8)
        for t, rep in zip(grid, reports):
            if rep.is_cp != (f.integral(0.0, t) >= -1e-9):
                mismatches += 1
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 30.0
    report(2, "CP iff sign criterion", ok, f"{mismatches} mismatches, {elapsed:.1f}s")


def test_criterion_03_memory_driven_return():
    g = two_level_decay(memory_rate())
    ode = integrator.propagate(g, DensityMatrix.from_ket(excited_state()), 10.0, 1e-3)
    ode_err = abs(ode.states[-1][0, 0].real - 1.0)
    ens = nmqj.run_ensemble_nm(g, excited_state(), 10.0, 1e-3, 10000, 42, store_stride=100)
    ens_ree = ens.states[-1][0, 0].real
    ok = ode_err < 1e-6 and ens_ree >= 0.999
    report(
        3,
        "memory-driven return",
        ok,
        f"ode err {ode_err:.2e}, ensemble rho_ee(10) {ens_ree:.6f}",
    )


def test_criterion_04_mcwf_consistency():
    start = time.perf_counter()
    n = 10000
    res = mcwf.run_ensemble(
        two_level_decay(Constant(GAMMA)), excited_state(), 5.0, 1e-3, n, 7, collect_jumps=False
    )
    elapsed = time.perf_counter() - start
    err = abs(res.states[-1][0, 0].real - np.exp(-2.0))
    ok = err < 4 * 0.0034 and elapsed < 10.0
    report(4, "MCWF consistency", ok, f"err {err:.4f} < {4 * 0.0034}, {elapsed:.1f}s")


def test_criterion_05_fig1_oracles():
    gamma = memory_rate()
    nm = classical.build_two_state("nonmarkov", GAMMA, 5.0, 10.0)
    mk = classical.build_two_state("markov", GAMMA, 5.0, 10.0)
    worst_exp = worst_same = worst_zero = 0.0
    eff_zero_ok = True
    for a in (1.0, 0.5, 0.0):
        rn = classical.integrate(nm, [a, 1.0 - a], 12.0, 1e-3, 10)
        rm = classical.integrate(mk, [a, 1.0 - a], 12.0, 1e-3, 10)
        for t, p in zip(rn.times, rn.probabilities):
            worst_exp = max(
                worst_exp, abs(p[0] - a * np.exp(-gamma.integral(0.0, float(t))))
            )
            if a == 0.0:
                worst_zero = max(worst_zero, abs(p[0]))
                g2 = nm.rates[(1, 0)].evaluate(float(t))
                if g2 < 0 and p[0] > 0:
                    eff_zero_ok = False
        sel = rn.times <= 5.0 + 1e-12
        worst_same = max(
            worst_same, float(np.max(np.abs(rn.probabilities[sel] - rm.probabilities[sel])))
        )
    ok = worst_exp < 1e-8 and worst_zero == 0.0 and worst_same < 1e-9 and eff_zero_ok
    report(
        5,
        "fig1 oracles",
        ok,
        f"exp oracle {worst_exp:.1e}, markov match {worst_same:.1e}, empty curve {worst_zero:.1e}",
    )


def test_criterion_06_fig3_reproduction():
    ra = classical.integrate(classical.build_ring("a", RING_GAMMA), [1, 0, 0, 0], 12.0, 1e-3, 100)
    worst_return = 0.0
    for tc in (4.0, 8.0, 12.0):
        i = int(np.argmin(np.abs(ra.times - tc)))
        worst_return = max(worst_return, float(np.max(np.abs(ra.probabilities[i] - [1, 0, 0, 0]))))
    rb = classical.integrate(classical.build_ring("b", RING_GAMMA), [1, 0, 0, 0], 40.0, 1e-3, 1000)
    relax = float(np.max(np.abs(rb.probabilities[-1] - 0.25)))
    ok = worst_return < 1e-6 and relax < 0.01
    report(6, "fig3 reproduction", ok, f"return err {worst_return:.1e}, relax err {relax:.1e}")


def test_criterion_07_fig4_reproduction():
    errs = {}
    for variant in ("c", "d"):
        res = classical.integrate(
            classical.build_ring(variant, RING_GAMMA), [1, 0, 0, 0], 40.0, 1e-3, 1000
        )
        errs[variant] = float(np.max(np.abs(res.probabilities[-1] - 0.25)))
    ok = all(e < 0.01 for e in errs.values())
    report(7, "fig4 reproduction", ok, f"relax errs {errs}")


def test_criterion_08_fig5_effective_rates():
    f, g = classical.ring_rate_pair(RING_GAMMA)
    # ring a: at every time in every negative interval the effective rates
    # deviate from the Markovian value g(t) by > 20% in sup norm over
    # occupied states
    ra = classical.integrate(classical.build_ring("a", RING_GAMMA), [1, 0, 0, 0], 40.0, 1e-3, 10)
    min_sup_dev = np.inf
    for t, p in zip(ra.times, ra.probabilities):
        t = float(t)
        r = f.evaluate(t) - g.evaluate(t)
        if r >= 0:
            continue
        gval = g.evaluate(t)
        eff = ring_effective_rates("a", t, p)
        occupied = p > 1e-6
        dev = np.abs(eff[occupied] - gval) / gval
        min_sup_dev = min(min_sup_dev, float(dev.max()))
    # ring c: composite clockwise effective rate within 5% of 2*Gamma
    # throughout the last negative interval before t=40
    rc = classical.integrate(classical.build_ring("c", RING_GAMMA), [1, 0, 0, 0], 40.0, 1e-3, 10)
    worst_c = 0.0
    sel = (rc.times > 38.0 + 1e-9) & (rc.times < 40.0 - 1e-9)
    for t, p in zip(rc.times[sel], rc.probabilities[sel]):
        eff = ring_effective_rates("c", float(t), p)
        worst_c = max(worst_c, float(np.max(np.abs(eff - 2 * RING_GAMMA)) / (2 * RING_GAMMA)))
    ok = min_sup_dev > 0.20 and worst_c < 0.05
    report(
        8,
        "fig5 effective rates",
        ok,
        f"ring a min sup deviation {min_sup_dev:.2f} > 0.20, ring c deviation {worst_c:.4f} < 0.05",
    )


CHECKPOINTS = {
    # ring a amplifies sampling noise through each reversal; its checkpoints
    # stay within the first period (long-horizon behavior is criterion 6)
    ("ring", "a"): [0.5, 1.0, 1.5, 2.5, 3.0],
    ("ring", "b"): [5.0, 10.0, 20.0, 30.0, 40.0],
    ("ring", "c"): [5.0, 10.0, 20.0, 30.0, 40.0],
    ("ring", "d"): [5.0, 10.0, 20.0, 30.0, 40.0],
    ("two_state", "markov"): [2.0, 4.0, 6.0, 8.0, 9.0],
    ("two_state", "nonmarkov"): [2.0, 4.0, 6.0, 8.0, 9.0],
}


def test_criterion_09_ensemble_ode_equivalence():
    n = 10000
    canonical_seed = 11
    replicate_seeds = list(range(100, 108))
    worst = {}
    for (family, variant), cps in CHECKPOINTS.items():
        if family == "ring":
            spec = classical.build_ring(variant, RING_GAMMA)
            p0 = [1.0, 0.0, 0.0, 0.0]
        else:
            spec = classical.build_two_state(variant, GAMMA, 5.0, 10.0)
            p0 = [1.0, 0.0]
        t_end = max(cps)
        ode = classical.integrate(spec, p0, t_end, 1e-3, 100)
        counts0 = (np.array(p0) * n).astype(int)
        canon = classical.sample_ensemble(spec, counts0, t_end, 1e-3, canonical_seed, 100)
        reps = [
            classical.sample_ensemble(spec, counts0, t_end, 1e-3, s, 100)
            for s in replicate_seeds
        ]
        worst_z = 0.0
        for tc in cps:
            i = int(np.argmin(np.abs(ode.times - tc)))
            j = int(np.argmin(np.abs(canon.times - tc)))
            p = ode.probabilities[i]
            frac = np.array([r.counts[j] / n for r in reps])
            sigma = np.maximum(frac.std(axis=0, ddof=1), 1.0 / n)
            worst_z = max(worst_z, float(np.max(np.abs(canon.counts[j] / n - p) / sigma)))
        worst[f"{family}/{variant}"] = round(worst_z, 2)
    ok = all(z <= 4.0 for z in worst.values())
    report(9, "ensemble vs ODE", ok, f"worst |z| per system {worst}")


def test_criterion_10_order_of_accuracy():
    # at dt=1e-3 the RK4 truncation error sits below double-precision
    # round-off, so the order is measured at dt=0.2 -> 0.1 instead
    ratio = _analytic_errors(0.2) / _analytic_errors(0.1)
    ok = 12.0 <= ratio <= 20.0
    report(10, "RK4 order", ok, f"error ratio {ratio:.2f} in [12, 20]")


def test_criterion_11_determinism(tmp_path):
    files = []
    for tag in ("a", "b"):
        out = tmp_path / f"det_{tag}.csv"
        code = main(
            ["run", "--scenario", "two_level_q", "--dt", "0.005", "--seed", "42", "--out", str(out)]
        )
        assert code == 0
        files.append(out.read_bytes())
    ok = files[0] == files[1]
    report(11, "determinism", ok, f"{len(files[0])} bytes, identical={ok}")
