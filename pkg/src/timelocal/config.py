"""Scenario configuration: a single versioned JSON document.

Schema (version 1):

    {
      "schema": 1,
      "name": "my-run",
      "engine": "ode" | "mcwf" | "nmqj" | "classical-ode"
                | "classical-ensemble" | "cp-audit",
      "system": {...},           # quantum or classical description
      "initial": {...},          # ket / density_matrix / probabilities / counts
      "t_end": 10.0,
      "dt": 0.001,
      "stride": 100,             # output every stride-th step
      "n_ensemble": 10000,       # stochastic engines only
      "seed": 0,
      "cp_points": 20,           # cp-audit only: grid t_end/k * 1..k
      "output": {"format": "csv" | "json", "path": "out.csv"}
    }

Quantum system: {"type": "quantum", "hamiltonian": [[...]],
"channels": [{"operator": [[...]], "rate": RATE, "label": "decay"}]}.
Complex entries are numbers or [re, im] pairs.

Classical system: {"type": "classical", "n": 4, "rates": [{"to": k,
"from": l, "rate": RATE}]} or {"type": "classical", "builder":
{"kind": "ring" | "two_state", ...}}.

RATE: {"type": "constant", "value": v}
    | {"type": "piecewise", "breakpoints": [...], "values": [...]}
    | {"type": "sign_periodic", "amplitude": a, "phase": p, "sign": 1}
    | {"type": "difference", "a": RATE, "b": RATE}
    | {"type": "tabulated", "times": [...], "values": [...]}
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import classical, integrator, mcwf, nmqj, rates
from .errors import ConfigError
from .quantum import Channel, DensityMatrix, StateVector, TimeLocalGenerator

SCHEMA_VERSION = 1
ENGINES = ("ode", "mcwf", "nmqj", "classical-ode", "classical-ensemble", "cp-audit")
QUANTUM_ENGINES = ("ode", "mcwf", "nmqj", "cp-audit")


@dataclass
class ScenarioConfig:
    name: str
    engine: str
    system: dict
    initial: dict
    t_end: float
    dt: float
    stride: int = 1
    n_ensemble: int = 1
    seed: int = 0
    cp_points: int = 20
    out_format: str = "csv"
    out_path: str | None = None
    raw: dict = field(default_factory=dict)


def config_hash(document: dict) -> str:
    canonical = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _require(document: dict, key: str, kind=None):
    if key not in document:
        raise ConfigError(f"missing required field {key!r}")
    value = document[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"field {key!r} has wrong type {type(value).__name__}")
    return value


def rate_from_dict(d: Any, where: str = "rate") -> rates.RateFunction:
    if not isinstance(d, dict) or "type" not in d:
        raise ConfigError(f"{where}: expected an object with a 'type' field")
    kind = d["type"]
    try:
        if kind == "constant":
            return rates.Constant(float(d["value"]))
        if kind == "piecewise":
            return rates.PiecewiseConstant(tuple(d["breakpoints"]), tuple(d["values"]))
        if kind == "sign_periodic":
            return rates.SignPeriodic(
                float(d["amplitude"]), float(d.get("phase", 0.0)), int(d.get("sign", 1))
            )
        if kind == "difference":
            return rates.Difference(
                rate_from_dict(d["a"], where + ".a"), rate_from_dict(d["b"], where + ".b")
            )
        if kind == "tabulated":
            return rates.Tabulated(tuple(d["times"]), tuple(d["values"]))
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: invalid {kind!r} rate: {exc}") from exc
    raise ConfigError(f"{where}: unknown rate type {kind!r}")


def _complex_entry(x, where: str) -> complex:
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return complex(float(x[0]), float(x[1]))
    raise ConfigError(f"{where}: entries must be numbers or [re, im] pairs")


def _complex_matrix(rows, where: str) -> np.ndarray:
    try:
        return np.array([[_complex_entry(x, where) for x in row] for row in rows])
    except TypeError as exc:
        raise ConfigError(f"{where}: expected a nested list matrix") from exc


def build_quantum_system(system: dict) -> TimeLocalGenerator:
    h = _complex_matrix(_require(system, "hamiltonian", list), "system.hamiltonian")
    channels = []
    for i, ch in enumerate(system.get("channels", [])):
        op = _complex_matrix(_require(ch, "operator", list), f"system.channels[{i}].operator")
        rate = rate_from_dict(_require(ch, "rate"), f"system.channels[{i}].rate")
        channels.append(Channel(op, rate, ch.get("label", f"channel-{i}")))
    try:
        return TimeLocalGenerator(h, tuple(channels))
    except ValueError as exc:
        raise ConfigError(f"system: {exc}") from exc


def build_classical_system(system: dict) -> classical.RateMatrixSpec:
    if "builder" in system:
        b = system["builder"]
        kind = _require(b, "kind", str)
        try:
            if kind == "ring":
                return classical.build_ring(
                    _require(b, "variant", str), float(_require(b, "gamma")), int(b.get("n", 4))
                )
            if kind == "two_state":
                return classical.build_two_state(
                    _require(b, "variant", str),
                    float(_require(b, "gamma")),
                    float(_require(b, "s1")),
                    float(_require(b, "s2")),
                    float(b.get("horizon", 200.0)),
                )
        except ValueError as exc:
            raise ConfigError(f"system.builder: {exc}") from exc
        raise ConfigError(f"system.builder: unknown kind {kind!r}")
    n = int(_require(system, "n"))
    rate_map: dict[tuple[int, int], rates.RateFunction] = {}
    for i, entry in enumerate(_require(system, "rates", list)):
        k = int(_require(entry, "to"))
        l = int(_require(entry, "from"))
        rate_map[(k, l)] = rate_from_dict(_require(entry, "rate"), f"system.rates[{i}].rate")
    try:
        return classical.RateMatrixSpec(n, rate_map, topology=system.get("topology", "custom"))
    except ValueError as exc:
        raise ConfigError(f"system: {exc}") from exc


def parse_config(document: dict) -> ScenarioConfig:
    if not isinstance(document, dict):
        raise ConfigError("configuration must be a JSON object")
    schema = document.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {schema}, expected {SCHEMA_VERSION}")
    engine = _require(document, "engine", str)
    if engine not in ENGINES:
        raise ConfigError(f"unknown engine {engine!r}; one of {ENGINES}")
    t_end = float(_require(document, "t_end", (int, float)))
    if t_end < 0:
        raise ConfigError(f"t_end must be nonnegative, got {t_end}")
    dt = float(_require(document, "dt", (int, float)))
    if dt <= 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    stride = int(document.get("stride", 1))
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    n_ensemble = int(document.get("n_ensemble", 1))
    if engine in ("mcwf", "nmqj", "classical-ensemble") and n_ensemble < 1:
        raise ConfigError(f"n_ensemble must be >= 1, got {n_ensemble}")
    system = _require(document, "system", dict)
    sys_type = system.get("type")
    if engine in QUANTUM_ENGINES and sys_type != "quantum":
        raise ConfigError(f"engine {engine!r} needs a system of type 'quantum', got {sys_type!r}")
    if engine.startswith("classical") and sys_type != "classical":
        raise ConfigError(f"engine {engine!r} needs a system of type 'classical', got {sys_type!r}")
    initial = document.get("initial", {})
    output = document.get("output", {})
    fmt = output.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"output.format must be 'csv' or 'json', got {fmt!r}")
    return ScenarioConfig(
        name=document.get("name", "run"),
        engine=engine,
        system=system,
        initial=initial,
        t_end=t_end,
        dt=dt,
        stride=stride,
        n_ensemble=n_ensemble,
        seed=int(document.get("seed", 0)),
        cp_points=int(document.get("cp_points", 20)),
        out_format=fmt,
        out_path=output.get("path"),
        raw=document,
    )


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path) as fh:
            document = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return parse_config(document)


def _initial_ket(cfg: ScenarioConfig, dim: int) -> StateVector:
    if "ket" not in cfg.initial:
        raise ConfigError(f"engine {cfg.engine!r} needs an initial.ket")
    amps = [_complex_entry(x, "initial.ket") for x in cfg.initial["ket"]]
    if len(amps) != dim:
        raise ConfigError(f"initial.ket length {len(amps)} does not match dimension {dim}")
    return StateVector(amps, normalize=True)


def _initial_density(cfg: ScenarioConfig, dim: int) -> DensityMatrix:
    if "density_matrix" in cfg.initial:
        m = _complex_matrix(cfg.initial["density_matrix"], "initial.density_matrix")
        try:
            return DensityMatrix(m)
        except ValueError as exc:
            raise ConfigError(f"initial.density_matrix: {exc}") from exc
    if "ket" in cfg.initial:
        return DensityMatrix.from_ket(_initial_ket(cfg, dim))
    raise ConfigError("initial must provide 'density_matrix' or 'ket'")


def _quantum_columns(dim: int) -> list[str]:
    cols = ["t"]
    for i in range(dim):
        for j in range(dim):
            cols.append(f"rho_{i}{j}_re")
            cols.append(f"rho_{i}{j}_im")
    return cols


def _quantum_rows(times, states) -> list[tuple]:
    rows = []
    for t, m in zip(times, states):
        row = [float(t)]
        for x in np.asarray(m).reshape(-1):
            row.append(float(x.real))
            row.append(float(x.imag))
        rows.append(tuple(row))
    return rows


def execute(cfg: ScenarioConfig):
    """Run the configured engine; returns (columns, rows, guard_stats)."""
    guard = {"max_step_probability": 0.0}
    if cfg.engine in QUANTUM_ENGINES:
        g = build_quantum_system(cfg.system)
        if cfg.engine == "ode":
            res = integrator.propagate(g, _initial_density(cfg, g.dim), cfg.t_end, cfg.dt, cfg.stride)
            return _quantum_columns(g.dim), _quantum_rows(res.times, res.states), guard
        if cfg.engine == "mcwf":
            res = mcwf.run_ensemble(
                g, _initial_ket(cfg, g.dim), cfg.t_end, cfg.dt, cfg.n_ensemble, cfg.seed
            )
            keep = [i for i in range(len(res.times)) if i % cfg.stride == 0 or i == len(res.times) - 1]
            guard["max_step_probability"] = res.max_step_probability
            return (
                _quantum_columns(g.dim),
                _quantum_rows(res.times[keep], [res.states[i] for i in keep]),
                guard,
            )
        if cfg.engine == "nmqj":
            res = nmqj.run_ensemble_nm(
                g, _initial_ket(cfg, g.dim), cfg.t_end, cfg.dt, cfg.n_ensemble, cfg.seed, cfg.stride
            )
            guard["max_step_probability"] = res.stats.max_step_probability
            return _quantum_columns(g.dim), _quantum_rows(res.times, res.states), guard
        # cp-audit
        grid = [cfg.t_end * k / cfg.cp_points for k in range(1, cfg.cp_points + 1)]
        reports = integrator.cp_check(g, grid, cfg.dt)
        rows = [(r.time, r.min_eigenvalue, r.is_cp) for r in reports]
        return ["t", "min_eigenvalue", "is_cp"], rows, guard

    spec = build_classical_system(cfg.system)
    if cfg.engine == "classical-ode":
        if "probabilities" not in cfg.initial:
            raise ConfigError("engine 'classical-ode' needs initial.probabilities")
        res = classical.integrate(spec, cfg.initial["probabilities"], cfg.t_end, cfg.dt, cfg.stride)
        cols = ["t"] + [f"p{k + 1}" for k in range(spec.n)]
        rows = [
            (float(t), *[float(x) for x in p]) for t, p in zip(res.times, res.probabilities)
        ]
        return cols, rows, guard
    # classical-ensemble
    if "counts" in cfg.initial:
        counts = cfg.initial["counts"]
    elif "probabilities" in cfg.initial:
        p = np.asarray(cfg.initial["probabilities"], dtype=float)
        counts = np.round(p * cfg.n_ensemble).astype(int)
    else:
        raise ConfigError("engine 'classical-ensemble' needs initial.counts or initial.probabilities")
    res = classical.sample_ensemble(spec, counts, cfg.t_end, cfg.dt, cfg.seed, cfg.stride)
    guard["max_step_probability"] = res.max_step_probability
    cols = ["t"] + [f"p{k + 1}" for k in range(spec.n)]
    rows = [
        (float(t), *[float(x) for x in c / res.total]) for t, c in zip(res.times, res.counts)
    ]
    return cols, rows, guard
