"""
Monte Carlo orchestration: configs, baseline wiring, paired trials and
CSV/JSON emission.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import (ScenarioConfig, default_mode_mask, generate_channels,
                      reflect_only_mask, trial_rng)
from .numerics import InvalidInputError
from .rates import BeamformerSet
from .solver import ProblemWiring, SolveResult, SolverSettings, optimize

SCHEMES = ("tin", "rsma")
RIS_MODES = ("none", "random", "reflect", "star")
SWEEP_VARS = ("P_C", "n", "eps", "P")
HEADER = ("sweep_var", "sweep_value", "trial", "scheme", "ris_mode", "min_ee_nats",
          "min_ee_bits", "iters", "status", "wall_ms")

# direction in which the optimum can only improve; sweeps are chained that way
_IMPROVING = {"P_C": -1, "n": 1, "eps": 1, "P": 1}


class ConfigError(InvalidInputError):
    """Malformed or unknown configuration entry."""


@dataclass(frozen=True)
class ExperimentSpec:
    """A grid of (sweep value, trial, scheme, RIS mode) runs.

    With no sweep values the base config is run once under ``sweep_var``
    at its current value.
    """
    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    schemes: tuple = ("rsma",)
    ris_modes: tuple = ("star",)
    sweep_var: str = "P_C"
    sweep_values: tuple = ()
    trials: int = 1
    warm_start: bool = True
    workers: int = 1
    timing: bool = False
    settings: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        bad = [s for s in self.schemes if s not in SCHEMES]
        bad += [m for m in self.ris_modes if m not in RIS_MODES]
        if bad or not self.schemes or not self.ris_modes:
            raise ConfigError(f"unknown or missing scheme/ris_mode: {bad}")
        if self.sweep_var not in SWEEP_VARS:
            raise ConfigError(f"sweep_var must be one of {SWEEP_VARS}")
        v = np.asarray(self.sweep_values, dtype=float)
        if np.any(v <= 0) or np.any(np.diff(v) <= 0):
            raise ConfigError("sweep values must be positive and strictly increasing")

    @property
    def values(self) -> tuple:
        if self.sweep_values:
            return tuple(self.sweep_values)
        return (current_value(self.base, self.sweep_var),)


@dataclass
class ResultRow:
    sweep_var: str
    sweep_value: float
    trial: int
    scheme: str
    ris_mode: str
    min_ee_nats: float
    iters: int
    status: str
    wall_ms: float
    r: np.ndarray
    e: np.ndarray
    result: SolveResult | None = field(default=None, repr=False, compare=False)

    @property
    def min_ee_bits(self) -> float:
        return self.min_ee_nats / math.log(2.0)

    @property
    def key(self):
        return (self.sweep_var, self.sweep_value, self.trial, SCHEMES.index(self.scheme),
                RIS_MODES.index(self.ris_mode))


# --------------------------------------------------------------------------
# configuration

def current_value(cfg: ScenarioConfig, var: str) -> float:
    return {"P_C": cfg.P_C, "n": cfg.n_p, "eps": cfg.eps_total, "P": cfg.P}[var]


def apply_sweep(cfg: ScenarioConfig, var: str, value) -> ScenarioConfig:
    """Config at one sweep point; ``n`` sets both blocklengths, ``eps`` the
    total error budget (split by ``eps_common_fraction``)."""
    if var == "n":
        if float(value) != int(value):
            raise ConfigError(f"blocklength must be an integer, got {value}")
        return cfg.replace(n_c=int(value), n_p=int(value))
    if var == "eps":
        return cfg.replace(eps_total=float(value))
    if var in ("P_C", "P"):
        return cfg.replace(**{var: float(value)})
    raise ConfigError(f"unknown sweep variable {var!r}")


def _tuplify(v):
    return tuple(_tuplify(x) for x in v) if isinstance(v, list) else v


def spec_from_dict(doc: dict) -> ExperimentSpec:
    """Flat mapping of ScenarioConfig and ExperimentSpec field names."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    scen = {f.name for f in dataclasses.fields(ScenarioConfig)}
    exp = {f.name for f in dataclasses.fields(ExperimentSpec)} - {"base", "settings"}
    unknown = sorted(set(doc) - scen - exp)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        base = ScenarioConfig(**{k: _tuplify(v) for k, v in doc.items() if k in scen})
        return ExperimentSpec(base=base, **{k: _tuplify(v) for k, v in doc.items() if k in exp})
    except ConfigError:
        raise
    except (InvalidInputError, TypeError, ValueError) as err:
        raise ConfigError(str(err)) from err


def load_spec(path) -> ExperimentSpec:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return spec_from_dict(doc)


# --------------------------------------------------------------------------
# wiring

def random_theta(cfg: ScenarioConfig, seed: int, trial: int) -> np.ndarray:
    """Unit-modulus coefficients with uniform phase, fixed per trial."""
    rng = trial_rng(seed, trial, stream=1)
    return np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, cfg.M))


def wire_baseline(scheme: str, ris_mode: str, cfg: ScenarioConfig,
                  trial: int = 0) -> ProblemWiring:
    if scheme not in SCHEMES or ris_mode not in RIS_MODES:
        raise ConfigError(f"unknown scheme/ris_mode {scheme!r}/{ris_mode!r}")
    if ris_mode == "reflect":
        return ProblemWiring(scheme, reflect_only_mask(cfg.M), True, None)
    mask = default_mode_mask(cfg.M)
    if ris_mode == "none":
        return ProblemWiring(scheme, mask, False, np.zeros(cfg.M, complex))
    if ris_mode == "random":
        return ProblemWiring(scheme, mask, False, random_theta(cfg, cfg.seed, trial))
    return ProblemWiring(scheme, mask, True, None)


def _donors(scheme, mode, spec_schemes, spec_modes):
    """Earlier runs at the same sweep point that warm-start ``(scheme, mode)``."""
    out = []
    if scheme == "rsma" and "tin" in spec_schemes:
        out.append(("tin", mode))
    for m in spec_modes:
        if RIS_MODES.index(m) < RIS_MODES.index(mode):
            out.append((scheme, m))
    return out


# --------------------------------------------------------------------------
# execution

def _run_trial(spec: ExperimentSpec, trial: int) -> list[ResultRow]:
    base = spec.base
    cs = generate_channels(base, trial_rng(base.seed, trial, stream=0))
    values = spec.values
    order = sorted(range(len(values)), key=lambda i: _IMPROVING[spec.sweep_var] * values[i])
    schemes = [s for s in SCHEMES if s in spec.schemes]
    modes = [m for m in RIS_MODES if m in spec.ris_modes]
    rows, previous = [], {}
    for i in order:
        cfg = apply_sweep(base, spec.sweep_var, values[i])
        here = {}
        for scheme in schemes:
            for mode in modes:
                init = []
                if spec.warm_start:
                    init = [here[d] for d in _donors(scheme, mode, schemes, modes) if d in here]
                    if mode == "reflect" and (scheme, "random") in here:
                        # keep what the reflect-side users saw under the random setting
                        ws_r, th_r = here[(scheme, "random")]
                        init.append((ws_r, np.where(default_mode_mask(cfg.M) == "r", th_r, 0)))
                    if (scheme, mode) in previous:
                        init.append(previous[(scheme, mode)])
                t0 = time.perf_counter()
                try:
                    wiring = wire_baseline(scheme, mode, cfg, trial)
                    res = optimize(cs, cfg, spec.settings, wiring, init=init)
                except Exception as err:  # recorded, the run continues
                    rows.append(ResultRow(spec.sweep_var, float(values[i]), trial, scheme, mode,
                                          math.nan, 0, f"error:{type(err).__name__}", 0.0,
                                          np.full(base.K, math.nan), np.full(base.K, math.nan)))
                    continue
                wall = (time.perf_counter() - t0) * 1e3 if spec.timing else 0.0
                here[(scheme, mode)] = (res.ws, res.ris.active)
                rows.append(ResultRow(spec.sweep_var, float(values[i]), trial, scheme, mode,
                                      res.report.min_ee, res.iterations, res.status, wall,
                                      res.report.r_k.copy(), res.report.e_k.copy(), res))
        previous = here
    return rows


def run_experiment(spec: ExperimentSpec) -> list[ResultRow]:
    """All rows of the experiment in canonical order.

    Every configuration of one trial shares its channel realization, and
    trials run sequentially inside one worker so warm starts chain across
    schemes, RIS modes and sweep points.
    """
    trials = range(spec.trials)
    if spec.workers > 1 and spec.trials > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            chunks = list(pool.map(_run_trial, [spec] * spec.trials, trials))
    else:
        chunks = [_run_trial(spec, t) for t in trials]
    rows = [r for c in chunks for r in c]
    return sorted(rows, key=lambda r: r.key)


# --------------------------------------------------------------------------
# output

def _fmt(x) -> str:
    return format(float(x), ".9g")


def _row_fields(row: ResultRow, K: int) -> list:
    r = list(row.r) + [math.nan] * (K - len(row.r))
    e = list(row.e) + [math.nan] * (K - len(row.e))
    return [row.sweep_var, _fmt(row.sweep_value), str(row.trial), row.scheme, row.ris_mode,
            _fmt(row.min_ee_nats), _fmt(row.min_ee_bits), str(row.iters), row.status,
            _fmt(row.wall_ms)] + [_fmt(x) for x in r] + [_fmt(x) for x in e]


def header(K: int) -> list:
    return list(HEADER) + [f"r_{k}" for k in range(1, K + 1)] + [f"e_{k}" for k in range(1, K + 1)]


def to_csv(rows, K: int | None = None) -> str:
    K = K if K is not None else (len(rows[0].r) if rows else 0)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header(K))
    for row in rows:
        w.writerow(_row_fields(row, K))
    return buf.getvalue()


def to_json(rows) -> str:
    out = []
    for row in rows:
        out.append({"sweep_var": row.sweep_var, "sweep_value": float(_fmt(row.sweep_value)),
                    "trial": row.trial, "scheme": row.scheme, "ris_mode": row.ris_mode,
                    "min_ee_nats": float(_fmt(row.min_ee_nats)),
                    "min_ee_bits": float(_fmt(row.min_ee_bits)), "iters": row.iters,
                    "status": row.status, "wall_ms": float(_fmt(row.wall_ms)),
                    "r": [float(_fmt(x)) for x in row.r], "e": [float(_fmt(x)) for x in row.e]})
    return json.dumps(out, indent=1) + "\n"


def emit(rows, path=None, fmt: str = "csv", K: int | None = None) -> str:
    """Serialize rows; write to ``path`` when given and return the text."""
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown format {fmt!r}")
    text = to_csv(rows, K) if fmt == "csv" else to_json(rows)
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def parse_csv(text: str) -> list[ResultRow]:
    rd = csv.reader(io.StringIO(text))
    head = next(rd)
    K = (len(head) - len(HEADER)) // 2
    rows = []
    for f in rd:
        n = len(HEADER)
        rows.append(ResultRow(f[0], float(f[1]), int(f[2]), f[3], f[4], float(f[5]), int(f[7]),
                              f[8], float(f[9]), np.array(f[n:n + K], dtype=float),
                              np.array(f[n + K:n + 2 * K], dtype=float)))
    return rows
