"""Experiment configuration documents: validation, defaults and round-tripping."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from ..measures import PRESETS, SpecError, schedule_from_spec

DEFAULT_SEED = 20240917
SCHEMA_VERSION = 1

# Per-experiment defaults. Thresholds come from fixed-seed pilot runs and are
# inputs to the verdicts, not claims about the underlying constants.
DEFAULTS: dict[str, dict] = {
    "simulate": {"n_grid": [100], "trials": 10_000, "params": {}},
    "lln": {"n_grid": [50, 100, 200, 400, 800], "trials": 5_000, "params": {"z": 4.0}},
    "var": {
        "n_grid": [250, 500, 1000, 2000, 4000],
        "trials": 20_000,
        "params": {"z": 4.0, "band_ratio": 2.0, "burn_in": 0, "jackknife_groups": 20},
    },
    "clt": {"n_grid": [2000], "trials": 20_000, "params": {"ks_threshold": 0.02, "synthetic": None}},
    "rmoments": {"n_grid": [50, 100, 200, 400, 800], "trials": 10_000, "params": {"factor": 2.0}},
    "rtail": {
        "n_grid": [400],
        "trials": 1_000_000,
        "x_grid": [2.0, 4.0, 8.0, 16.0],
        "params": {"slope_slack": 1.0, "stability_factor": 2.0},
    },
    "regularity": {
        "n_grid": [200],
        "trials": 100_000,
        "r_grid": [1e-1, 1e-2, 1e-3, 1e-4],
        "params": {"p1_points": 4, "p2_points": 8, "kappa": 0.9, "stability_factor": 4.0},
    },
    "atoms": {
        "n_grid": [1, 2, 4, 8, 16, 32, 64],
        "trials": 100_000,
        "r_grid": [0.01],
        "params": {"p0": 0.0, "max_mass": 0.1, "z": 3.0},
    },
    "cf-contraction": {
        "n_grid": [500],
        "trials": 200_000,
        "rho_grid": [0.5],
        "params": {"source": "exp", "C": 1.0, "bootstrap": 30, "z": 3.0},
    },
    "cf-perturbation": {
        "n_grid": [100, 200, 400, 800],
        "trials": 20_000,
        "rho_grid": [0.5],
        "params": {"slope_max": -1.2, "synthetic": None},
    },
    "theta-check": {
        "n_grid": [1],
        "trials": 1_000_000,
        "params": {"log_norm_max": 10.0, "x_low": 0.5, "x_high": 10.0},
    },
    "rank-one": {"n_grid": [8], "trials": 10_000, "params": {"grid": 32, "z": 4.0}},
}

EXPERIMENTS = tuple(DEFAULTS)
_KEYS = {"preset", "schedule", "n_grid", "trials", "seed", "workers", "gamma",
         "rho_grid", "r_grid", "x_grid", "params"}


class ConfigError(ValueError):
    """Invalid configuration; ``violations`` lists ``(field path, message)`` pairs."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.violations))


@dataclass(frozen=True)
class ExperimentConfig:
    schedule: dict
    n_grid: tuple[int, ...]
    trials: int
    seed: int = DEFAULT_SEED
    workers: int = 1
    gamma: float = 9.0
    preset: str | None = None
    rho_grid: tuple[float, ...] | None = None
    r_grid: tuple[float, ...] | None = None
    x_grid: tuple[float, ...] | None = None
    params: dict = field(default_factory=dict)

    def build_schedule(self):
        return schedule_from_spec(self.schedule)

    def to_document(self, include_workers: bool = True) -> dict:
        doc = {
            "preset": self.preset,
            "schedule": self.schedule,
            "n_grid": list(self.n_grid),
            "trials": self.trials,
            "seed": self.seed,
            "gamma": self.gamma,
            "params": dict(self.params),
        }
        if include_workers:
            doc["workers"] = self.workers
        for key in ("rho_grid", "r_grid", "x_grid"):
            val = getattr(self, key)
            if val is not None:
                doc[key] = list(val)
        if doc["preset"] is None:
            del doc["preset"]
        return doc


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def validate_config(document, experiment: str | None = None) -> ExperimentConfig:
    """Turn a parsed config document into an :class:`ExperimentConfig`.

    Missing fields are filled from the experiment's defaults. All problems
    are collected and raised together as a :class:`ConfigError`.
    """
    errs: list = []
    if not isinstance(document, dict):
        raise ConfigError([("<root>", "config must be a JSON object")])
    defaults = DEFAULTS.get(experiment or "simulate")
    if defaults is None:
        raise ConfigError([("<experiment>", f"unknown experiment {experiment!r}")])
    for key in document:
        if key not in _KEYS:
            errs.append((key, "unknown field"))

    preset = document.get("preset")
    sched_doc = document.get("schedule")
    if sched_doc is None:
        if preset is None:
            errs.append(("schedule", "either 'preset' or 'schedule' is required"))
        elif preset not in PRESETS:
            errs.append(("preset", f"unknown preset {preset!r}; available: {', '.join(sorted(PRESETS))}"))
        else:
            sched_doc = PRESETS[preset]
    elif preset is not None and preset not in PRESETS:
        errs.append(("preset", f"unknown preset {preset!r}; available: {', '.join(sorted(PRESETS))}"))
    if sched_doc is not None:
        # accept both the bare body and the {"schedule": {...}} wrapper
        if isinstance(sched_doc, dict) and set(sched_doc) == {"schedule"}:
            sched_doc = sched_doc["schedule"]
        try:
            schedule_from_spec(sched_doc)
        except SpecError as exc:
            errs.extend(exc.violations)

    n_grid = document.get("n_grid", defaults["n_grid"])
    if not isinstance(n_grid, list) or not n_grid or not all(_is_int(n) and n >= 0 for n in n_grid):
        errs.append(("n_grid", "must be a nonempty array of nonnegative integers"))
    elif any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        errs.append(("n_grid", "must be strictly ascending"))

    trials = document.get("trials", defaults["trials"])
    if not _is_int(trials) or trials < 1:
        errs.append(("trials", f"must be an integer >= 1, got {trials!r}"))
    seed = document.get("seed", DEFAULT_SEED)
    if not _is_int(seed) or not 0 <= seed < 2**64:
        errs.append(("seed", "must be an integer in [0, 2^64)"))
    workers = document.get("workers", 1)
    if not _is_int(workers) or not 1 <= workers <= 256:
        errs.append(("workers", f"must be an integer in [1, 256], got {workers!r}"))
    gamma = document.get("gamma", 9.0)
    if not _is_num(gamma) or gamma <= 0:
        errs.append(("gamma", "must be a positive number"))

    grids = {}
    for key in ("rho_grid", "r_grid", "x_grid"):
        val = document.get(key, defaults.get(key))
        if val is None:
            grids[key] = None
            continue
        if not isinstance(val, list) or not val or not all(_is_num(v) and v > 0 for v in val):
            errs.append((key, "must be a nonempty array of positive numbers"))
            grids[key] = None
        else:
            grids[key] = tuple(float(v) for v in val)

    params = dict(defaults["params"])
    extra = document.get("params", {})
    if not isinstance(extra, dict):
        errs.append(("params", "must be an object"))
    else:
        for k, v in extra.items():
            if k not in params:
                errs.append((f"params.{k}", f"unknown parameter for {experiment or 'simulate'}"))
            else:
                params[k] = v

    if errs:
        raise ConfigError(errs)
    return ExperimentConfig(
        schedule=sched_doc,
        n_grid=tuple(n_grid),
        trials=trials,
        seed=seed,
        workers=workers,
        gamma=float(gamma),
        preset=preset,
        params=params,
        **grids,
    )


def load_config(path, experiment: str | None = None) -> ExperimentConfig:
    """Read and validate a JSON config file; parse errors carry line/column."""
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([(f"line {exc.lineno} column {exc.colno}", exc.msg)]) from exc
    return validate_config(doc, experiment)
