"""Run configurations: parsing, validation and serialization.

A configuration is a YAML mapping.  Core keys are ``experiment``,
``master_seed``, ``n``, ``replicas``, ``workers``, ``system``,
``distribution``, ``params`` and ``output``.  Experiment parameters may sit
under ``params`` or at the top level; command-line overrides are applied
last.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .dist import DistributionError, DistributionSpec
from .engine import PRESETS, AffinePhi, OppenheimSystem, preset

EXPERIMENTS = ("sample", "extremes", "bounds", "mixing", "blocking", "mda")
FORMATS = ("json", "csv")

PARAM_KEYS = {
    "sample": {"arithmetic_mode"},
    "extremes": {"mode", "normalization", "grid", "ell0_plus", "ell1_minus", "p",
                 "x", "y", "rho_scale", "sigma_scale"},
    "bounds": {"variant", "a", "b", "groups", "battery"},
    "mixing": {"p", "q", "u", "gap", "left", "right", "beta"},
    "blocking": {"k", "m", "u", "beta", "mode", "a_n", "b_n", "grid"},
    "mda": {"h_values", "y_sequence", "beta", "grid_points"},
}
CORE_KEYS = {"experiment", "master_seed", "n", "replicas", "workers", "system",
             "distribution", "params", "output"}


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class RunConfig:
    experiment: str
    master_seed: int
    n: int | None = None
    replicas: int | None = None
    workers: int = 1
    system: Any = None
    distribution: dict | None = None
    params: dict = field(default_factory=dict)
    output: dict = field(default_factory=lambda: {"format": "json", "path": None})

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "master_seed": self.master_seed, "n": self.n,
                "replicas": self.replicas, "workers": self.workers,
                "system": copy.deepcopy(self.system),
                "distribution": copy.deepcopy(self.distribution),
                "params": copy.deepcopy(self.params), "output": dict(self.output)}

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


def _positive_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(path, f"must be a positive integer, got {value!r}")
    return value


def parse_config(data: dict, overrides: dict | None = None) -> RunConfig:
    """Validate a raw mapping (plus overrides) into a :class:`RunConfig`."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "configuration must be a mapping")
    data = copy.deepcopy(data)
    params = dict(data.pop("params", None) or {})
    for key in list(data):
        if key not in CORE_KEYS:
            params[key] = data.pop(key)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "preset":
            sysval = data.get("system")
            if isinstance(sysval, dict):
                sysval = dict(sysval, preset=value)
            else:
                sysval = value
            data["system"] = sysval
        elif key in ("out", "format"):
            out = dict(data.get("output") or {})
            out["path" if key == "out" else "format"] = value
            data["output"] = out
        elif key == "seed":
            data["master_seed"] = value
        else:
            data[key] = value

    exp = data.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError("experiment", f"must be one of {EXPERIMENTS}, got {exp!r}")
    if "master_seed" not in data or data["master_seed"] is None:
        raise ConfigError("master_seed", "is required (no entropy-based default)")
    seed = data["master_seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0 or seed >= 2 ** 64:
        raise ConfigError("master_seed", "must be an integer in [0, 2**64)")
    unknown = set(params) - PARAM_KEYS[exp]
    if unknown:
        bad = sorted(unknown)[0]
        raise ConfigError(f"params.{bad}", f"not a parameter of experiment {exp!r}")

    n = data.get("n")
    replicas = data.get("replicas")
    if n is not None:
        _positive_int(n, "n")
    if replicas is not None:
        _positive_int(replicas, "replicas")
    workers = _positive_int(data.get("workers", 1), "workers")

    output = {"format": "json", "path": None}
    output.update(data.get("output") or {})
    if output["format"] not in FORMATS:
        raise ConfigError("output.format", f"must be one of {FORMATS}, got {output['format']!r}")

    cfg = RunConfig(exp, seed, n, replicas, workers, data.get("system"),
                    data.get("distribution"), params, output)
    _validate_experiment(cfg)
    return cfg


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc}") from exc
    return parse_config(data, overrides)


# -- resolution -------------------------------------------------------------

def resolve_distribution(raw, path: str) -> DistributionSpec:
    if isinstance(raw, str):
        raw = {"family": raw}
    if not isinstance(raw, dict):
        raise ConfigError(path, "must be a mapping with a 'family' key")
    try:
        return DistributionSpec.from_dict(raw)
    except DistributionError as exc:
        raise ConfigError(path, str(exc)) from exc


def resolve_system(cfg: RunConfig, mode: str = "float"):
    """Build the system named by ``cfg.system`` (default preset: unit)."""
    raw = cfg.system if cfg.system is not None else "unit"
    F = None
    if cfg.distribution is not None:
        F = resolve_distribution(cfg.distribution, "distribution")
    if isinstance(raw, str):
        raw = {"preset": raw}
    if not isinstance(raw, dict):
        raise ConfigError("system", "must be a preset name or a mapping")
    name = raw.get("preset", "custom")
    if name not in PRESETS:
        raise ConfigError("system.preset", f"must be one of {PRESETS}, got {name!r}")
    if "distribution" in raw:
        F = resolve_distribution(raw["distribution"], "system.distribution")
    mode = raw.get("arithmetic_mode", mode)
    if name != "custom":
        try:
            return preset(name, F, mode)
        except ValueError as exc:
            raise ConfigError("system", str(exc)) from exc
    phi = raw.get("phi")
    if not isinstance(phi, dict) or "c1" not in phi or "c0" not in phi:
        raise ConfigError("system.phi", "custom systems need phi: {c1: int, c0: int}")
    try:
        cap = raw.get("digit_cap", 10 ** 300)
        return OppenheimSystem(AffinePhi(phi["c1"], phi["c0"]), float(raw.get("q", 0.0)),
                               F or DistributionSpec.uniform(),
                               int(raw.get("initial_digit", 1)),
                               None if cap is None else int(cap), mode, "custom")
    except ValueError as exc:
        raise ConfigError("system", str(exc)) from exc


def _need(cfg: RunConfig, key: str):
    if getattr(cfg, key) is None:
        raise ConfigError(key, f"is required for experiment {cfg.experiment!r}")


def _validate_experiment(cfg: RunConfig) -> None:
    p = cfg.params
    exp = cfg.experiment
    if exp != "mda":
        resolve_system(cfg)
    else:
        if cfg.distribution is not None:
            resolve_distribution(cfg.distribution, "distribution")
    if exp == "sample":
        _need(cfg, "n")
    elif exp == "extremes":
        _need(cfg, "n")
        _need(cfg, "replicas")
        mode = p.get("mode", "limit")
        if mode not in ("limit", "independence"):
            raise ConfigError("params.mode", "must be 'limit' or 'independence'")
        if mode == "independence" and ("x" not in p or "y" not in p):
            raise ConfigError("params.x", "independence mode needs x and y")
        if mode == "limit" and "normalization" not in p:
            raise ConfigError("params.normalization", "is required in limit mode")
    elif exp == "bounds":
        _need(cfg, "replicas")
        variant = p.get("variant")
        if variant not in ("i", "ii", "iii", "lemma1", "thm6_battery", "lemma1_battery"):
            raise ConfigError("params.variant", f"unknown variant {variant!r}")
        if variant in ("i", "ii", "iii"):
            _need(cfg, "n")
        if variant in ("i", "iii") and "a" not in p:
            raise ConfigError("params.a", f"variant {variant} needs a")
        if variant in ("i", "ii") and "b" not in p:
            raise ConfigError("params.b", f"variant {variant} needs b")
        if variant == "lemma1" and "groups" not in p:
            raise ConfigError("params.groups", "lemma1 needs groups [[indices, x], ...]")
    elif exp == "mixing":
        _need(cfg, "replicas")
        if "u" not in p:
            raise ConfigError("params.u", "is required")
    elif exp == "blocking":
        _need(cfg, "n")
        _need(cfg, "replicas")
        mode = p.get("mode", "gap")
        if mode == "scan":
            for key in ("a_n", "b_n"):
                if key not in p:
                    raise ConfigError(f"params.{key}", "scan mode needs a_n and b_n")
            return
        for key in ("k", "m", "u"):
            if key not in p:
                raise ConfigError(f"params.{key}", "is required")
        k, m = p["k"], p["m"]
        if not isinstance(k, int) or k < 1:
            raise ConfigError("params.k", "must be a positive integer")
        if not isinstance(m, int) or m <= k:
            raise ConfigError("params.m", f"must exceed k={k}, got {m!r}")
        if m >= cfg.n // k:
            raise ConfigError("params.m", f"must be below n' = floor(n/k) = {cfg.n // k}")
        if not 0 < p["u"] <= 1:
            raise ConfigError("params.u", "must lie in (0, 1]")
    elif exp == "mda":
        if cfg.distribution is None and cfg.system is None:
            raise ConfigError("distribution", "mda needs a distribution")
