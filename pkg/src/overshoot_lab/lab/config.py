"""Experiment configuration: parsing, defaults and hashing."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..errors import ConfigError, InvalidSpec
from ..increments import IncrementSpec, spec_from_json
from ..stats import config_hash

# keys every experiment understands; anything else goes through ``params``
CORE_KEYS = ("experiment", "spec", "seed", "m", "burn_in", "n", "probes", "h", "gamma", "out", "guard", "thresholds")


@dataclass
class ExperimentConfig:
    experiment: str
    spec: Any
    seed: int = 1
    m: int | None = None
    burn_in: int = 0
    n: int | None = None
    probes: list | None = None
    h: float | None = None
    gamma: float | None = None
    out: str = "results"
    guard: int | None = None
    thresholds: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def increment(self) -> IncrementSpec:
        return _parse_spec(self.spec)

    def increments(self) -> list[IncrementSpec]:
        """Every spec when ``spec`` is a list, else a one-element list."""
        if isinstance(self.spec, list):
            return [_parse_spec(s) for s in self.spec]
        return [self.increment()]

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in CORE_KEYS}
        out.update(self.params)
        return out

    def hash(self) -> str:
        # the output directory does not change any number
        d = self.to_dict()
        d.pop("out", None)
        return config_hash(d)

    def threshold(self, key: str):
        try:
            return self.thresholds[key]
        except KeyError:
            raise ConfigError(f"experiment {self.experiment!r} needs threshold {key!r}") from None

    def param(self, key: str, default=None):
        return self.params.get(key, default)


def _parse_spec(obj) -> IncrementSpec:
    try:
        return spec_from_json(obj)
    except (InvalidSpec, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad increment spec {obj!r}: {exc}") from exc


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "spec":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def read_config(source) -> dict:
    """Raw JSON object from a path, a JSON string or a dict."""
    if isinstance(source, dict):
        return copy.deepcopy(source)
    try:
        p = Path(source)
        if p.exists():
            return json.loads(p.read_text())
        return json.loads(source)
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc


def build_config(raw: dict, defaults_for) -> ExperimentConfig:
    """Merge ``raw`` over the defaults of its experiment and validate types.

    ``defaults_for(name)`` returns the default dict or raises ``KeyError``.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    name = raw.get("experiment")
    if not isinstance(name, str):
        raise ConfigError("config needs an 'experiment' name")
    try:
        defaults = defaults_for(name)
    except KeyError:
        raise ConfigError(f"unknown experiment {name!r}") from None
    merged = _merge(defaults, raw)
    core = {k: merged.pop(k) for k in CORE_KEYS if k in merged}
    cfg = ExperimentConfig(params=merged, **core)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig):
    if cfg.spec is None:
        raise ConfigError("config needs a 'spec'")
    cfg.increments()
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool) or cfg.seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    for key in ("m", "n", "guard"):
        v = getattr(cfg, key)
        if v is not None and (not isinstance(v, int) or isinstance(v, bool) or v < 1):
            raise ConfigError(f"{key} must be a positive integer")
    if not isinstance(cfg.burn_in, int) or cfg.burn_in < 0:
        raise ConfigError("burn_in must be a nonnegative integer")
    if cfg.h is not None and not (isinstance(cfg.h, (int, float)) and cfg.h > 0):
        raise ConfigError("h must be positive")
    if cfg.probes is not None and not (isinstance(cfg.probes, list) and all(isinstance(x, (int, float)) for x in cfg.probes)):
        raise ConfigError("probes must be a list of numbers")
    if not isinstance(cfg.thresholds, dict):
        raise ConfigError("thresholds must be an object")
