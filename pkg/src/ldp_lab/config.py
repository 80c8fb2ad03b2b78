"""Strict JSON run configuration.

Unknown keys and wrong types are rejected with the offending key named.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .model import ModelParams

PARAM_DEFAULTS = {
    "U": 1000, "K": 1, "L": 2, "alpha": [1.0], "beta": None, "b": [[0.9, 0.1]],
    "epsilon": 1.0, "theta": 1.0,
}
PARAM_REQUIRED = ("N", "w")
PARAM_TYPES = {
    "N": int, "U": int, "K": int, "L": int, "w": int, "alpha": list, "beta": list, "b": list,
    "epsilon": float, "theta": float,
}

TOP_DEFAULTS = {
    "algorithm": "maxsense", "seed": 0, "trials": 20, "target": 0.9, "engine": "dense",
    "mode": "random-global", "restarts": 10, "distortion": 0, "grid": {}, "out_dir": ".",
    "U0": None, "U_cap": 200_000_000,
}
TOP_TYPES = {
    "algorithm": str, "seed": int, "trials": int, "target": float, "engine": str, "mode": str,
    "restarts": int, "distortion": int, "grid": dict, "out_dir": str, "U0": int, "U_cap": int,
    "params": dict,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    params: dict
    algorithm: str = "maxsense"
    seed: int = 0
    trials: int = 20
    target: float = 0.9
    engine: str = "dense"
    mode: str = "random-global"
    restarts: int = 10
    distortion: int = 0
    grid: dict = field(default_factory=dict)
    out_dir: str = "."
    U0: int | None = None
    U_cap: int = 200_000_000

    def model(self) -> ModelParams:
        return ModelParams.from_dict(self.params)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _typed(key, value, want):
    if value is None and key.split(".")[-1] in ("U0", "beta"):
        return value
    if want is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if want is int and isinstance(value, bool):
        raise ConfigError(f"key {key!r}: expected int, got bool")
    if not isinstance(value, want):
        raise ConfigError(f"key {key!r}: expected {want.__name__}, got {type(value).__name__}")
    return value


def config_from_dict(d: dict) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    for k in d:
        if k not in TOP_TYPES:
            raise ConfigError(f"unknown key {k!r}")
    if "params" not in d:
        raise ConfigError("missing required key 'params'")
    raw = d["params"]
    if not isinstance(raw, dict):
        raise ConfigError("key 'params': expected object")
    for k in raw:
        if k not in PARAM_TYPES:
            raise ConfigError(f"unknown key 'params.{k}'")
    for k in PARAM_REQUIRED:
        if k not in raw:
            raise ConfigError(f"missing required key 'params.{k}'")
    params = {}
    for k, want in PARAM_TYPES.items():
        v = raw.get(k, PARAM_DEFAULTS.get(k))
        params[k] = _typed(f"params.{k}", v, want)
    if params["beta"] is None:
        params["beta"] = [1.0 / params["L"]] * params["L"]
    top = {}
    for k, default in TOP_DEFAULTS.items():
        top[k] = _typed(k, d.get(k, default), TOP_TYPES[k]) if d.get(k, default) is not None else None
    return RunConfig(params=params, **top)


def emit_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(cfg.to_json() + "\n")


def parse_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(d)
