"""Experiment configuration: flat ``key = value`` files plus ``--key=value`` overrides."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .params import InitialCondition, ModelParams, NoiseLaw

OUTPUT_DIR_ENV = "EISTAB_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


def _int_list(text) -> tuple[int, ...]:
    if isinstance(text, (tuple, list)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).replace(";", ",").split(",") if v.strip())


def _float_list(text) -> tuple[float, ...]:
    if isinstance(text, (tuple, list)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).replace(";", ",").split(",") if v.strip())


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    val = str(text).strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    # model
    n: int = 1000
    f: float = 0.5
    sigma_I: float = 2.0
    sigma_E: float = 1.0
    a: float = 1.0
    kappa: float = 0.0
    # initial condition
    c_I: float = 1.0
    c_E: float = -1.0
    nu_I: str = "gaussian"
    nu_E: str = "gaussian"
    sigma0_I: float = 0.25
    sigma0_E: float = 0.25
    # time grid
    t_max: float = 2.0
    n_steps: int = 4
    # orchestration
    n_trials: int = 100
    master_seed: int = 20240611
    workers: int = 1
    output_dir: str = "results"
    # command-specific
    n_list: tuple = (100, 200, 400, 800)
    lemma_trials: int = 2000
    z_re: float = 0.0
    z_im: float = 1.0
    kappa_list: tuple = (0.0, 0.5, 1.0, 1.5, 2.0, 3.0)
    alt_weights: bool = False
    route: str = "projection"
    wn_branches: str = "auto"
    # pass/fail tolerances
    ks_tol: float = 0.06
    var_rtol: float = 0.10
    z_max: float = 5.0
    wn_ratio_lo: float = 0.9
    wn_ratio_hi: float = 1.1
    wn_var_rtol: float = 0.15
    qq_tol: float = 0.08
    slope_lo: float = -1.4
    slope_hi: float = -0.6

    def __post_init__(self):
        if self.t_max <= 0:
            raise ConfigError("t_max must be positive")
        if self.n_steps < 1:
            raise ConfigError("n_steps must be >= 1")
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if self.workers < 0:
            raise ConfigError("workers must be >= 0")
        if self.route not in ("projection", "basis"):
            raise ConfigError("route must be 'projection' or 'basis'")
        if self.wn_branches not in ("auto", "both"):
            raise ConfigError("wn_branches must be 'auto' or 'both'")
        try:
            self.params()
            self.initial_condition()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # -- derived objects
    def params(self) -> ModelParams:
        return ModelParams(self.n, self.f, self.sigma_I, self.sigma_E, self.a, self.kappa)

    def initial_condition(self) -> InitialCondition:
        return InitialCondition(self.c_I, self.c_E, NoiseLaw(self.nu_I), NoiseLaw(self.nu_E),
                                self.sigma0_I, self.sigma0_E)

    def time_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_steps + 1)

    @property
    def z(self) -> complex:
        return complex(self.z_re, self.z_im)

    @property
    def pool_size(self) -> int:
        return self.workers or (os.cpu_count() or 1)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        out = {}
        for fld in fields(self):
            val = getattr(self, fld.name)
            out[fld.name] = list(val) if isinstance(val, tuple) else val
        return out


_CONVERTERS = {}
for _fld in fields(ExperimentConfig):
    if _fld.name in ("n_list",):
        _CONVERTERS[_fld.name] = _int_list
    elif _fld.name in ("kappa_list",):
        _CONVERTERS[_fld.name] = _float_list
    elif _fld.type in ("int", int):
        _CONVERTERS[_fld.name] = int
    elif _fld.type in ("float", float):
        _CONVERTERS[_fld.name] = float
    elif _fld.type in ("bool", bool):
        _CONVERTERS[_fld.name] = _bool
    else:
        _CONVERTERS[_fld.name] = str


def coerce(values: dict) -> dict:
    out = {}
    for key, raw in values.items():
        key = key.strip().replace("-", "_")
        if key not in _CONVERTERS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            out[key] = _CONVERTERS[key](raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return out


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = line.split("=", 1)
        values[key.strip()] = val.strip()
    return values


def load_config(path=None, overrides: dict | None = None, env=None) -> ExperimentConfig:
    """Defaults < config file < $EISTAB_OUTPUT_DIR < explicit overrides."""
    env = os.environ if env is None else env
    values = {}
    if path is not None:
        try:
            values.update(parse_config_text(Path(path).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if env.get(OUTPUT_DIR_ENV):
        values["output_dir"] = env[OUTPUT_DIR_ENV]
    values.update(overrides or {})
    return ExperimentConfig(**coerce(values))
