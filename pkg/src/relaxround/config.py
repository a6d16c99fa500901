"""INI run configuration: schema, validation, presets and echo.

Sections and keys::

    [problem]    preset, L, T, a, kappa, nx, cfl, control_intervals, eta0, target
    [control]    beta (constant first-mode weight) or beta_file (CSV)
    [optimizer]  max_iters, c1, backtrack, max_backtracks, stationarity_tol, initial_beta
    [study]      dt_sequence
    [round]      dt
    [gapcheck]   dt_sequence, beta, include_identity
    [run]        out, seed, selftest_directions, csv_every

Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .optimizer import DEFAULT_DT_SEQUENCE, OptimizeConfig
from .problems import Problem, burgers_switch, square_pulse


class ConfigError(ValueError):
    pass


PRESETS = ("burgers-switch",)
ETA0_CHOICES = ("pulse", "zero", "sine")
TARGET_CHOICES = ("one-minus-sin", "zero")
GAP_BETA_CHOICES = ("smooth", "control")


def _float_list(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default); defaults reproduce the flux-switching preset
SCHEMA = {
    "problem": {
        "preset": (str, "burgers-switch"),
        "L": (float, 2 * math.pi),
        "T": (float, 3.0),
        "a": (float, 5.0),
        "kappa": (float, 1e-8),
        "nx": (int, 300),
        "cfl": (float, 0.5),
        "control_intervals": (int, 48),
        "eta0": (str, "pulse"),
        "target": (str, "one-minus-sin"),
    },
    "control": {
        "beta": (float, 0.5),
        "beta_file": (str, ""),
    },
    "optimizer": {
        "max_iters": (int, 500),
        "c1": (float, 1e-4),
        "backtrack": (float, 0.5),
        "max_backtracks": (int, 30),
        "stationarity_tol": (float, 1e-8),
        "initial_beta": (float, 0.5),
    },
    "study": {
        "dt_sequence": (_float_list, DEFAULT_DT_SEQUENCE),
    },
    "round": {
        "dt": (float, 0.125),
    },
    "gapcheck": {
        "dt_sequence": (_float_list, DEFAULT_DT_SEQUENCE),
        "beta": (str, "smooth"),
        "include_identity": (_bool, True),
    },
    "run": {
        "out": (str, "out"),
        "seed": (int, 0),
        "selftest_directions": (int, 3),
        "csv_every": (int, 0),
    },
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, section):
        return self.values[section]

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls({s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})

    # ---------------------------------------------------------------- parsing
    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from exc
        cfg = cls.defaults()
        for section in cp.sections():
            if section not in SCHEMA:
                raise ConfigError(f"{source}: unknown section [{section}]")
            for key, raw in cp.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
                parser = SCHEMA[section][key][0]
                try:
                    cfg.values[section][key] = parser(raw)
                except ValueError as exc:
                    raise ConfigError(f"{source}: bad value for {section}.{key}: {raw!r}") from exc
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text, source=str(path))

    def override(self, section: str, key: str, value) -> None:
        if value is None:
            return
        self.values[section][key] = value
        self.validate()

    def validate(self) -> None:
        p = self.values["problem"]
        if p["preset"] not in PRESETS:
            raise ConfigError(f"unknown preset {p['preset']!r}")
        if p["eta0"] not in ETA0_CHOICES:
            raise ConfigError(f"eta0 must be one of {ETA0_CHOICES}")
        if p["target"] not in TARGET_CHOICES:
            raise ConfigError(f"target must be one of {TARGET_CHOICES}")
        for k in ("L", "T", "a", "kappa"):
            if not p[k] > 0:
                raise ConfigError(f"problem.{k} must be positive")
        if p["nx"] < 2 or p["control_intervals"] < 1:
            raise ConfigError("nx must be >= 2 and control_intervals >= 1")
        if not 0 < p["cfl"] <= 1:
            raise ConfigError("cfl must lie in (0, 1]")
        if not 0 <= self.values["control"]["beta"] <= 1:
            raise ConfigError("control.beta must lie in [0, 1]")
        o = self.values["optimizer"]
        try:
            self.optimize_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not 0 <= o["initial_beta"] <= 1:
            raise ConfigError("optimizer.initial_beta must lie in [0, 1]")
        for sec in ("study", "gapcheck"):
            seq = self.values[sec]["dt_sequence"]
            if not seq or any(not (0 < d <= p["T"]) for d in seq):
                raise ConfigError(f"{sec}.dt_sequence entries must lie in (0, T]")
        if not 0 < self.values["round"]["dt"] <= p["T"]:
            raise ConfigError("round.dt must lie in (0, T]")
        if self.values["gapcheck"]["beta"] not in GAP_BETA_CHOICES:
            raise ConfigError(f"gapcheck.beta must be one of {GAP_BETA_CHOICES}")
        r = self.values["run"]
        if r["seed"] < 0 or r["seed"] >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if r["selftest_directions"] < 1 or r["csv_every"] < 0:
            raise ConfigError("selftest_directions must be >= 1 and csv_every >= 0")

    # ---------------------------------------------------------------- builders
    def optimize_config(self) -> OptimizeConfig:
        o = self.values["optimizer"]
        return OptimizeConfig(
            max_iters=o["max_iters"],
            c1=o["c1"],
            backtrack=o["backtrack"],
            max_backtracks=o["max_backtracks"],
            stationarity_tol=o["stationarity_tol"],
            initial_beta=o["initial_beta"],
        )

    def problem(self) -> Problem:
        p = self.values["problem"]
        L = p["L"]
        eta0 = {
            "pulse": square_pulse(L),
            "zero": lambda x: np.zeros_like(x),
            "sine": lambda x: 1.0 + 0.5 * np.sin(2 * np.pi * x / L),
        }[p["eta0"]]
        target = {
            "one-minus-sin": lambda x: 1.0 - np.sin(x),
            "zero": lambda x: np.zeros_like(x),
        }[p["target"]]
        return burgers_switch(
            N_x=p["nx"],
            kappa=p["kappa"],
            a=p["a"],
            cfl=p["cfl"],
            T=p["T"],
            control_intervals=p["control_intervals"],
            L=L,
            eta0=eta0,
            target=target,
        )

    # ---------------------------------------------------------------- echo
    def to_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for section, keys in self.values.items():
            cp[section] = {k: _render(v) for k, v in keys.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def as_dict(self) -> dict:
        return {s: dict(k) for s, k in self.values.items()}

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def load(path: Optional[str]) -> RunConfig:
    return RunConfig.defaults() if path is None else RunConfig.from_file(path)
