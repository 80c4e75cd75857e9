"""Run configuration: documented key-value schema plus flag overrides.

The configuration is a single INI-style text file. Every key has a
default, so an empty or missing file is a valid run; unknown sections or
keys are rejected. Command-line flags win over file values.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .params import (
    IntegratorOptions,
    NewtonOptions,
    SystemParams,
    WavePacketParams,
    central_period,
)

__all__ = ["ConfigError", "RunConfig", "load_config", "DEFAULT_SCHEMA"]


class ConfigError(ValueError):
    """Invalid run configuration (unknown key, bad value)."""


# section -> key -> (type, default)
DEFAULT_SCHEMA = {
    "packet": {
        "q_center": (float, 0.0),
        "p_center": (float, 20.0),
        "width_re": (float, 32.0),
        "width_im": (float, 0.0),
    },
    "system": {
        "lam": (float, 0.05),
        "mass": (float, 1.0),
        "hbar": (float, 1.0),
    },
    "time": {
        "t_over_tau": (float, 3.0),
    },
    "contour": {
        "n_sigma": (float, 5.0),
        "n_points": (int, 2048),
    },
    "grid": {
        "x_min": (float, -16.0),
        "x_max": (float, 16.0),
        "dx": (float, 0.05),
    },
    "quantum": {
        "x_min": (float, -30.0),
        "x_max": (float, 30.0),
        "n_points": (int, 16384),
        "dt": (float, 5e-4),
        "order": (int, 4),
    },
    "integrator": {
        "rel_tol": (float, 1e-11),
        "abs_tol": (float, 1e-12),
        "max_step": (float, 0.02),
        "blowup_threshold": (float, 1e8),
    },
    "newton": {
        "tol": (float, 1e-10),
        "max_iter": (int, 40),
        "step_clip": (float, 0.0),  # 0 means automatic (half a position width)
        "dedup_radius": (float, 1e-6),
    },
    "sweep": {
        "exposure_seeds": (int, 5),
        "gap_max": (float, 0.1),
        "flip_window": (float, 1.0),
    },
    "map": {
        "re_min": (float, -8.0),
        "re_max": (float, 8.0),
        "im_min": (float, -1.0),
        "im_max": (float, 1.0),
        "n_re": (int, 1000),
        "n_im": (int, 1000),
    },
    "sampling": {
        "seed": (int, 0),
        "n_samples": (int, 200000),
    },
    "output": {
        "directory": (str, "out"),
        "json_mirror": (bool, False),
        "figures": (bool, True),
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Validated knob set for one pipeline run."""

    values: dict

    def __getitem__(self, pair):
        section, key = pair
        return self.values[section][key]

    def packet(self) -> WavePacketParams:
        v = self.values["packet"]
        return WavePacketParams(
            q_center=v["q_center"],
            p_center=v["p_center"],
            width=complex(v["width_re"], v["width_im"]),
            hbar=self.values["system"]["hbar"],
        )

    def system(self) -> SystemParams:
        v = self.values["system"]
        return SystemParams(lam=v["lam"], mass=v["mass"], hbar=v["hbar"])

    def tau(self) -> float:
        return central_period(self.packet(), self.system())

    def t(self) -> float:
        return self.values["time"]["t_over_tau"] * self.tau()

    def integrator(self) -> IntegratorOptions:
        v = self.values["integrator"]
        return IntegratorOptions(
            rel_tol=v["rel_tol"],
            abs_tol=v["abs_tol"],
            max_step=v["max_step"],
            blowup_threshold=v["blowup_threshold"],
        )

    def newton(self) -> NewtonOptions:
        v = self.values["newton"]
        clip = v["step_clip"] if v["step_clip"] > 0 else None
        return NewtonOptions(
            tol=v["tol"], max_iter=v["max_iter"], step_clip=clip, dedup_radius=v["dedup_radius"]
        )

    def x_grid(self):
        import numpy as np

        v = self.values["grid"]
        n = int(round((v["x_max"] - v["x_min"]) / v["dx"]))
        return np.round(v["x_min"] + v["dx"] * np.arange(n + 1), 9)

    def out_dir(self) -> Path:
        return Path(self.values["output"]["directory"])

    def with_overrides(self, overrides: dict) -> "RunConfig":
        """overrides: {(section, key): value}; values are coerced and validated."""
        vals = {s: dict(kv) for s, kv in self.values.items()}
        for (section, key), value in overrides.items():
            if value is None:
                continue
            if section not in DEFAULT_SCHEMA or key not in DEFAULT_SCHEMA[section]:
                raise ConfigError(f"unknown option [{section}] {key}")
            typ = DEFAULT_SCHEMA[section][key][0]
            vals[section][key] = _coerce(typ, str(value), section, key)
        return RunConfig(values=vals)


def _coerce(typ, raw: str, section: str, key: str):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from exc


def load_config(path: str | Path | None = None) -> RunConfig:
    """Defaults, overlaid with the INI file at path when given."""
    values = {s: {k: d for k, (_t, d) in kv.items()} for s, kv in DEFAULT_SCHEMA.items()}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        parser = configparser.ConfigParser()
        try:
            parser.read(p)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {p}: {exc}") from exc
        for section in parser.sections():
            if section not in DEFAULT_SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
            for key, raw in parser.items(section):
                if key not in DEFAULT_SCHEMA[section]:
                    raise ConfigError(f"unknown key [{section}] {key}")
                typ = DEFAULT_SCHEMA[section][key][0]
                values[section][key] = _coerce(typ, raw, section, key)
    cfg = RunConfig(values=values)
    # eager validation of the physics parameters
    cfg.packet()
    cfg.system()
    cfg.integrator()
    cfg.newton()
    if cfg.values["time"]["t_over_tau"] < 0:
        raise ConfigError("t_over_tau must be non-negative")
    if cfg.values["contour"]["n_points"] < 16:
        raise ConfigError("contour n_points must be at least 16")
    if cfg.values["grid"]["dx"] <= 0:
        raise ConfigError("grid dx must be positive")
    if cfg.values["quantum"]["order"] not in (2, 4):
        raise ConfigError("quantum order must be 2 or 4")
    return cfg
