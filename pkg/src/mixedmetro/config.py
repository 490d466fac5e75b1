"""Configuration files, dot-path overrides and conversion to run configs.

Config files are INI: section ``[gate]`` key ``linewidth_hz`` is addressed
as ``gate.linewidth_hz``. Overrides come from ``--set key=value`` and from
environment variables ``MIXEDMETRO__SECTION__KEY``. Frequencies are Hz
(``_hz``), times seconds (``_s``) unless the key says ``_us``, lengths um.
"""

import configparser
import json
import os
from dataclasses import replace

import numpy as np

from .analytic import NoiseParams
from .experiment import (
    CALIBRATED_AMPLITUDE_SCALE,
    GRAVITY_PRESETS,
    ExperimentConfig,
    GateConfig,
    InteractionConfig,
    LargeNConfig,
)
from .rydberg import InteractionParams
from .trap import LossModel, TrapGeometry
from .units import TWO_PI

ENV_PREFIX = "MIXEDMETRO__"
SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def _floats(x):
    return tuple(float(v) for v in x)


# key -> default. The default's type fixes how strings are parsed; tuples are
# comma-separated lists.
DEFAULTS = {
    "experiment.mode": "full_dynamics",
    "experiment.mean_n_r": 1.0,
    "experiment.omega0_hz": 5326.0,
    "experiment.gravity_preset": "",
    "experiment.t_s": 375e-6,
    "experiment.nu": 49,
    "experiment.seed": 0,
    "experiment.ninf": False,
    "experiment.scan_min": -0.25,
    "experiment.scan_max": 0.25,
    "experiment.scan_points": 21,
    "experiment.scan": (),
    "experiment.fit_model": "",
    "experiment.fit_column": "",
    "noise.p_c": 0.95,
    "noise.p_r": 0.95,
    "gate.delta_e_mhz": 1000.0,
    "gate.tau_us": 0.5,
    "gate.amplitude_scale": CALIBRATED_AMPLITUDE_SCALE,
    "gate.omega3_factor": 10.0,
    "gate.gamma_e_hz": 6.065e6,
    "gate.linewidth_hz": 10e3,
    "gate.gamma_ryd_hz": 0.0,
    "gate.n_steps": 0,
    "gate.blockade_limit": False,
    "interaction.cr_c_dd": 2.92e4,
    "interaction.cr_delta_def": -196.0,
    "interaction.rr_c_dd": 2.84e4,
    "interaction.rr_delta_def": -613.0,
    "interaction.register_interactions": True,
    "register_trap.widths_um": (1.73, 1.58, 0.19),
    "register_trap.center_um": (0.0, 0.0, 0.0),
    "control_trap.widths_um": (0.08, 0.08, 0.30),
    "control_trap.center_um": (0.0, 0.0, 2.0),
    "loss.beta_cm3_s": 0.25e-12,
    "loss.tau_sp_s": 3.3,
    "loss.vacuum_lifetime_s": 60.0,
    "large_n.gate_model": "curve",
    "large_n.curve_max_n": 9,
    "large_n.curve_nu": 49,
    "large_n.curve_linewidth_hz": 10e3,
    "large_n.losses": True,
    "analytic.n_r": 25,
    "analytic.p_c": 1.0,
    "analytic.p_r": (0.95,),
    "analytic.t_s": 375e-6,
    "analytic.omega_hz": 5330.0,
    "analytic.t_min_s": 0.0,
    "analytic.t_max_s": 750e-6,
    "analytic.t_points": 301,
    "analytic.poisson_mean": 0.0,
    "sweep.axes": (),
    "sweep.max_cells": 64,
}


def _parse(key, text):
    default = DEFAULTS[key]
    text = str(text).strip()
    try:
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(float(text)) if float(text) == int(float(text)) else _bad(key, text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            if key == "sweep.axes":
                return tuple(a.strip() for a in text.split(";") if a.strip())
            return tuple(float(v) for v in text.split(",") if v.strip())
        return text
    except ValueError:
        return _bad(key, text)


def _bad(key, text):
    raise ConfigError(f"cannot parse {key} = {text!r}")


def load(path=None, overrides=(), env=None):
    """Resolve a flat ``{dotted_key: value}`` mapping.

    Precedence: defaults < file < environment < ``overrides``.
    """
    flat = dict(DEFAULTS)
    if path:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        if not cp.read(path):
            raise ConfigError(f"cannot read config file {path}")
        for sec in cp.sections():
            for k, v in cp.items(sec):
                _set(flat, f"{sec}.{k}", v)
    env = os.environ if env is None else env
    for name, v in env.items():
        if name.startswith(ENV_PREFIX):
            parts = name[len(ENV_PREFIX):].lower().split("__")
            if len(parts) == 2:
                _set(flat, ".".join(parts), v)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        k, v = item.split("=", 1)
        _set(flat, k.strip(), v)
    return flat


def _set(flat, key, value):
    if key not in DEFAULTS:
        raise ConfigError(f"unknown config key {key!r}")
    flat[key] = _parse(key, value) if isinstance(value, str) else value


def snapshot(flat):
    """JSON-safe copy of a resolved config."""
    return {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(flat.items())}


def from_snapshot(snap):
    flat = dict(DEFAULTS)
    for k, v in snap.items():
        _set(flat, k, tuple(v) if isinstance(DEFAULTS.get(k), tuple) else v)
    return flat


def scan_grid(flat):
    if flat["experiment.scan"]:
        return tuple(flat["experiment.scan"])
    n = flat["experiment.scan_points"]
    if n < 1:
        raise ConfigError("scan grid is empty")
    return tuple(np.round(np.linspace(flat["experiment.scan_min"], flat["experiment.scan_max"], n), 12))


def omega0(flat):
    preset = flat["experiment.gravity_preset"]
    if preset:
        if preset not in GRAVITY_PRESETS:
            raise ConfigError(f"unknown gravity preset {preset!r}; choose from {sorted(GRAVITY_PRESETS)}")
        return GRAVITY_PRESETS[preset]
    return TWO_PI * flat["experiment.omega0_hz"]


def experiment_config(flat):
    """Build and validate an :class:`ExperimentConfig`."""
    g = flat
    try:
        gate = GateConfig(
            g["gate.delta_e_mhz"], g["gate.tau_us"], g["gate.amplitude_scale"], g["gate.omega3_factor"],
            g["gate.gamma_e_hz"], g["gate.linewidth_hz"], g["gate.gamma_ryd_hz"], g["gate.n_steps"],
            g["gate.blockade_limit"],
        )
        inter = InteractionConfig(
            InteractionParams(g["interaction.cr_c_dd"], g["interaction.cr_delta_def"], "control-register"),
            InteractionParams(g["interaction.rr_c_dd"], g["interaction.rr_delta_def"], "register-register"),
            g["interaction.register_interactions"],
        )
        reg = TrapGeometry(_floats(g["register_trap.widths_um"]), _floats(g["register_trap.center_um"]))
        ctl = TrapGeometry(_floats(g["control_trap.widths_um"]), _floats(g["control_trap.center_um"]))
        loss = LossModel(g["loss.beta_cm3_s"], g["loss.tau_sp_s"], g["loss.vacuum_lifetime_s"])
        large = LargeNConfig(g["large_n.gate_model"], g["large_n.curve_max_n"], g["large_n.curve_nu"],
                             g["large_n.losses"])
        if large.gate_model not in ("perfect", "curve", "records"):
            raise ConfigError(f"unknown large_n.gate_model {large.gate_model!r}")
        return ExperimentConfig(
            mode=g["experiment.mode"],
            mean_n_r=g["experiment.mean_n_r"],
            noise=NoiseParams(g["noise.p_c"], g["noise.p_r"]),
            scan=scan_grid(g),
            omega0=omega0(g),
            t=g["experiment.t_s"],
            nu=g["experiment.nu"],
            seed=g["experiment.seed"],
            ninf=g["experiment.ninf"],
            gate=gate,
            interaction=inter,
            register_trap=reg,
            control_trap=ctl,
            loss=loss,
            large_n=large,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def sweep_axes(flat):
    """Parse ``sweep.axes`` entries ``key=v1,v2,...`` into ``[(key, [values])]``."""
    axes = []
    for entry in flat["sweep.axes"]:
        if "=" not in entry:
            raise ConfigError(f"sweep axis must look like key=v1,v2: {entry!r}")
        k, vals = entry.split("=", 1)
        k = k.strip()
        if k not in DEFAULTS or k.startswith("sweep."):
            raise ConfigError(f"cannot sweep over {k!r}")
        values = [v.strip() for v in vals.split(",") if v.strip()]
        if not values:
            raise ConfigError(f"sweep axis {k!r} has no values")
        axes.append((k, values))
    if len(axes) > 3:
        raise ConfigError("at most three sweep axes are supported")
    return axes


def dumps(flat):
    return json.dumps(snapshot(flat), indent=2, sort_keys=True)


def with_overrides(flat, items):
    out = dict(flat)
    for k, v in items:
        _set(out, k, v)
    return out


__all__ = [
    "ConfigError", "DEFAULTS", "load", "snapshot", "from_snapshot", "experiment_config",
    "sweep_axes", "with_overrides", "dumps", "replace",
]
