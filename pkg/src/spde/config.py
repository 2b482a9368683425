"""Strict JSON experiment configuration.

A config document has five sections (model, basis, run, experiment,
out_dir) plus the command.  Unknown keys anywhere are errors, flags
override file fields, and the dt | save_dt | t_end divisibility contract
is enforced up front so every downstream ratio is an exact integer.
"""

import json
from dataclasses import dataclass

import numpy as np

from .basis import build_basis
from .errors import ConfigError
from .models import MODELS, build_model

COMMANDS = ("check", "simulate", "converge", "moments", "equicontinuity",
            "continuity", "uniqueness")

_MODEL_PARAMS = {
    "heat-ou": {"sigma"},
    "p-laplacian": {"p", "c", "sigma"},
    "convection-diffusion": {"sigma", "mono_scale"},
    "cahn-hilliard": {"sigma", "phi_cubic", "phi_linear", "mono_scale"},
    "gradient-noise-heat": {"nu"},
    "fixture-bad-h1": {"sigma"},
    "fixture-bad-h5": {"sigma"},
    "fixture-bad-h3": set(),
}

_BASIS_KEYS = {"kind", "n_modes", "grid_size", "v_weight_exponent"}
_RUN_KEYS = {"t_end", "dt", "save_dt", "paths", "seed", "stepper", "threads"}
_EXPERIMENT_KEYS = {"p", "alpha", "deltas", "levels", "perturbations",
                    "x0", "direction", "dt_levels", "mode", "n_samples"}
_TOP_KEYS = {"command", "model", "basis", "run", "experiment", "out_dir"}

_X0_PRESETS = ("zero", "e1", "decay2")


@dataclass
class ExperimentConfig:
    command: str
    model_name: str
    model_params: dict
    basis: dict
    run: dict
    experiment: dict
    out_dir: str

    def build_model(self):
        return build_model(self.model_name, **self.model_params)

    def build_basis(self, model):
        n = self.basis["n_modes"]
        g = self.basis.get("grid_size") or 4 * n
        kind = self.basis.get("kind") or model.basis_kind
        if kind != model.basis_kind:
            raise ConfigError(
                f"basis.kind {kind!r} does not match model basis {model.basis_kind!r}")
        s = self.basis.get("v_weight_exponent")
        if s is None:
            s = model.v_weight_exponent
        return build_basis(kind, n, g, s)


def _reject_unknown(section, mapping, allowed):
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"unknown key {section}.{key}" if section else
                              f"unknown key {key}")


def _require_ratio(num, den, what):
    if den <= 0 or num <= 0:
        raise ConfigError(f"{what}: values must be positive")
    r = num / den
    if abs(r - round(r)) > 1e-9 * max(1.0, abs(r)) or round(r) < 1:
        raise ConfigError(f"{what}: {num}/{den} is not an integer ratio")


_DEFAULTS = {
    "basis": {"n_modes": 16},
    "run": {"t_end": 1.0, "dt": 1e-3, "paths": 100, "seed": 0},
    "experiment": {},
    "out_dir": "out",
}


def load_config(path=None, flags=None):
    """Parse and validate: file first, then flag overrides, then defaults."""
    doc = {}
    if path is not None:
        try:
            with open(path) as f:
                doc = json.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config parse error: {e}") from e
        if not isinstance(doc, dict):
            raise ConfigError("config root must be a JSON object")
    _reject_unknown("", doc, _TOP_KEYS)

    model_sec = dict(doc.get("model", {}))
    basis_sec = dict(doc.get("basis", {}))
    run_sec = dict(doc.get("run", {}))
    exp_sec = dict(doc.get("experiment", {}))
    command = doc.get("command")
    out_dir = doc.get("out_dir", _DEFAULTS["out_dir"])

    flags = flags or {}
    if flags.get("command") is not None:
        command = flags["command"]
    if flags.get("model") is not None:
        model_sec["name"] = flags["model"]
    for k in ("sigma", "nu", "p_exponent"):
        if flags.get(k) is not None:
            model_sec["p" if k == "p_exponent" else k] = flags[k]
    if flags.get("n_modes") is not None:
        basis_sec["n_modes"] = flags["n_modes"]
    if flags.get("grid_size") is not None:
        basis_sec["grid_size"] = flags["grid_size"]
    for k in ("t_end", "dt", "save_dt", "seed", "stepper", "threads"):
        if flags.get(k) is not None:
            run_sec[k] = flags[k]
    if flags.get("paths") is not None:
        run_sec["paths"] = flags["paths"]
    for k in ("p", "alpha", "x0", "n_samples"):
        if flags.get(k) is not None:
            exp_sec[k] = flags[k]
    if flags.get("out") is not None:
        out_dir = flags["out"]

    if command not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}, got {command!r}")

    name = model_sec.pop("name", None)
    if name is None:
        raise ConfigError("model.name is required")
    if name not in MODELS:
        raise ConfigError(f"unknown model {name!r}")
    _reject_unknown("model", model_sec, _MODEL_PARAMS[name])
    _reject_unknown("basis", basis_sec, _BASIS_KEYS)
    _reject_unknown("run", run_sec, _RUN_KEYS)
    _reject_unknown("experiment", exp_sec, _EXPERIMENT_KEYS)

    basis = {**_DEFAULTS["basis"], **basis_sec}
    run = {**_DEFAULTS["run"], **run_sec}
    run.setdefault("save_dt", run["dt"])

    if int(basis["n_modes"]) < 1:
        raise ConfigError("basis.n_modes must be >= 1")
    basis["n_modes"] = int(basis["n_modes"])
    if basis.get("grid_size") is not None:
        basis["grid_size"] = int(basis["grid_size"])
        if basis["grid_size"] < 4 * basis["n_modes"]:
            raise ConfigError("basis.grid_size must be >= 4*n_modes")
    if int(run["paths"]) < 1:
        raise ConfigError("run.paths must be >= 1")
    run["paths"] = int(run["paths"])
    run["seed"] = int(run["seed"])
    if run["seed"] < 0:
        raise ConfigError("run.seed must be >= 0")
    if run.get("stepper") is not None and run["stepper"] not in (
            "explicit-tamed", "semi-implicit"):
        raise ConfigError(f"unknown stepper {run['stepper']!r}")

    _require_ratio(run["save_dt"], run["dt"], "save_dt/dt")
    _require_ratio(run["t_end"], run["save_dt"], "t_end/save_dt")

    x0 = exp_sec.get("x0", "e1")
    if isinstance(x0, str) and x0 not in _X0_PRESETS:
        raise ConfigError(f"experiment.x0 preset must be one of {_X0_PRESETS}")

    return ExperimentConfig(command=command, model_name=name,
                            model_params=model_sec, basis=basis, run=run,
                            experiment=exp_sec, out_dir=str(out_dir))


def initial_coefficients(x0, n_modes):
    """Resolve an x0 selector (preset name or coefficient list)."""
    if isinstance(x0, str):
        c = np.zeros(n_modes)
        if x0 == "e1":
            c[0] = 1.0
        elif x0 == "decay2":
            c[:] = 1.0 / (1.0 + np.arange(n_modes)) ** 2
        elif x0 != "zero":
            raise ConfigError(f"unknown x0 preset {x0!r}")
        return c
    return np.asarray(x0, float).ravel()
