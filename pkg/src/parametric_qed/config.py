"""JSON run configuration with exhaustive validation."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .model import KINDS, ConfigError, CouplingSpec, SystemParams
from .stochastic import NoiseConfig

TOP_KEYS = {"model", "params", "coupling", "noise", "basis", "grids", "frequency_unit",
            "output_dir", "options"}
BASIS_KEYS = {"n_phonon_max", "n_photon_max"}
GRID_DEFAULTS = {
    "t_max": None,            # default: 5 / gamma_mix, or 3 Rabi periods when lossless
    "n_t": 201,
    "detuning_half_span": 3.0,  # in effective Rabi frequencies
    "n_detuning": 4001,
    "anticrossing_half_span": 5.0,  # in |rabi3|
    "n_anticrossing": 401,
}
OPTION_DEFAULTS = {
    "field": "both",
    "include_s3": True,
    "spectrum_sources": ["analytic", "qrt"],
    "rwa_threshold": 0.1,
    "check_rwa": True,
    "photon_spectrum": None,
    "phonon_spectrum": None,
    "compare_kinds": ["molecular", "optomechanical"],
    "rabi_periods": 3.0,
}


@dataclass
class RunConfig:
    params: SystemParams
    model: str = "parametric"
    coupling: CouplingSpec | None = None
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    basis: dict = field(default_factory=lambda: {"n_phonon_max": 1, "n_photon_max": 1})
    grids: dict = field(default_factory=lambda: dict(GRID_DEFAULTS))
    frequency_unit: str = "arb. angular units"
    output_dir: str = "out"
    options: dict = field(default_factory=lambda: dict(OPTION_DEFAULTS))
    source: str | None = None

    def resolved(self) -> dict:
        """Plain-JSON view of the configuration as used (written into output headers)."""
        return {
            "model": self.model,
            "params": self.params.to_dict(),
            "coupling": self.coupling.to_dict() if self.coupling else None,
            "noise": {"seed": self.noise.seed, "dt": self.noise.dt,
                      "n_trajectories": self.noise.n_trajectories,
                      "batch_size": self.noise.batch_size},
            "basis": dict(self.basis),
            "grids": dict(self.grids),
            "frequency_unit": self.frequency_unit,
            "options": dict(self.options),
        }


def _collect(problems, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError as exc:
        problems.extend(exc.problems)
    except (TypeError, ValueError) as exc:
        problems.append(str(exc))
    return None


def _check_section(data, name, allowed, problems):
    sec = data.get(name, {})
    if sec is None:
        return {}
    if not isinstance(sec, dict):
        problems.append(f"{name}: must be a JSON object")
        return {}
    for key in sec:
        if key not in allowed:
            problems.append(f"{name}.{key}: unknown key")
    return sec


def config_from_dict(data: dict, source: str | None = None) -> RunConfig:
    """Validate a configuration object and report every problem at once."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    problems = []
    for key in data:
        if key in ("temperature", "T"):
            problems.append(f"{key}: finite reservoir temperature is not supported (T=0 only)")
        elif key not in TOP_KEYS:
            problems.append(f"{key}: unknown key")

    model = data.get("model", "parametric")
    if model not in KINDS:
        problems.append(f"model: must be one of {KINDS}, got {model!r}")

    params = None
    if "params" not in data:
        problems.append("params: required")
    elif not isinstance(data["params"], dict):
        problems.append("params: must be a JSON object")
    else:
        params = _collect(problems, SystemParams.from_dict, data["params"])

    coupling = None
    if data.get("coupling") is not None:
        if not isinstance(data["coupling"], dict):
            problems.append("coupling: must be a JSON object")
        else:
            coupling = _collect(problems, CouplingSpec.from_dict, data["coupling"])
    elif model in ("molecular", "optomechanical"):
        problems.append(f"coupling: required for model {model!r}")
    if coupling is not None and model in ("molecular", "optomechanical") and coupling.mechanism != model:
        problems.append(f"coupling.mechanism: {coupling.mechanism!r} does not match model {model!r}")
    if params is not None:
        if model == "parametric" and params.rabi3 is None:
            problems.append("params.rabi3: required for the parametric model")
        if model != "parametric" and params.rabi2 is None:
            problems.append(f"params.rabi2: required for the {model} model")

    noise_data = data.get("noise", {}) or {}
    noise = NoiseConfig()
    if not isinstance(noise_data, dict):
        problems.append("noise: must be a JSON object")
    else:
        noise = _collect(problems, NoiseConfig.from_dict, noise_data) or noise

    basis = _check_section(data, "basis", BASIS_KEYS, problems)
    basis = {"n_phonon_max": basis.get("n_phonon_max", 1 if model == "parametric" else 6),
             "n_photon_max": basis.get("n_photon_max", 1)}
    for key, value in basis.items():
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            problems.append(f"basis.{key}: must be an integer >= 1, got {value!r}")

    grids = dict(GRID_DEFAULTS)
    grids.update(_check_section(data, "grids", set(GRID_DEFAULTS), problems))
    for key, value in grids.items():
        if value is None:
            continue
        if not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0:
            problems.append(f"grids.{key}: must be a positive number, got {value!r}")
        elif key.startswith("n_") and (int(value) != value or value < 2):
            problems.append(f"grids.{key}: must be an integer >= 2")

    options = dict(OPTION_DEFAULTS)
    options.update(_check_section(data, "options", set(OPTION_DEFAULTS), problems))
    if options["field"] not in ("photon", "phonon", "both"):
        problems.append("options.field: must be photon, phonon or both")
    bad = [s for s in options["spectrum_sources"] if s not in ("analytic", "qrt", "mc")]
    if bad:
        problems.append(f"options.spectrum_sources: unknown sources {bad}")
    bad = [k for k in options["compare_kinds"] if k not in ("molecular", "optomechanical")]
    if bad:
        problems.append(f"options.compare_kinds: unknown kinds {bad}")

    unit = data.get("frequency_unit", "arb. angular units")
    if not isinstance(unit, str):
        problems.append("frequency_unit: must be a string")
    out = data.get("output_dir", "out")
    if not isinstance(out, str):
        problems.append("output_dir: must be a string")

    if problems:
        raise ConfigError(problems)
    return RunConfig(params, model, coupling, noise, basis, grids, unit, out, options, source)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    cfg = config_from_dict(data, str(path))
    base = path.parent
    if not os.path.isabs(cfg.output_dir):
        cfg.output_dir = str(base / cfg.output_dir)
    for key in ("photon_spectrum", "phonon_spectrum"):
        p = cfg.options.get(key)
        if p and not os.path.isabs(p):
            cfg.options[key] = str(base / p)
    return cfg
