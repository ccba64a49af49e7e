"""JSON experiment configuration with built-in presets.

A config file holds one object.  Any field of
:class:`vouest.experiments.ExperimentConfig` may be given; a ``preset`` field
fills the remaining ones from a named scenario::

    {"preset": "dt-sweep", "n_paths": 50, "seed": 7}

Presets: ``default`` (fractional alpha=0.75, x0=1, b=1.2, beta=-1,
sigma=0.3, T=200, dt=0.2, N=200), ``dt-sweep`` (MLE across dt in
{0.2, 0.5, 1}), ``lln`` and ``mom`` (T=500, dt=0.5),
``normality`` (N=2000), ``mixing`` and ``strong``.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import ConfigError
from .experiments import ExperimentConfig

PRESETS = {
    "default": {},
    "dt-sweep": {"experiment": "convergence", "horizons": [25.0, 50.0, 100.0, 200.0],
                 "dts": [0.2, 0.5, 1.0], "n_paths": 200, "estimators": ["MLE"]},
    "lln": {"experiment": "lln", "horizons": [100.0, 250.0, 500.0], "dts": [0.5], "n_paths": 200},
    "mom": {"experiment": "convergence", "horizons": [100.0, 250.0, 500.0], "dts": [0.5],
            "n_paths": 200, "estimators": ["MoM", "MLE"]},
    "normality": {"experiment": "normality", "horizons": [200.0], "dts": [0.2], "n_paths": 2000},
    "mixing": {"experiment": "mixing", "scheme": "stationary",
               "kernel": {"kind": "expsum", "params": {"coefficients": [1.0], "rates": [1.0]}},
               "horizons": [20.0], "dts": [0.1], "n_paths": 4000},
    "strong": {"experiment": "strong", "horizons": [400.0], "dts": [0.2], "kappa": 0.5, "n_seeds": 10},
}


def preset(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"preset: unknown {name!r}; expected one of {sorted(PRESETS)}")
    d = dict(PRESETS[name])
    d.update(overrides)
    d["preset"] = name
    return ExperimentConfig.from_dict(d)


def config_from_dict(obj: dict) -> ExperimentConfig:
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    obj = dict(obj)
    name = obj.pop("preset", None)
    if name is not None:
        return preset(name, **obj)
    return ExperimentConfig.from_dict(obj)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return config_from_dict(obj)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def save_config(cfg: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return path
