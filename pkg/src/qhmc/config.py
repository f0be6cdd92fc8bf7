"""Experiment configuration files.

Grammar: an INI file read with :mod:`configparser` (``key = value`` lines
under ``[section]`` headers, ``#`` or ``;`` comments). Lists are
comma-separated. Sections:

``[experiment]`` (required)
    target          potential name, or ``gravity`` / ``diffusion``
    q_values        comma list; ``default`` picks the 21-point grid for the
                    target (0.9999 and 1 for gravity, 0.9999 for diffusion)
    dt, steps       leapfrog step size and count L
    n_samples       iterations, burn-in included
    burn_in         rows dropped by the diagnostics (default 0)
    seed            PCG64 seed (default 0)
    x0              initial position, comma list
    output_dir      where results go (default ``out``)
    analyzed_coordinate   coordinate used for ACF/ESS (default 0)
    k_max           ACF truncation lag (default 500)
    workers         processes for sweeps (default 1)

``[adapt]`` (optional)
    target_accept, adapt_steps, learning_rate

``[force_table]`` (optional)
    x, q_values

``[gravity]`` / ``[diffusion]`` (optional)
    problem settings, passed to the inverse-problem builders. Gravity runs at
    q == 1 use a forward difference with ``forward_difference_step``.

A run's metadata JSON stores the parsed config under ``"config"``;
:func:`load_config` accepts that file too, so any run can be replayed.
"""
from __future__ import annotations

import configparser
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError
from .sampler import AdaptConfig

__all__ = [
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "default_q_grid",
    "INVERSE_TARGETS",
    "GRAVITY_DEFAULTS",
    "DIFFUSION_DEFAULTS",
]

INVERSE_TARGETS = ("gravity", "diffusion")

GRAVITY_DEFAULTS = {
    "true_h": 0.2,
    "x_f": 0.3,
    "sensors": [0.0, 0.25, 0.5, 0.75, 1.0],
    "sigma": 0.1,
    "prior_mean": 0.3,
    "prior_std": 0.05,
    "forward_difference_step": 1e-8,
    "data_seed": 0,
    "noise": True,
    "hist_bins": 40,
}

DIFFUSION_DEFAULTS = {
    "grid_n": 80,
    "n_modes": 9,
    "n_obs": 70,
    "sigma": 0.02,
    "smoothness": 1.0,
    "source": 1.0,
    "data_seed": 0,
    "noise": True,
}


def default_q_grid(dimension: int = 1) -> list[float]:
    """Uniform grid from 0 to 1.2 (1-D) or 1.1 (2-D) in 20 points, plus q = 1."""
    top = 1.2 if dimension == 1 else 1.1
    grid = np.linspace(0.0, top, 20).tolist()
    return sorted(set(grid) | {1.0})


@dataclass(frozen=True)
class ExperimentConfig:
    target: str
    q_values: tuple
    dt: float
    steps: int
    n_samples: int
    x0: tuple
    burn_in: int = 0
    seed: int = 0
    output_dir: str = "out"
    adapt: Optional[AdaptConfig] = None
    analyzed_coordinate: int = 0
    k_max: int = 500
    workers: int = 1
    force_x: float = 1.7
    force_q_values: tuple = (0.9, 1.0, 1.1)
    problem: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "q_values", tuple(float(q) for q in self.q_values))
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        object.__setattr__(self, "force_q_values", tuple(float(q) for q in self.force_q_values))
        if not self.q_values:
            raise ConfigError("q_values must not be empty")
        if any(not (math.isfinite(q) and q >= 0) for q in self.q_values):
            raise ConfigError("q_values must be finite and >= 0")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError("dt must be positive")
        if self.steps < 1:
            raise ConfigError("steps must be positive")
        if self.n_samples < 1 or not 0 <= self.burn_in < self.n_samples:
            raise ConfigError("need n_samples >= 1 and 0 <= burn_in < n_samples")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        if self.analyzed_coordinate < 0:
            raise ConfigError("analyzed_coordinate must be >= 0")

    @property
    def is_inverse(self) -> bool:
        return self.target in INVERSE_TARGETS

    def with_overrides(self, seed=None, output_dir=None) -> "ExperimentConfig":
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if output_dir is not None:
            changes["output_dir"] = str(output_dir)
        return replace(self, **changes) if changes else self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["q_values"] = list(self.q_values)
        d["x0"] = list(self.x0)
        d["force_q_values"] = list(self.force_q_values)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        try:
            if d.get("adapt") is not None:
                d["adapt"] = AdaptConfig(**d["adapt"])
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"malformed config record: {exc}") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _convert(raw: str, like):
    if isinstance(like, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if isinstance(like, list):
        return _floats(raw)
    try:
        return type(like)(raw) if not isinstance(like, int) else int(raw)
    except ValueError:
        raise ConfigError(f"expected {type(like).__name__}, got {raw!r}") from None


def _problem_settings(parser, target: str) -> dict:
    defaults = GRAVITY_DEFAULTS if target == "gravity" else DIFFUSION_DEFAULTS
    out = dict(defaults)
    if parser.has_section(target):
        for key, raw in parser.items(target):
            if key not in defaults:
                raise ConfigError(f"unknown key {key!r} in [{target}]; known keys: {', '.join(defaults)}")
            out[key] = _convert(raw, defaults[key])
    return out


_REQUIRED = ("target", "dt", "steps", "n_samples")


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    if not parser.has_section("experiment"):
        raise ConfigError("missing [experiment] section")
    sec = parser["experiment"]
    missing = [k for k in _REQUIRED if k not in sec]
    if missing:
        raise ConfigError(f"missing required keys in [experiment]: {', '.join(missing)}")
    target = sec["target"].strip()

    try:
        kw = dict(
            target=target,
            dt=float(sec["dt"]),
            steps=int(sec["steps"]),
            n_samples=int(sec["n_samples"]),
            burn_in=int(sec.get("burn_in", "0")),
            seed=int(sec.get("seed", "0")),
            output_dir=sec.get("output_dir", "out"),
            analyzed_coordinate=int(sec.get("analyzed_coordinate", "0")),
            k_max=int(sec.get("k_max", "500")),
            workers=int(sec.get("workers", "1")),
        )
    except ValueError as exc:
        raise ConfigError(f"bad value in [experiment]: {exc}") from None

    q_raw = sec.get("q_values", sec.get("q", "default")).strip()
    if q_raw == "default" and target in INVERSE_TARGETS:
        kw["q_values"] = [0.9999, 1.0] if target == "gravity" else [0.9999]
    elif q_raw == "default":
        dim = len(_floats(sec["x0"])) if "x0" in sec else 1
        kw["q_values"] = default_q_grid(dim)
    else:
        kw["q_values"] = _floats(q_raw)
    if "x0" in sec:
        kw["x0"] = _floats(sec["x0"])
    elif target in INVERSE_TARGETS:
        kw["x0"] = ()
    else:
        raise ConfigError("missing required key x0 in [experiment]")

    if parser.has_section("adapt"):
        a = parser["adapt"]
        try:
            kw["adapt"] = AdaptConfig(float(a.get("target_accept", "0.65")), int(a.get("adapt_steps", "1000")),
                                      float(a.get("learning_rate", "0.05")))
        except ValueError as exc:
            raise ConfigError(f"bad value in [adapt]: {exc}") from None

    if parser.has_section("force_table"):
        f = parser["force_table"]
        kw["force_x"] = float(f.get("x", "1.7"))
        if "q_values" in f:
            kw["force_q_values"] = _floats(f["q_values"])

    if target in INVERSE_TARGETS:
        kw["problem"] = _problem_settings(parser, target)
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    """Read an INI config, or the metadata JSON of an earlier run."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if path.suffix.lower() == ".json":
        try:
            record = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        return ExperimentConfig.from_dict(record.get("config", record))
    return parse_config(text)
