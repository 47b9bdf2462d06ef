"""Flat ``key = value`` configuration files.

Keys (defaults in parentheses)::

    model          quantum | lhv_sharp | lhv_malus         (quantum)
    trials         Monte Carlo trials per setting pair      (unset)
    seed           64-bit unsigned; falls back to $BELLSIM_SEED, then 0
    workers        generation threads                      (1)
    setting_policy block | random                          (block)
    window_s       coincidence window, seconds             (1e-9)
    jitter_s       Gaussian timing jitter sigma, seconds   (0)
    delay_s        channel-2 time delay, seconds           (0)
    efficiency     detector efficiency per channel         (1)
    theta_min      sweep start angle                       (0)
    theta_max      sweep end angle                         (45 deg)
    theta_steps    sweep grid points                       (41)
    theta          angle for the ``run`` subcommand        (22.5 deg)
    arrangement    standard                                (standard)
    output         output path                             (stdout)
    format         csv | json | both                       (csv for sweep, else json)

Angles take an optional ``rad`` (default) or ``deg`` suffix.  ``#`` starts
a comment.
"""
from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, fields
from typing import Mapping, Optional

import numpy as np

from .analysis import ARRANGEMENTS, Arrangement
from .models import ModelKind, ModelSpec
from .simulator import ConfigError, ExperimentConfig

SEED_ENV = "BELLSIM_SEED"

POLICIES = {"block": "fixedPerBlock", "random": "randomPerTrial"}
FORMATS = ("csv", "json", "both")
ANGLE_KEYS = ("theta_min", "theta_max", "theta")

_ANGLE_RE = re.compile(r"^([-+]?[0-9.]+(?:[eE][-+]?[0-9]+)?)\s*(rad|deg)?$")


class ConfigParseError(ConfigError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class ConfigValidationError(ConfigError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class Config:
    """Effective settings of one invocation; field order is the key order."""

    model: str = "quantum"
    trials: Optional[int] = None
    seed: int = 0
    workers: int = 1
    setting_policy: str = "block"
    window_s: float = 1e-9
    jitter_s: float = 0.0
    delay_s: float = 0.0
    efficiency: float = 1.0
    theta_min: float = 0.0
    theta_max: float = 0.25 * math.pi
    theta_steps: int = 41
    theta: float = 0.125 * math.pi
    arrangement: str = "standard"
    output: Optional[str] = None
    format: Optional[str] = None

    def model_spec(self) -> ModelSpec:
        return ModelSpec(ModelKind(self.model), self.efficiency, self.jitter_s, self.delay_s)

    def arrangement_obj(self) -> Arrangement:
        return ARRANGEMENTS[self.arrangement]

    def grid(self) -> np.ndarray:
        return np.linspace(self.theta_min, self.theta_max, self.theta_steps)

    def experiment(self, theta: Optional[float] = None, trials: Optional[int] = None) -> ExperimentConfig:
        theta = self.theta if theta is None else theta
        return ExperimentConfig(
            model=self.model_spec(),
            quad=self.arrangement_obj().quad(theta),
            trials_per_pair=trials or self.trials or 10_000,
            setting_policy=POLICIES[self.setting_policy],
            coincidence_window=self.window_s,
            seed=self.seed,
            workers=self.workers,
        )

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


KEYS = tuple(f.name for f in fields(Config))


def _int(key, raw):
    try:
        return int(raw, 0)
    except ValueError:
        raise ConfigValidationError(key, f"expected an integer, got {raw!r}") from None


def _float(key, raw):
    try:
        v = float(raw)
    except ValueError:
        raise ConfigValidationError(key, f"expected a number, got {raw!r}") from None
    if not math.isfinite(v):
        raise ConfigValidationError(key, "must be finite")
    return v


def parse_angle(key: str, raw: str) -> float:
    m = _ANGLE_RE.match(raw.strip())
    if not m:
        raise ConfigValidationError(key, f"expected an angle like '0.3 rad' or '45 deg', got {raw!r}")
    value = _float(key, m.group(1))
    return math.radians(value) if m.group(2) == "deg" else value


def _choice(key, raw, options):
    if raw not in options:
        raise ConfigValidationError(key, f"must be one of {', '.join(options)}; got {raw!r}")
    return raw


def _convert(key: str, raw: str):
    if key == "model":
        return _choice(key, raw, [k.value for k in ModelKind])
    if key in ("trials", "seed", "workers", "theta_steps"):
        return _int(key, raw)
    if key == "setting_policy":
        return _choice(key, raw, list(POLICIES))
    if key == "arrangement":
        return _choice(key, raw, list(ARRANGEMENTS))
    if key == "format":
        return _choice(key, raw, FORMATS)
    if key == "output":
        return raw
    if key in ANGLE_KEYS:
        return parse_angle(key, raw)
    return _float(key, raw)


def _validate(cfg: Config) -> None:
    checks = [
        ("trials", cfg.trials is None or cfg.trials >= 1, "must be >= 1"),
        ("seed", 0 <= cfg.seed < 2 ** 64, "must be a 64-bit unsigned integer"),
        ("workers", cfg.workers >= 1, "must be >= 1"),
        ("window_s", cfg.window_s > 0.0, "must be > 0"),
        ("jitter_s", cfg.jitter_s >= 0.0, "must be >= 0"),
        ("efficiency", 0.0 <= cfg.efficiency <= 1.0, "must lie in [0, 1]"),
        ("theta_min", cfg.theta_min >= 0.0, "must be >= 0"),
        ("theta_max", cfg.theta_max >= cfg.theta_min, "must be >= theta_min"),
        ("theta_steps", cfg.theta_steps >= 1, "must be >= 1"),
        ("theta", cfg.theta >= 0.0, "must be >= 0"),
    ]
    for key, ok, message in checks:
        if not ok:
            raise ConfigValidationError(key, message)


def read_pairs(text: str) -> dict[str, str]:
    """Raw ``key -> value`` strings of a config text, checked for syntax only."""
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(lineno, f"expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigParseError(lineno, f"unknown key {key!r}")
        if key in pairs:
            raise ConfigParseError(lineno, f"duplicate key {key!r}")
        if not value:
            raise ConfigParseError(lineno, f"empty value for {key!r}")
        pairs[key] = value
    return pairs


def parse_config(text: str = "", overrides: Optional[Mapping[str, str]] = None,
                 env: Optional[Mapping[str, str]] = None) -> Config:
    """Parse config text, apply raw-string ``overrides``, validate.

    The seed comes from the text or overrides, else ``$BELLSIM_SEED``,
    else 0.
    """
    pairs = read_pairs(text)
    for key, raw in (overrides or {}).items():
        if key not in KEYS:
            raise ConfigValidationError(key, "unknown key")
        pairs[key] = raw
    env = os.environ if env is None else env
    if "seed" not in pairs and env.get(SEED_ENV):
        pairs["seed"] = env[SEED_ENV]
    cfg = Config(**{k: _convert(k, v) for k, v in pairs.items()})
    _validate(cfg)
    return cfg


def emit_config(cfg: Config) -> str:
    """Config text that :func:`parse_config` reads back to ``cfg``."""
    lines = []
    for key, value in cfg.as_dict().items():
        if value is None:
            continue
        lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
    return "\n".join(lines) + "\n"
