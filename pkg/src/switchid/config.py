"""Run configuration: nested YAML sections mapped onto frozen dataclasses."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .errors import ConfigError
from .pendulum import PendulumParams
from .sysid import ALPHA_RULES, DEFAULT_ALPHA_GRID, PENALTY_CENTERS
from .mhe import ARRIVAL_MODES

_LIBRARY_BLOCKS = ("x", "x2", "sin", "cos", "sign", "u")
OBSERVER_SOURCES = ("plant", "model")


@dataclass(frozen=True)
class DataConfig:
    """Training data: drop-down releases and torque-step runs.

    Initial deflections ``|phi1 - pi|`` are uniform in ``deflection`` with a
    random side; the wheel starts at a speed uniform in ``omega2_range``.
    ``torque_amplitude = None`` places the step levels just above the
    breakaway torque of the configured plant (see :func:`breakaway_torque`).
    """

    n_dropdown: int = 42
    n_torque: int = 42
    n_steps: int = 1500
    dt: float = 0.005
    seed: int = 0
    noise_std: tuple = (1e-4, 1e-3, 1e-2)
    deflection: tuple = (0.2, 0.6)
    omega2_range: tuple = (-30.0, 30.0)
    torque_amplitude: tuple | None = None
    dwell: tuple = (0.05, 0.3)
    holdout_samples: int = 20000

    def __post_init__(self):
        if self.n_dropdown < 0 or self.n_torque < 0 or self.n_dropdown + self.n_torque == 0:
            raise ConfigError("data: need at least one experiment")
        if self.n_steps < 2:
            raise ConfigError("data.n_steps must be at least 2")
        if not self.dt > 0:
            raise ConfigError("data.dt must be positive")
        _pair(self.deflection, "data.deflection", lo=0.0)
        _pair(self.omega2_range, "data.omega2_range")
        _pair(self.dwell, "data.dwell", lo=0.0)
        if self.torque_amplitude is not None:
            _pair(self.torque_amplitude, "data.torque_amplitude", lo=0.0)
        if len(self.noise_std) != 3 or any(s < 0 for s in self.noise_std):
            raise ConfigError("data.noise_std needs three non-negative values")
        if self.holdout_samples < 1:
            raise ConfigError("data.holdout_samples must be positive")


@dataclass(frozen=True)
class ClusterConfig:
    tol: float = 1e-7
    max_iters: int = 500
    seed: int = 0

    def __post_init__(self):
        if not self.tol > 0 or self.max_iters < 1:
            raise ConfigError("clustering: tol must be positive and max_iters at least 1")


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int = 8
    min_samples_leaf: int = 20

    def __post_init__(self):
        if self.max_depth < 0 or self.min_samples_leaf < 1:
            raise ConfigError("tree: max_depth >= 0 and min_samples_leaf >= 1 required")


@dataclass(frozen=True)
class SysidConfig:
    blocks: tuple = _LIBRARY_BLOCKS
    include_constant: bool = False
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    alpha_c1: float | None = None
    alpha_c2: float | None = None
    refit: bool = False
    folds: int = 5
    rule: str = "one-se"
    penalty_center: str = "identity"

    def __post_init__(self):
        bad = set(self.blocks) - set(_LIBRARY_BLOCKS)
        if bad or not self.blocks:
            raise ConfigError(f"sysid.blocks must be a non-empty subset of {_LIBRARY_BLOCKS}")
        if not self.alpha_grid or any(g < 0 for g in self.alpha_grid):
            raise ConfigError("sysid.alpha_grid must be non-empty and non-negative")
        if self.folds < 2:
            raise ConfigError("sysid.folds must be at least 2")
        if self.rule not in ALPHA_RULES:
            raise ConfigError(f"sysid.rule must be one of {ALPHA_RULES}")
        if self.penalty_center not in PENALTY_CENTERS:
            raise ConfigError(f"sysid.penalty_center must be one of {PENALTY_CENTERS}")


@dataclass(frozen=True)
class ValidationConfig:
    """Free-running comparison from a fresh release ``(pi - deflection, 0, omega2)``."""

    deflection: float = 0.45
    omega2: float = 0.0
    duration: float = 5.0


@dataclass(frozen=True)
class ObserverConfig:
    """Observer run on a fresh noisy release.

    The filter starts from the true initial state plus ``x0_offset``.
    ``R = None`` uses the variance of the angle noise of the data section.
    ``source = "model"`` generates the release with the identified model
    instead of the plant, which isolates the estimator from model error.
    """

    horizon: int = 10
    Q: tuple = (1e-8, 1e-5, 1e-3)
    R: float | None = None
    P0: tuple = (1e-2, 1e-1, 1.0)
    x0_offset: tuple = (0.3, 0.0, 2.0)
    deflection: float = 0.45
    omega2: float = 0.0
    duration: float = 6.0
    noise_seed: int = 99
    arrival: str = "filtered"
    max_refreezes: int = 5
    max_inner: int = 50
    step_tol: float = 1e-9
    source: str = "plant"

    def __post_init__(self):
        if self.source not in OBSERVER_SOURCES:
            raise ConfigError(f"observer.source must be one of {OBSERVER_SOURCES}")
        if self.horizon < 1:
            raise ConfigError("observer.horizon must be at least 1")
        if len(self.Q) != 3 or len(self.P0) != 3 or len(self.x0_offset) != 3:
            raise ConfigError("observer.Q, observer.P0 and observer.x0_offset need three values")
        if self.R is not None and not self.R > 0:
            raise ConfigError("observer.R must be positive")
        if self.arrival not in ARRIVAL_MODES:
            raise ConfigError(f"observer.arrival must be one of {ARRIVAL_MODES}")
        if not self.duration > 0:
            raise ConfigError("observer.duration must be positive")


@dataclass(frozen=True)
class RunConfig:
    pendulum: PendulumParams = field(default_factory=PendulumParams)
    data: DataConfig = field(default_factory=DataConfig)
    clustering: ClusterConfig = field(default_factory=ClusterConfig)
    tree: TreeConfig = field(default_factory=TreeConfig)
    sysid: SysidConfig = field(default_factory=SysidConfig)
    validation: ValidationConfig = field(default_factory=ValidationConfig)
    observer: ObserverConfig = field(default_factory=ObserverConfig)
    output: str = "run"

    def with_seed(self, seed: int) -> "RunConfig":
        """Copy with every seed replaced by ``seed`` (the observer noise seed is offset)."""
        seed = int(seed)
        return replace(
            self,
            data=replace(self.data, seed=seed),
            clustering=replace(self.clustering, seed=seed),
            observer=replace(self.observer, noise_seed=seed + 99),
        )

    def to_dict(self) -> dict:
        return _plain(asdict(self))


def _pair(v, name, lo=-math.inf):
    if len(v) != 2 or not (lo <= v[0] <= v[1]):
        raise ConfigError(f"{name} must be an ordered pair with values >= {lo}")


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def _build(cls, raw, where: str):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"section {where!r} must be a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"unknown keys in {where!r}: {unknown}")
    kw = {}
    for name, value in raw.items():
        if isinstance(value, list):
            value = tuple(value)
        kw[name] = value
    try:
        return cls(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where!r} section: {exc}") from exc


_SECTIONS = {
    "pendulum": PendulumParams,
    "data": DataConfig,
    "clustering": ClusterConfig,
    "tree": TreeConfig,
    "sysid": SysidConfig,
    "validation": ValidationConfig,
    "observer": ObserverConfig,
}


def config_from_dict(raw: dict | None) -> RunConfig:
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = sorted(set(raw) - set(_SECTIONS) - {"output"})
    if unknown:
        raise ConfigError(f"unknown configuration sections: {unknown}")
    kw = {name: _build(cls, raw.get(name), name) for name, cls in _SECTIONS.items()}
    if "output" in raw:
        kw["output"] = str(raw["output"])
    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return config_from_dict(raw)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)

