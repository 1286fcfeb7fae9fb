"""Run configuration: validation, JSON/YAML round-trip and environment overrides."""

from __future__ import annotations

import configparser
import json
import os
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import yaml

from .controller import RewardConfig
from .cost import TechnologyParams
from .devices import DeviceLibrary, default_library
from .pipeline import MODE_NAMES, PhaseConfig
from .space import SearchSpaceError, rls_space, space_from_dict, vls_space

__all__ = [
    "ConfigError",
    "DatasetConfig",
    "RunConfig",
    "RUN_MODES",
    "ENV_PREFIX",
    "load_config",
    "read_raw",
    "dump_config",
    "apply_env_overrides",
    "preset_names",
    "load_preset",
]

ENV_PREFIX = "CIMNAS_"
RUN_MODES = MODE_NAMES + ("full",)
DATA_SOURCES = ("synthetic", "cifar10", "proxy")


class ConfigError(ValueError):
    pass


def _check_keys(d: dict, allowed, where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(d).__name__}")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}; allowed {sorted(allowed)}")


@dataclass(frozen=True)
class DatasetConfig:
    source: str = "synthetic"
    path: str | None = None
    train_subset: int = 1000
    test_subset: int = 200
    classes: int = 4
    samples: int = 800
    image_shape: tuple = (1, 8, 8)
    separation: float = 10.0
    pixel_scale: float = 0.25
    background: float = 0.5

    def __post_init__(self):
        if self.source not in DATA_SOURCES:
            raise ConfigError(f"dataset.source {self.source!r} not in {DATA_SOURCES}")
        if self.source == "cifar10" and not self.path:
            raise ConfigError("dataset.path is required for cifar10")
        if len(self.image_shape) != 3 or min(self.image_shape) < 1:
            raise ConfigError("dataset.image_shape needs three positive sizes")
        for name in ("train_subset", "test_subset", "classes", "samples"):
            if getattr(self, name) < 1:
                raise ConfigError(f"dataset.{name} must be positive")

    @property
    def input_shape(self) -> tuple:
        return (3, 32, 32) if self.source == "cifar10" else tuple(self.image_shape)

    @property
    def num_classes(self) -> int:
        return 10 if self.source == "cifar10" else self.classes


@dataclass(frozen=True)
class RunConfig:
    mode: str = "ptbnas"
    space: object = "rls"  # "rls" | "vls" | inline definition
    devices: tuple = ()
    phase: PhaseConfig = field(default_factory=PhaseConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    technology: TechnologyParams = field(default_factory=TechnologyParams)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    candidate: tuple | None = None  # table rows, rnas mode only
    seed: int = 0
    workers: int = 1
    out: str = "runs/default"

    def __post_init__(self):
        if self.mode not in RUN_MODES:
            raise ConfigError(f"mode {self.mode!r} not in {RUN_MODES}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not self.devices:
            object.__setattr__(self, "devices", tuple(default_library().to_list()))
        if self.mode == "rnas" and self.candidate is None:
            raise ConfigError("rnas mode needs a candidate table")
        self.build_space()

    def device_library(self) -> DeviceLibrary:
        return DeviceLibrary.from_list(list(self.devices))

    def build_space(self):
        try:
            if isinstance(self.space, str):
                makers = {"rls": rls_space, "vls": vls_space}
                if self.space not in makers:
                    raise ConfigError(f"space {self.space!r} not in {sorted(makers)} and not inline")
                space = makers[self.space](devices=len(self.device_library()))
            else:
                space = space_from_dict(dict(self.space))
        except (SearchSpaceError, KeyError, TypeError) as exc:
            raise ConfigError(f"space: {exc}") from exc
        return space.with_classes(self.dataset.num_classes)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "space": self.space,
            "devices": [dict(d) for d in self.devices],
            "phase": asdict(self.phase),
            "reward": {"beta": self.reward.beta, "weights": list(self.reward.weights),
                       "refs": list(self.reward.refs)},
            "technology": self.technology.to_dict(),
            "dataset": {**asdict(self.dataset), "image_shape": list(self.dataset.image_shape)},
            "candidate": None if self.candidate is None else [list(r) for r in self.candidate],
            "seed": self.seed,
            "workers": self.workers,
            "out": self.out,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        _check_keys(d, {f.name for f in fields(cls)}, "config")
        kw = dict(d)
        try:
            if "phase" in kw:
                _check_keys(kw["phase"], {f.name for f in fields(PhaseConfig)}, "phase")
                kw["phase"] = PhaseConfig(**kw["phase"])
            if "reward" in kw:
                _check_keys(kw["reward"], {"beta", "weights", "refs"}, "reward")
                r = dict(kw["reward"])
                for k in ("weights", "refs"):
                    if k in r:
                        r[k] = tuple(float(v) for v in r[k])
                kw["reward"] = RewardConfig(**r)
            if "technology" in kw:
                tech = kw["technology"]
                if isinstance(tech, str):
                    kw["technology"] = TechnologyParams.load(tech)
                else:
                    kw["technology"] = TechnologyParams.from_dict(tech)
            if "dataset" in kw:
                _check_keys(kw["dataset"], {f.name for f in fields(DatasetConfig)}, "dataset")
                ds = dict(kw["dataset"])
                if "image_shape" in ds:
                    ds["image_shape"] = tuple(int(v) for v in ds["image_shape"])
                kw["dataset"] = DatasetConfig(**ds)
            if "devices" in kw:
                kw["devices"] = tuple(dict(x) for x in kw["devices"])
                DeviceLibrary.from_list(list(kw["devices"]))
            if kw.get("candidate") is not None:
                kw["candidate"] = tuple(tuple(r) for r in kw["candidate"])
            for name in ("seed", "workers"):
                if name in kw and not isinstance(kw[name], int):
                    raise ConfigError(f"{name} must be an integer")
            return cls(**kw)
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError, OSError, configparser.Error) as exc:
            raise ConfigError(str(exc)) from exc


def _parse_env_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_env_overrides(d: dict, environ=None, prefix: str = ENV_PREFIX) -> dict:
    """Overlay ``PREFIX_KEY`` / ``PREFIX_SECTION__KEY`` variables onto a raw config mapping.

    Values are read as JSON when they parse, else as plain strings.
    """
    environ = os.environ if environ is None else environ
    out = json.loads(json.dumps(d))
    for name in sorted(environ):
        if not name.startswith(prefix):
            continue
        path = name[len(prefix):].lower().split("__")
        node = out
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{name}: {part} is not a section")
        node[path[-1]] = _parse_env_value(environ[name])
    return out


def read_raw(path) -> dict:
    """Parse a JSON or YAML config file into a plain mapping (no validation yet)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        d = yaml.safe_load(text) if path.suffix in (".yaml", ".yml") else json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if d is None:
        return {}
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return d


def load_config(path=None, environ=None, overrides: dict | None = None) -> RunConfig:
    """Load a JSON or YAML config, then apply environment variables, then ``overrides``."""
    raw = {} if path is None else read_raw(path)
    raw = apply_env_overrides(raw, environ)
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig.from_dict(raw)


def dump_config(cfg: RunConfig, path) -> None:
    path = Path(path)
    d = cfg.to_dict()
    if path.suffix in (".yaml", ".yml"):
        path.write_text(yaml.safe_dump(d, sort_keys=True))
    else:
        path.write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("cimnas.presets").iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    if name not in preset_names():
        raise ConfigError(f"no preset {name!r}; have {preset_names()}")
    return json.loads(resources.files("cimnas.presets").joinpath(f"{name}.json").read_text())
