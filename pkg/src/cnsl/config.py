"""INI run configuration: sections map onto the library's config dataclasses.

Unknown sections or keys are rejected by name. Command-line flags are applied
on top of the file, and the merged result is written next to every output as
``config.resolved.ini``.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .agentsim import ScheduleConfig
from .diffusion import DiffusionConfig
from .lpsi import LpsiConfig
from .model import InferConfig, TrainConfig

SNAPSHOT = "config.resolved.ini"
INVOCATION = "invocation"   # provenance section of a snapshot; ignored on load


class ConfigError(ValueError):
    pass


@dataclass
class RunSection:
    seed: int = 0
    threads: int = 1
    test_fraction: float = 0.1


@dataclass
class DataSection:
    kind: str = "cross-platform"       # cross-platform | toy | agents
    diffusion: str = "lt2lt"           # <source>2<target>, e.g. ic2sis
    samples: int = 200
    seed_fraction: float = 0.1
    toy_source_nodes: int = 50
    toy_target_nodes: int = 80
    bridges_per_source: float = 0.7
    attach_bias: float = 0.5


@dataclass
class ModelSection:
    k1: int = 16
    k2: int = 16
    hidden: int = 128
    feat_hidden: int = 16
    feat_embed: int = 1
    surrogate_hidden: int = 64
    surrogate_hops: int = 3


@dataclass
class AgentsSection:
    n_agents: int = 15000
    n_seeds: int = 5
    days: int = 5
    episodes: int = 50
    mode: str = "D0"


# section name -> (dataclass, whether it is one of the library configs)
SECTIONS = {
    "run": RunSection,
    "data": DataSection,
    "diffusion.source": DiffusionConfig,
    "diffusion.target": DiffusionConfig,
    "model": ModelSection,
    "train": TrainConfig,
    "infer": InferConfig,
    "lpsi": LpsiConfig,
    "agents": AgentsSection,
    "schedule": ScheduleConfig,
}


@dataclass
class RunConfig:
    values: dict[str, dict] = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return self.values.setdefault(name, {})

    def build(self, name: str, **extra):
        cls = SECTIONS[name]
        try:
            return cls(**{**self.section(name), **extra})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{name}]: {exc}") from None

    @property
    def seed(self) -> int:
        return int(self.section("run").get("seed", 0))

    @property
    def threads(self) -> int:
        return int(self.section("run").get("threads", 1))


def _field_types(cls) -> dict[str, str]:
    return {f.name: str(f.type) for f in dataclasses.fields(cls)}


def parse_value(raw: str, type_name: str, where: str):
    text = raw.strip()
    optional = "None" in type_name
    if optional and text.lower() in ("", "none"):
        return None
    base = type_name.replace("| None", "").replace("None |", "").strip()
    try:
        if base == "int":
            return int(text)
        if base == "float":
            return float(text)
        if base == "bool":
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
    except ValueError:
        raise ConfigError(f"{where}: cannot read {raw!r} as {base}") from None
    return text


def set_value(cfg: RunConfig, section: str, key: str, value) -> None:
    """Set ``section.key``; string values are parsed to the field's type."""
    if section not in SECTIONS:
        raise ConfigError(f"unknown config section [{section}]")
    types = _field_types(SECTIONS[section])
    if key not in types:
        raise ConfigError(f"unknown config key {key!r} in section [{section}]")
    if isinstance(value, str):
        value = parse_value(value, types[key], f"[{section}] {key}")
    cfg.section(section)[key] = value


def load_config(path=None) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read(p, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{p}: {exc}") from None
    for section in parser.sections():
        if section == INVOCATION:
            continue
        for key, raw in parser.items(section):
            set_value(cfg, section, key, raw)
    return cfg


def resolved(cfg: RunConfig) -> dict[str, dict]:
    """Every section with defaults filled in."""
    out = {}
    for name, cls in SECTIONS.items():
        defaults = {f.name: f.default for f in dataclasses.fields(cls)
                    if f.default is not dataclasses.MISSING}
        out[name] = {**defaults, **cfg.section(name)}
    return out


def write_snapshot(cfg: RunConfig, directory, extra: dict | None = None) -> Path:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for name, vals in resolved(cfg).items():
        parser[name] = {k: "none" if v is None else str(v) for k, v in vals.items()}
    if extra:
        parser[INVOCATION] = {k: str(v) for k, v in extra.items()}
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    path = d / SNAPSHOT
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)
    return path
