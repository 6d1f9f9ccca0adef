"""Scenario configuration files (TOML).

See the README for the full key reference. Every key is optional except
``seed`` and ``[prompts]``; unknown keys are rejected.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .tomlio import TomlError, load_toml, loads_toml

CONFIG_SCHEMA_VERSION = 1
ARCHITECTURES = ("edge", "d2d", "cluster", "cluster_edge")
CHANNELS = ("fixed", "awgn", "rayleigh", "lossless")
DEVICE_KEYS = {"role", "steps_per_s", "joules_per_step", "tx_power", "uplink_hz", "downlink_hz"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    prompts: tuple[tuple[str, str], ...]
    name: str = "scenario"
    T: int = 11
    beta_start: float = 0.1
    beta_end: float = 0.6
    width: int = 16
    height: int = 16
    sigma0: float = 0.05
    background_weight: float = 1e-3
    prototypes: tuple[tuple[str, str], ...] = ()
    graph: str | None = None
    architecture: str = "edge"
    shared_steps: tuple[int, ...] = (5,)
    channel: str = "fixed"
    ber: tuple[float, ...] = (0.0,)
    snr: tuple[float, ...] = ()
    bits: int = 8
    q_lo: float = -4.0
    q_hi: float = 4.0
    threshold: float = 0.5
    policy: str = "leader"
    force_group: bool = False
    cache: bool = True
    repetitions: int = 50
    fade_timeline: tuple[tuple[float, float], ...] = ()
    deep_fade_threshold: float = 0.5
    split_increment: int = 2
    fixed_rate_bps: float = 1e6
    devices: tuple[tuple[str, tuple[tuple[str, Any], ...]], ...] = ()
    write_images: bool = True

    @property
    def users(self) -> tuple[str, ...]:
        return tuple(u for u, _ in self.prompts)

    def channel_points(self) -> tuple:
        if self.channel == "fixed":
            return self.ber
        if self.channel == "lossless":
            return (None,)
        return self.snr if self.snr else (None,)

    def cells(self) -> list[tuple[int, Any]]:
        return [(s, point) for s in self.shared_steps for point in self.channel_points()]


_SCALARS = {f.name: f for f in fields(ScenarioConfig)}
_LISTABLE = {"shared_steps", "ber", "snr"}


def _number(key, value, kind):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"key {key!r}: expected a number, got {value!r}")
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"key {key!r}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _coerce(key: str, value: Any, base: Path | None) -> Any:
    default = _SCALARS[key].default
    if key in _LISTABLE:
        items = value if isinstance(value, list) else [value]
        if not items:
            raise ConfigError(f"key {key!r}: sweep list must be non-empty")
        kind = int if key == "shared_steps" else float
        return tuple(_number(key, v, kind) for v in items)
    if key == "prompts":
        if not isinstance(value, dict) or not value:
            raise ConfigError("key 'prompts': expected a non-empty table of user = \"prompt\"")
        for u, text in value.items():
            if not isinstance(text, str):
                raise ConfigError(f"key 'prompts.{u}': expected a string")
        return tuple((str(u), text) for u, text in value.items())
    if key == "prototypes":
        if not isinstance(value, dict):
            raise ConfigError("key 'prototypes': expected a table of concept = \"path.pgm\" | \"procedural\"")
        out = []
        for concept, src in value.items():
            if not isinstance(src, str):
                raise ConfigError(f"key 'prototypes.{concept}': expected a string")
            if src != "procedural" and base is not None and not Path(src).is_absolute():
                src = str(base / src)
            out.append((str(concept), src))
        return tuple(out)
    if key == "fade_timeline":
        if not isinstance(value, list):
            raise ConfigError("key 'fade_timeline': expected a list of [time, snr] pairs")
        pairs = []
        for item in value:
            if not isinstance(item, list) or len(item) != 2:
                raise ConfigError("key 'fade_timeline': every entry must be [time, snr]")
            pairs.append((_number(key, item[0], float), _number(key, item[1], float)))
        return tuple(pairs)
    if key == "devices":
        if not isinstance(value, dict):
            raise ConfigError("key 'devices': expected a table of device tables")
        out = []
        for dev, spec in value.items():
            if not isinstance(spec, dict):
                raise ConfigError(f"key 'devices.{dev}': expected a table")
            bad = set(spec) - DEVICE_KEYS
            if bad:
                raise ConfigError(f"unknown key 'devices.{dev}.{sorted(bad)[0]}'")
            out.append((str(dev), tuple(sorted(spec.items()))))
        return tuple(out)
    if key == "graph":
        if not isinstance(value, str):
            raise ConfigError("key 'graph': expected a path string")
        return str(base / value) if base is not None and not Path(value).is_absolute() else value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"key {key!r}: expected true or false, got {value!r}")
        return value
    if isinstance(default, int) or key == "seed":
        return _number(key, value, int)
    if isinstance(default, float):
        return _number(key, value, float)
    if not isinstance(value, str):
        raise ConfigError(f"key {key!r}: expected a string, got {value!r}")
    return value


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    def bad(msg):
        raise ConfigError(msg)

    if not 0 <= cfg.seed < 2**64:
        bad("key 'seed': must be a 64-bit unsigned integer")
    if cfg.T < 1:
        bad("key 'T': must be >= 1")
    if cfg.width < 1 or cfg.height < 1:
        bad("keys 'width'/'height': must be positive")
    if cfg.architecture not in ARCHITECTURES:
        bad(f"key 'architecture': expected one of {ARCHITECTURES}, got {cfg.architecture!r}")
    if cfg.channel not in CHANNELS:
        bad(f"key 'channel': expected one of {CHANNELS}, got {cfg.channel!r}")
    if cfg.policy not in ("leader", "union"):
        bad(f"key 'policy': expected 'leader' or 'union', got {cfg.policy!r}")
    if cfg.repetitions < 1:
        bad("key 'repetitions': must be >= 1")
    for s in cfg.shared_steps:
        if not 0 <= s <= cfg.T:
            bad(f"key 'shared_steps': {s} outside [0, {cfg.T}]")
    for p in cfg.ber:
        if not 0.0 <= p <= 1.0:
            bad(f"key 'ber': {p} outside [0, 1]")
    for v in cfg.snr:
        if not v > 0:
            bad(f"key 'snr': {v} must be positive")
    if cfg.threshold < 0:
        bad("key 'threshold': must be non-negative")
    if cfg.sigma0 < 0 or cfg.background_weight < 0:
        bad("keys 'sigma0'/'background_weight': must be non-negative")
    if not 1 <= cfg.bits <= 16 or not cfg.q_lo < cfg.q_hi:
        bad("keys 'bits'/'q_lo'/'q_hi': need 1 <= bits <= 16 and q_lo < q_hi")
    if cfg.graph is not None and not Path(cfg.graph).exists():
        bad(f"key 'graph': file {cfg.graph} does not exist")
    for concept, src in cfg.prototypes:
        if src != "procedural" and not Path(src).exists():
            bad(f"key 'prototypes.{concept}': file {src} does not exist")
    if not re.fullmatch(r"[A-Za-z0-9_.-]+", cfg.name):
        bad(f"key 'name': {cfg.name!r} must be a plain file-name token")
    return cfg


def config_from_mapping(doc: Mapping, base: Path | None = None) -> ScenarioConfig:
    version = doc.get("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"key 'schema_version': unsupported version {version!r}")
    values = {}
    for key, value in doc.items():
        if key == "schema_version":
            continue
        if key not in _SCALARS:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _coerce(key, value, base)
    for required in ("seed", "prompts"):
        if required not in values:
            raise ConfigError(f"missing required key {required!r}")
    return validate(ScenarioConfig(**values))


def _parse_error(exc: TomlError, origin: str) -> ConfigError:
    msg = str(exc)
    m = re.search(r"line (\d+)", msg)
    where = f" at line {m.group(1)}" if m else ""
    return ConfigError(f"{origin}: parse error{where}: {msg}")


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        doc = load_toml(path)
    except TomlError as exc:
        raise _parse_error(exc, str(path)) from None
    return config_from_mapping(doc, base=path.parent)


def loads_config(text: str, base: Path | None = None) -> ScenarioConfig:
    try:
        doc = loads_toml(text)
    except TomlError as exc:
        raise _parse_error(exc, "<string>") from None
    return config_from_mapping(doc, base)


def with_overrides(cfg: ScenarioConfig, **changes) -> ScenarioConfig:
    return validate(replace(cfg, **{k: v for k, v in changes.items() if v is not None}))
