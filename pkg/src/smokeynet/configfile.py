"""Flat ``section.key = value`` run configuration.

Sections are ``data``, ``model``, ``train`` and ``eval``.  Every field of
:class:`VariantConfig` is a ``model.*`` key (plus ``model.variant`` to start
from a preset) and every field of :class:`TrainConfig` a ``train.*`` key.
Blank lines and ``#`` comments are ignored; unknown keys are errors.

Example::

    data.root = corpus
    data.geometry = desk
    model.variant = resnet34_lstm_vit
    model.tile_size = 32
    train.epochs = 10
"""

from __future__ import annotations

import enum
import typing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from smokeynet.models import PRESETS, ConfigError, VariantConfig, preset
from smokeynet.training import TrainConfig


@dataclass(frozen=True)
class DataConfig:
    root: str | None = None
    manifest: str | None = None  # defaults to <root>/splits.txt
    geometry: str = "figlib"
    pattern: str | None = None
    subtractor: str = "diff"


@dataclass(frozen=True)
class EvalConfig:
    split: str = "test"
    checkpoint: str | None = None
    batch: int = 8
    latency_trials: int = 5


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    variant_name: str = "resnet34_lstm_vit"
    model: VariantConfig = field(default_factory=lambda: PRESETS["resnet34_lstm_vit"])
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


_NONE = {"none", "null", ""}
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _coerce(raw: str, hint, key: str):
    text = raw.strip()
    args = typing.get_args(hint)
    if type(None) in args:
        if text.lower() in _NONE:
            return None
        hint = next(a for a in args if a is not type(None))
    try:
        if isinstance(hint, type) and issubclass(hint, enum.Enum):
            return hint(text)
        if hint is bool:
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(text)
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {getattr(hint, '__name__', hint)}") from None
    return text


def _apply(obj, section: str, values: dict[str, str]):
    hints = typing.get_type_hints(type(obj))
    names = {f.name for f in fields(obj)}
    changes = {}
    for key, raw in values.items():
        if key not in names:
            raise ConfigError(f"unknown key {section}.{key}")
        changes[key] = _coerce(raw, hints[key], f"{section}.{key}")
    return replace(obj, **changes)


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    sections: dict[str, dict[str, str]] = {"data": {}, "model": {}, "train": {}, "eval": {}}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        section, _, name = key.partition(".")
        if section not in sections or not name:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if name in sections[section]:
            raise ConfigError(f"line {lineno}: {key} given twice")
        sections[section][name] = value

    cfg = base or RunConfig()
    model_values = dict(sections["model"])
    if "variant" in model_values:
        cfg.variant_name = model_values.pop("variant")
        cfg.model = preset(cfg.variant_name)
    cfg.data = _apply(cfg.data, "data", sections["data"])
    cfg.model = _apply(cfg.model, "model", model_values).validate()
    cfg.train = _apply(cfg.train, "train", sections["train"])
    cfg.eval = _apply(cfg.eval, "eval", sections["eval"])
    return cfg


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    return parse_config(Path(path).read_text(), base)


def format_config(cfg: RunConfig) -> str:
    """Inverse of :func:`parse_config` (every field written out)."""

    def value(v):
        if v is None:
            return "none"
        if isinstance(v, enum.Enum):
            return v.value
        if isinstance(v, bool):
            return "true" if v else "false"
        return str(v)

    lines = []
    for section, obj in (("data", cfg.data), ("model", cfg.model), ("train", cfg.train), ("eval", cfg.eval)):
        if section == "model":
            lines.append(f"model.variant = {cfg.variant_name}")
        for f in fields(obj):
            lines.append(f"{section}.{f.name} = {value(getattr(obj, f.name))}")
    return "\n".join(lines) + "\n"
