"""``key = value`` run-config files merged with command-line flags."""
from __future__ import annotations

from dataclasses import fields
from pathlib import Path

from .errors import ConfigurationError
from .training import TrainConfig

_TRAIN_TYPES = {f.name: f.type for f in fields(TrainConfig)}
_TYPE_NAMES = {"float": float, "int": int, "bool": bool}

# keys that are not TrainConfig fields, with their parsers
EXTRA_KEYS = {
    "data": str,
    "out": str,
    "checkpoint": str,
    "resume": str,
    "real_windows": str,
    "train_log": str,
    "count": int,
    "num": int,
    "bins": int,
    "samples": int,
    "precision": int,
    "h": float,
}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def key_type(key: str):
    if key in _TRAIN_TYPES:
        t = _TRAIN_TYPES[key]
        t = _TYPE_NAMES.get(t, t) if isinstance(t, str) else t
        return _parse_bool if t is bool else t
    if key in EXTRA_KEYS:
        return EXTRA_KEYS[key]
    return None


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        conv = key_type(key)
        if conv is None:
            raise ConfigurationError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = conv(value)
        except ValueError as exc:
            raise ConfigurationError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return values


def load_config(path) -> dict:
    path = Path(path)
    return parse_config_text(path.read_text(encoding="utf-8"), str(path))


def merge(file_values: dict, flag_values: dict) -> dict:
    """Flags that were given (not None) override file values."""
    merged = dict(file_values)
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    return merged


def train_config(values: dict) -> TrainConfig:
    cfg = TrainConfig(**{k: v for k, v in values.items() if k in _TRAIN_TYPES})
    return cfg.validate()


def format_config(values: dict) -> str:
    return "".join(f"{k} = {values[k]}\n" for k in sorted(values) if values[k] is not None)
