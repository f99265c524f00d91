"""Flat ``section.key = value`` configuration for sessions and sweeps.

Example::

    # row 4 of the 780 nm experiment
    channel.g_line = 0.49
    channel.v_a = 26
    session.direction = reverse
    reconciliation.growth = 8

Blank lines and ``#`` comments are ignored.  Command-line overrides use the
same ``section.key=value`` syntax and win over the file.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional

from .channel import ChannelParams
from .reconciliation import CascadeSchedule
from .session import SessionConfig

__all__ = ["ConfigError", "parse_config", "load_config", "session_config", "dump_config"]


class ConfigError(ValueError):
    """Malformed text, an unknown key or a value of the wrong type."""


# section.key -> (target, attribute); target is one of channel, session, cascade
_KEYS: Dict[str, tuple] = {}
for _f in dataclasses.fields(ChannelParams):
    _KEYS[f"channel.{_f.name}"] = ("channel", _f.name)
for _name in ("burst_length", "pulse_rate", "disclosed_fraction", "direction", "mode", "duty_cycle",
              "bootstrap_key_bits", "seed", "attack", "pessimistic", "k_sigma", "eta", "min_disclosed",
              "safety_margin", "security_epsilon"):
    _KEYS[f"session.{_name}"] = ("session", _name)
for _name in ("slices", "disclose", "allowed_disclose", "cascade_overhead", "leakage_aware_slicing"):
    _KEYS[f"reconciliation.{_name}"] = ("session", _name)
for _f in dataclasses.fields(CascadeSchedule):
    _KEYS[f"reconciliation.{_f.name}"] = ("cascade", _f.name)
_KEYS["leakage.samples"] = ("session", "leakage_samples")
_KEYS["leakage.slicing_samples"] = ("session", "slicing_samples")
_KEYS["leakage.order"] = ("session", "quadrature_order")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_config(text: str, overrides: Iterable[str] = ()) -> Dict[str, str]:
    """Raw ``section.key -> value`` strings; overrides replace file values."""
    out: Dict[str, str] = {}
    lines = [(f"line {i}", line) for i, line in enumerate(text.splitlines(), 1)]
    lines += [("override", o) for o in overrides]
    for where, line in lines:
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigError(f"{where}: expected 'section.key = value', got {line!r}")
        if key not in _KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        out[key] = value
    return out


def load_config(path: Optional[str | Path], overrides: Iterable[str] = ()) -> Dict[str, str]:
    text = Path(path).read_text() if path else ""
    return parse_config(text, overrides)


def _coerce(raw: str, default: Any, key: str) -> Any:
    low = raw.lower()
    if default is None and low in ("none", "null"):
        return None
    try:
        if isinstance(default, bool):
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            return tuple(int(x) for x in raw.replace(",", " ").split())
        if isinstance(default, int) and not isinstance(default, bool):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if default is None:
            # optional numbers
            f = float(raw)
            return int(f) if f.is_integer() and "." not in raw and "e" not in low else f
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {type(default).__name__}") from None
    return raw


def session_config(values: Mapping[str, str]) -> SessionConfig:
    """Build a :class:`SessionConfig` from parsed key/value strings."""
    base = SessionConfig()
    parts: Dict[str, Dict[str, Any]] = {"channel": {}, "session": {}, "cascade": {}}
    defaults = {"channel": base.channel, "session": base, "cascade": base.cascade}
    for key, raw in values.items():
        target, attr = _KEYS[key]
        parts[target][attr] = _coerce(raw, getattr(defaults[target], attr), key)
    try:
        channel = dataclasses.replace(base.channel, **parts["channel"])
        cascade = dataclasses.replace(base.cascade, **parts["cascade"])
        return dataclasses.replace(base, channel=channel, cascade=cascade, **parts["session"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def dump_config(config: SessionConfig) -> str:
    """Text that :func:`parse_config` reads back into ``config``."""
    lines = []
    for key, (target, attr) in _KEYS.items():
        obj = {"channel": config.channel, "session": config, "cascade": config.cascade}[target]
        value = getattr(obj, attr)
        if isinstance(value, tuple):
            value = " ".join(str(v) for v in value)
        elif hasattr(value, "value"):
            value = value.value
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
