"""Flat key-value configuration for the command-line tools.

A config file is plain text: one ``key = value`` assignment per line,
``#`` comments and blank lines ignored.  Values are JSON scalars or
arrays (unquoted bare words are taken as strings), keys are dotted
lower-case names.  Command-line ``--set key=value`` overrides use the
same syntax.  Every key is validated against the schema below; errors
carry the offending key.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Dict, Iterable, Optional, Sequence

from .errors import ConfigError

__all__ = ["DEFAULTS", "STRATEGY_TOKEN", "load_config", "parse_assignment"]

STRATEGY_TOKEN = re.compile(r"^(equal|markowitz|um|nc|sp|robust[0-9]*)$")

# key -> (default, validator-tag)
_SCHEMA: Dict[str, tuple] = {
    "data.path": (None, "optional_str"),
    "output.dir": ("out", "str"),
    "seed": (0, "nonneg_int"),
    "horizon.T": (2, "pos_int"),
    "order": (1, "order"),
    "delta0": (0.05, "unit_open"),
    "mc.draws": (200_000, "pos_int"),
    "target.mean": (None, "optional_float"),
    "paths.mode": ("sliding", "paths_mode"),
    "budget.mode": ("pathwise", "budget_mode"),
    "window.days": (250, "nonneg_int"),
    "test.days": (0, "nonneg_int"),
    "start.days": ([0], "int_list"),
    "strategy.list": (["equal", "robust"], "strategy_list"),
    "strategy.name": ("robust", "strategy"),
    "strategy.gamma": (4.0, "pos_float"),
    "strategy.um_delta": (1.96, "nonneg_float"),
    "strategy.nc_lambda": (2.0, "nonneg_float"),
    "strategy.nc_alpha": (4.0, "nonneg_float"),
    "strategy.sp_tau": (500.0, "nonneg_float"),
    "rebalance.threshold": (0.05, "nonneg_float"),
    "costs.rate": (0.002, "nonneg_float"),
    "costs.enabled": (True, "bool"),
    "report.window": (252, "window"),
    "solver.max_iter": (500, "pos_int"),
    "radius.value": (None, "optional_pos_float"),
    "floor.value": (None, "optional_float"),
}

DEFAULTS = {key: value for key, (value, _) in _SCHEMA.items()}


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _as_float(key, value) -> float:
    if isinstance(value, float):
        return value
    if _is_int(value):
        return float(value)
    raise ConfigError(key, f"expected a number, got {value!r}")


def _as_int_list(key, value):
    if isinstance(value, str):
        parts = [part.strip() for part in value.split(",") if part.strip()]
        try:
            value = [int(part) for part in parts]
        except ValueError:
            raise ConfigError(key, f"expected integers, got {value!r}") from None
    if _is_int(value):
        value = [value]
    if not isinstance(value, list) or not value:
        raise ConfigError(key, f"expected a non-empty integer list, got {value!r}")
    out = []
    for item in value:
        if not _is_int(item) or item < 0:
            raise ConfigError(key, f"expected integers >= 0, got {item!r}")
        out.append(item)
    return out


def _as_str_list(key, value):
    if isinstance(value, str):
        value = [part.strip() for part in value.split(",") if part.strip()]
    if not isinstance(value, list) or not value:
        raise ConfigError(key, f"expected a non-empty name list, got {value!r}")
    for item in value:
        if not isinstance(item, str):
            raise ConfigError(key, f"expected strategy names, got {item!r}")
    return value


def _check_strategy(key, name):
    if not isinstance(name, str) or not STRATEGY_TOKEN.match(name):
        raise ConfigError(
            key,
            f"unknown strategy {name!r}; expected equal, markowitz, um, nc, "
            "sp, robust, or robust<T>",
        )
    return name


def _validate(key: str, value):
    """Coerce and range-check one value; returns the canonical value."""
    tag = _SCHEMA[key][1]
    if tag == "str":
        if not isinstance(value, str) or not value:
            raise ConfigError(key, f"expected a non-empty string, got {value!r}")
        return value
    if tag == "optional_str":
        if value is None or isinstance(value, str):
            return value
        raise ConfigError(key, f"expected a string, got {value!r}")
    if tag == "bool":
        if isinstance(value, bool):
            return value
        raise ConfigError(key, f"expected true or false, got {value!r}")
    if tag in ("pos_int", "nonneg_int", "window"):
        if not _is_int(value):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        floor = {"pos_int": 1, "nonneg_int": 0, "window": 2}[tag]
        if value < floor:
            raise ConfigError(key, f"must be >= {floor}, got {value}")
        return value
    if tag == "order":
        if not _is_int(value) or value not in (1, 2):
            raise ConfigError(key, f"expected 1 or 2, got {value!r}")
        return value
    if tag in ("pos_float", "nonneg_float", "unit_open"):
        number = _as_float(key, value)
        if tag == "pos_float" and not number > 0:
            raise ConfigError(key, f"must be > 0, got {number}")
        if tag == "nonneg_float" and number < 0:
            raise ConfigError(key, f"must be >= 0, got {number}")
        if tag == "unit_open" and not 0 < number < 1:
            raise ConfigError(key, f"must lie strictly in (0, 1), got {number}")
        return number
    if tag == "optional_float":
        return None if value is None else _as_float(key, value)
    if tag == "optional_pos_float":
        if value is None:
            return None
        number = _as_float(key, value)
        if not number > 0:
            raise ConfigError(key, f"must be > 0, got {number}")
        return number
    if tag == "paths_mode":
        if value not in ("sliding", "disjoint"):
            raise ConfigError(key, f"expected sliding or disjoint, got {value!r}")
        return value
    if tag == "budget_mode":
        if value not in ("constant", "pathwise"):
            raise ConfigError(key, f"expected constant or pathwise, got {value!r}")
        return value
    if tag == "int_list":
        return _as_int_list(key, value)
    if tag == "strategy":
        return _check_strategy(key, value)
    if tag == "strategy_list":
        names = _as_str_list(key, value)
        return [_check_strategy(key, name) for name in names]
    raise AssertionError(f"unhandled schema tag {tag!r}")


def _parse_scalar(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_assignment(line: str) -> tuple:
    """Split one ``key = value`` assignment; raises on malformed input."""
    if "=" not in line:
        raise ConfigError(line.strip(), "expected 'key = value'")
    key, _, raw = line.partition("=")
    key = key.strip()
    if not key:
        raise ConfigError(line.strip(), "missing key before '='")
    return key, _parse_scalar(raw)


def load_config(
    path: Optional[str] = None,
    overrides: Sequence[str] = (),
) -> Dict[str, object]:
    """Defaults, then file assignments, then ``--set`` overrides.

    Unknown keys and out-of-range values raise :class:`ConfigError`
    naming the key.
    """
    cfg = dict(DEFAULTS)
    assignments: Iterable[tuple] = []
    if path is not None:
        file_path = Path(path)
        if not file_path.is_file():
            raise ConfigError("config", f"config file not found: {file_path}")
        parsed = []
        for line in file_path.read_text().splitlines():
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parsed.append(parse_assignment(stripped))
        assignments = parsed
    for key, value in list(assignments) + [parse_assignment(item) for item in overrides]:
        if key not in _SCHEMA:
            raise ConfigError(key, "unknown configuration key")
        cfg[key] = value
    for key in _SCHEMA:
        cfg[key] = _validate(key, cfg[key])
    return cfg
