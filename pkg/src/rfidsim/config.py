"""Scenario files: ``key = value`` lines, optional ``[radio]`` and ``[traffic]`` sections.

Example::

    traffic = heavy
    server_delay = 10 ms
    seed = 7

    [radio]
    bandwidth = 128 kbps
    shadowing = true

    [traffic]
    lanes = 4
"""
from __future__ import annotations

import configparser
import dataclasses
import re

from .radio import RadioParams
from .simcore import ConfigError, Scenario
from .traffic import get_model, with_overrides

_MAIN = "scenario"
_UNITS = {
    "": 1.0, "s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6,
    "bps": 1.0, "kbps": 1e3, "mbps": 1e6, "k": 1e3, "m": 1.0, "db": 1.0, "dbm": 1.0, "w": 1.0, "mw": 1e-3,
    "hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9,
}
_NUMBER = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([a-zA-Zµ]*)\s*$")
_BOOL = {"true": True, "yes": True, "on": True, "1": True, "false": False, "no": False, "off": False, "0": False}

_SCENARIO_FIELDS = {f.name: f for f in dataclasses.fields(Scenario)}
_RADIO_FIELDS = {f.name: f for f in dataclasses.fields(RadioParams)}
_TRAFFIC_KEYS = {"name", "speed_range", "headway_range", "lanes"}


def _number(text: str, where: str) -> float:
    m = _NUMBER.match(text)
    unit = m.group(2) if m else ""
    # a bare capital M is mega (1M = 1 Mbit/s); lowercase m is metres
    scale = 1e6 if unit == "M" else _UNITS.get(unit.lower())
    if not m or scale is None:
        raise ConfigError(f"{where}: expected a number, got {text!r}")
    return float(m.group(1)) * scale


def _coerce(value: str, kind, where: str):
    if kind in (bool, "bool"):
        try:
            return _BOOL[value.strip().lower()]
        except KeyError:
            raise ConfigError(f"{where}: expected a boolean, got {value!r}") from None
    if kind in (int, "int"):
        x = _number(value, where)
        if x != int(x):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(x)
    if kind in (float, "float"):
        return _number(value, where)
    return value.strip()


def _range(value: str, where: str) -> tuple[float, float]:
    parts = [p for p in re.split(r"[,\s]+|(?<=\d)-(?=\d)", value.strip()) if p]
    if len(parts) == 1:
        x = _number(parts[0], where)
        return (x, x)
    if len(parts) != 2:
        raise ConfigError(f"{where}: expected 'low, high', got {value!r}")
    return (_number(parts[0], where), _number(parts[1], where))


def _line_of(text: str, key: str) -> int | None:
    for n, line in enumerate(text.splitlines(), 1):
        if re.match(rf"^\s*{re.escape(key)}\s*[=:]", line):
            return n
    return None


def parse_config(text: str) -> Scenario:
    """Build a :class:`Scenario`; omitted fields keep their defaults, unknown keys are errors."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    cp.optionxform = str
    try:
        cp.read_string(f"[{_MAIN}]\n{text}")
    except configparser.Error as exc:
        raise ConfigError(f"parse error: {exc}") from None

    def where(section, key):
        line = _line_of(text, key)
        loc = f"line {line}" if line else "config"
        return f"{loc}: {key}" if section == _MAIN else f"{loc}: [{section}] {key}"

    for section in cp.sections():
        if section not in (_MAIN, "radio", "traffic"):
            raise ConfigError(f"unknown section [{section}]")

    main = cp[_MAIN]
    kwargs = {}
    model = get_model("medium")
    for key, value in main.items():
        w = where(_MAIN, key)
        if key == "traffic":
            try:
                model = get_model(value.strip())
            except ValueError as exc:
                raise ConfigError(f"{w}: {exc}") from None
        elif key in _SCENARIO_FIELDS and key != "radio":
            kwargs[key] = _coerce(value, _SCENARIO_FIELDS[key].type, w)
        elif key in ("bandwidth",):
            kwargs.setdefault("_radio", {})[key] = _number(value, w)
        else:
            raise ConfigError(f"{w}: unknown key")

    radio_kw = kwargs.pop("_radio", {})
    if cp.has_section("radio"):
        for key, value in cp["radio"].items():
            w = where("radio", key)
            if key not in _RADIO_FIELDS:
                raise ConfigError(f"{w}: unknown key")
            radio_kw[key] = _coerce(value, _RADIO_FIELDS[key].type, w)
    if cp.has_section("traffic"):
        overrides = {}
        for key, value in cp["traffic"].items():
            w = where("traffic", key)
            if key not in _TRAFFIC_KEYS:
                raise ConfigError(f"{w}: unknown key")
            if key == "name":
                try:
                    model = get_model(value.strip())
                except ValueError as exc:
                    raise ConfigError(f"{w}: {exc}") from None
            elif key == "lanes":
                overrides[key] = _coerce(value, int, w)
            else:
                overrides[key] = _range(value, w)
        model = with_overrides(model, **overrides)

    scenario = Scenario(traffic=model, radio=RadioParams(**radio_kw), **kwargs)
    try:
        scenario.validate()
    except ConfigError as exc:
        field = str(exc).split()[0]
        line = _line_of(text, field)
        raise ConfigError(f"line {line}: {exc}" if line else str(exc)) from None
    return scenario
