"""Unit-suffixed quantity strings → SI floats.

Scenario files carry every physical quantity as text, e.g. ``"50 um"``,
``"1.9 kG/cm"`` or ``"1 kHz/um"``. Frequencies given for an *energy* are
multiplied by Planck's constant.
"""

from __future__ import annotations

import re

from scipy import constants

from src.errors import ConfigurationError

_LENGTH = {"m": 1.0, "cm": 1e-2, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9}
_TIME = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9}
_CURRENT = {"A": 1.0, "mA": 1e-3, "uA": 1e-6, "µA": 1e-6}
_FIELD = {"T": 1.0, "mT": 1e-3, "uT": 1e-6, "µT": 1e-6, "G": 1e-4, "mG": 1e-7, "kG": 0.1}
_FREQUENCY = {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9}
_ENERGY = {"J": 1.0, **{k: v * constants.h for k, v in _FREQUENCY.items()}}


def _ratio(num: dict[str, float], den: dict[str, float]) -> dict[str, float]:
    return {f"{a}/{b}": va / vb for a, va in num.items() for b, vb in den.items()}


UNITS: dict[str, dict[str, float]] = {
    "length": _LENGTH,
    "time": _TIME,
    "current": _CURRENT,
    "field": _FIELD,
    "frequency": _FREQUENCY,
    "energy": _ENERGY,
    "gradient": _ratio(_FIELD, _LENGTH),
    "speed": _ratio(_LENGTH, _TIME),
    # energy per length, e.g. imbalance per additional splitting
    "force": _ratio(_ENERGY, _LENGTH),
    # energy per length per length, e.g. imbalance sensitivity to trap displacement
    "stiffness": {f"{k}/{b}": v / vb for k, v in _ratio(_ENERGY, _LENGTH).items() for b, vb in _LENGTH.items()},
    "dimensionless": {"": 1.0, "%": 1e-2},
}

_QUANTITY_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S*)\s*$")


def parse_quantity(text: str | int | float, dimension: str) -> float:
    """Parse ``"<number> <unit>"`` for the given dimension and return SI."""
    table = UNITS.get(dimension)
    if table is None:
        raise ConfigurationError(f"Unknown dimension: {dimension}")
    if isinstance(text, bool):
        raise ConfigurationError(f"Expected a {dimension} quantity, got {text!r}")
    if isinstance(text, (int, float)):
        if dimension == "dimensionless":
            return float(text)
        raise ConfigurationError(f"Missing unit for {dimension} quantity: {text!r}")
    m = _QUANTITY_RE.match(str(text))
    if not m:
        raise ConfigurationError(f"Cannot parse quantity: {text!r}")
    value, unit = float(m.group(1)), m.group(2)
    if unit not in table:
        allowed = ", ".join(sorted(u for u in table if u)) or "(none)"
        raise ConfigurationError(f"Unit {unit!r} is not a {dimension} unit (allowed: {allowed})")
    return value * table[unit]


def angular(frequency_hz: float) -> float:
    return 2.0 * constants.pi * frequency_hz
