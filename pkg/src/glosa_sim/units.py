"""Unit handling: SI everywhere internally, human units at the config boundary.

All lengths are meters, speeds m/s, times seconds, accelerations m/s^2, flows
passenger cars per hour per lane. Config files may annotate values with a unit
suffix ("35 mph", "1.5 mi", "295 ms"); bare numbers are taken as SI.
"""

from __future__ import annotations

MPH_TO_MS = 0.44704  # exact by definition of the international mile
MILE_TO_M = 1609.344  # exact
FOOT_TO_M = 0.3048  # exact

# unit label -> (dimension, factor to SI)
_UNIT_TABLE = {
    "m": ("length", 1.0),
    "km": ("length", 1000.0),
    "mi": ("length", MILE_TO_M),
    "mile": ("length", MILE_TO_M),
    "miles": ("length", MILE_TO_M),
    "ft": ("length", FOOT_TO_M),
    "m/s": ("speed", 1.0),
    "mps": ("speed", 1.0),
    "mph": ("speed", MPH_TO_MS),
    "km/h": ("speed", 1000.0 / 3600.0),
    "kph": ("speed", 1000.0 / 3600.0),
    "s": ("time", 1.0),
    "sec": ("time", 1.0),
    "ms": ("time", 0.001),
    "min": ("time", 60.0),
    "h": ("time", 3600.0),
    "m/s^2": ("accel", 1.0),
    "m/s2": ("accel", 1.0),
    "pc/h/ln": ("flow", 1.0),
    "veh/h/ln": ("flow", 1.0),
    "veh/h": ("flow", 1.0),
}


def mph(value: float) -> float:
    """Convert miles per hour to m/s."""
    return value * MPH_TO_MS


def miles(value: float) -> float:
    """Convert miles to meters."""
    return value * MILE_TO_M


def parse_quantity(value, dimension: str, field: str = "value") -> float:
    """Parse a config quantity into SI units.

    Accepts a bare number (assumed SI for ``dimension``) or a string of the
    form ``"<number> <unit>"`` whose unit must belong to ``dimension``.
    Raises ValueError with the offending field name on any mismatch.
    """
    if isinstance(value, bool):
        raise ValueError(f"{field}: expected a {dimension} quantity, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ValueError(f"{field}: expected a number or '<number> <unit>' string, got {value!r}")

    parts = value.strip().split()
    if len(parts) != 2:
        raise ValueError(
            f"{field}: malformed quantity {value!r}; use a bare SI number or '<number> <unit>'"
        )
    raw, unit = parts
    try:
        magnitude = float(raw)
    except ValueError:
        raise ValueError(f"{field}: non-numeric magnitude in {value!r}") from None
    entry = _UNIT_TABLE.get(unit)
    if entry is None:
        raise ValueError(f"{field}: unknown unit {unit!r} in {value!r}")
    dim, factor = entry
    if dim != dimension:
        raise ValueError(f"{field}: unit {unit!r} is a {dim} unit, expected {dimension}")
    return magnitude * factor
