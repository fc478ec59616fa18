"""Unit conversions at the file/CLI boundary. Everything inside is SI."""

import math
import re
from typing import Any, Dict, Tuple

from scipy import constants

from models.exceptions import ConfigError

UM = 1e-6
PF = 1e-12

_SCALES = {
    "m": 1.0,
    "mm": 1e-3,
    "um": 1e-6,
    "nm": 1e-9,
    "V": 1.0,
    "kV": 1e3,
    "V_per_m": 1.0,
    "V_per_m2": 1.0,
    "Hz": 1.0,
    "kHz": 1e3,
    "MHz": 1e6,
    "s": 1.0,
    "ms": 1e-3,
    "us": 1e-6,
    "ns": 1e-9,
    "m_per_s": 1.0,
    "F": 1.0,
    "nF": 1e-9,
    "pF": 1e-12,
    "H": 1.0,
    "mH": 1e-3,
    "uH": 1e-6,
    "nH": 1e-9,
    "ohm": 1.0,
    "Mohm": 1e6,
    "deg": math.pi / 180.0,
    "rad": 1.0,
    "u": constants.atomic_mass,
    "eV": constants.electron_volt,
}

# frequencies given in Hz become angular frequencies
_ANGULAR = {"Hz", "kHz", "MHz"}

_SUFFIX = re.compile(r"^(?P<base>.+?)_(?P<unit>" + "|".join(sorted(_SCALES, key=len, reverse=True)) + r")$")


def scale(unit: str) -> float:
    try:
        return _SCALES[unit]
    except KeyError:
        raise ConfigError(f"unknown unit '{unit}'") from None


def to_si(value: Any, unit: str) -> Any:
    """Convert ``value`` in ``unit`` to SI; Hz-family units give rad/s."""
    factor = scale(unit)
    if unit in _ANGULAR:
        factor *= 2.0 * math.pi
    if isinstance(value, (list, tuple)):
        return [to_si(v, unit) for v in value]
    return float(value) * factor


def from_si(value: float, unit: str) -> float:
    factor = scale(unit)
    if unit in _ANGULAR:
        factor *= 2.0 * math.pi
    return value / factor


def split_key(key: str) -> Tuple[str, str]:
    """``"height_um"`` -> ``("height", "um")``. Raises on a missing suffix."""
    match = _SUFFIX.match(key)
    if not match:
        raise ConfigError(f"parameter '{key}' needs a unit suffix (e.g. _um, _MHz, _V)")
    return match.group("base"), match.group("unit")


def parse_quantities(params: Dict[str, Any], unitless=()) -> Dict[str, Any]:
    """Strip unit suffixes from a parameter mapping, converting values to SI."""
    out: Dict[str, Any] = {}
    for key, value in params.items():
        if key in unitless or isinstance(value, (dict, bool, str)) or value is None:
            out[key] = value
            continue
        base, unit = split_key(key)
        out[base] = to_si(value, unit)
    return out
