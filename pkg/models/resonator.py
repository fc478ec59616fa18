from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, Optional

import numpy as np

from .exceptions import ConfigError

ARMS = ("+", "-")
CV_RANGE = (2e-12, 7e-12)

# netlist component name -> (ArmComponents field, unit suffix written to file)
_ARM_COMPONENTS = {
    "C1": ("c1", "nF"),
    "L1": ("l1", "mH"),
    "C2": ("c2", "pF"),
    "C3": ("c3", "pF"),
    "CV": ("cv", "pF"),
    "C_trap": ("c_trap", "pF"),
    "R_probe": ("r_probe", "Mohm"),
    "R_loss": ("r_loss", "ohm"),
}


@dataclass(frozen=True)
class ArmComponents:
    """One resonator arm: high-pass (C1 series, L1 shunt), divider C2/C3, trimmer CV, electrode load.

    ``r_loss`` is the series loss of the arm's secondary winding and wiring.
    """

    c1: float = 2e-9
    l1: float = 100e-3
    c2: float = 2e-12
    c3: float = 100e-12
    cv: float = 5e-12
    c_trap: float = 70e-12
    r_probe: float = 1e6
    r_loss: float = 0.593

    def __post_init__(self):
        if not self.r_loss >= 0:
            raise ConfigError("loss resistance must be non-negative (passive network)")
        for name, value in asdict(self).items():
            if name != "r_loss" and not value > 0:
                raise ConfigError(f"arm component {name} must be positive, got {value}")

    @property
    def divider_ratio(self) -> float:
        return self.c2 / (self.c2 + self.c3)

    @property
    def node_capacitance(self) -> float:
        """Capacitance to ground at the electrode node, divider in series."""
        return self.c_trap + self.cv + self.c2 * self.c3 / (self.c2 + self.c3)


@dataclass(frozen=True)
class Transformer:
    """Center-grounded secondary: two windings of ``l_sec`` with mutual coupling ``coupling``.

    Differential inductance is ``l_sec (1 + coupling)``.
    """

    l_sec: float = 0.696e-6
    coupling: float = 0.5

    def __post_init__(self):
        if not self.l_sec > 0:
            raise ConfigError("secondary inductance must be positive")
        if not 0.0 <= self.coupling < 1.0:
            raise ConfigError("transformer coupling must lie in [0, 1)")

    @property
    def differential_inductance(self) -> float:
        return self.l_sec * (1.0 + self.coupling)


@dataclass(frozen=True)
class ResonatorNetwork:
    transformer: Transformer = field(default_factory=Transformer)
    plus: ArmComponents = field(default_factory=ArmComponents)
    minus: ArmComponents = field(default_factory=ArmComponents)
    source_amplitude: float = 0.5
    c_cross: float = 0.0

    def __post_init__(self):
        if not self.source_amplitude > 0:
            raise ConfigError("source amplitude must be positive")
        if self.c_cross < 0:
            raise ConfigError("inter-arm capacitance must be non-negative")

    def arm(self, which: str) -> ArmComponents:
        if which not in ARMS:
            raise ConfigError(f"arm must be '+' or '-', got '{which}'")
        return self.plus if which == "+" else self.minus

    def with_arm(self, which: str, **changes) -> "ResonatorNetwork":
        updated = replace(self.arm(which), **changes)
        return replace(self, plus=updated) if which == "+" else replace(self, minus=updated)

    def swapped(self) -> "ResonatorNetwork":
        return replace(self, plus=self.minus, minus=self.plus)

    def nominal_resonance(self) -> float:
        """Lossless differential-mode estimate 1/sqrt(L C) (rad/s), arms averaged."""
        c = 0.0
        for arm in (self.plus, self.minus):
            c += 0.5 * arm.c1 * arm.node_capacitance / (arm.c1 + arm.node_capacitance)
        return 1.0 / np.sqrt(self.transformer.differential_inductance * c)

    def to_dict(self) -> Dict[str, Any]:
        components = []
        for which in ARMS:
            arm = self.arm(which)
            for label, (attr, unit) in _ARM_COMPONENTS.items():
                components.append(
                    {"name": label, "arm": which, f"value_{unit}": getattr(arm, attr) / _unit_scale(unit)}
                )
        return {
            "transformer": {
                "l_sec_uH": self.transformer.l_sec * 1e6,
                "coupling": self.transformer.coupling,
            },
            "source_amplitude_V": self.source_amplitude,
            "c_cross_pF": self.c_cross * 1e12,
            "components": components,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ResonatorNetwork":
        from utils.units import parse_quantities

        t = parse_quantities(data.get("transformer", {}), unitless=("coupling",))
        if "r_loss" in t:
            raise ConfigError("loss resistance is per arm: give R_loss components instead of transformer r_loss")
        transformer = Transformer(
            l_sec=t.get("l_sec", Transformer.l_sec),
            coupling=t.get("coupling", Transformer.coupling),
        )
        arms: Dict[str, Dict[str, float]] = {"+": {}, "-": {}}
        for record in data.get("components", []):
            name, which = record.get("name"), record.get("arm")
            if name not in _ARM_COMPONENTS:
                raise ConfigError(f"unknown netlist component '{name}'")
            if which not in ARMS:
                raise ConfigError(f"component '{name}': arm must be '+' or '-'")
            values = parse_quantities({k: v for k, v in record.items() if k.startswith("value_")})
            if "value" not in values:
                raise ConfigError(f"component '{name}' ({which}) has no value")
            arms[which][_ARM_COMPONENTS[name][0]] = values["value"]
        top = parse_quantities({k: v for k, v in data.items() if k in ("source_amplitude_V", "c_cross_pF")})
        return cls(
            transformer,
            ArmComponents(**arms["+"]),
            ArmComponents(**arms["-"]),
            top.get("source_amplitude", 0.5),
            top.get("c_cross", 0.0),
        )


def _unit_scale(unit: str) -> float:
    from utils.units import scale

    return scale(unit)


@dataclass
class ArmResponse:
    electrode: complex
    pickoff: complex
    resonance: Optional[float] = None
    loaded_q: Optional[float] = None

    @property
    def pickoff_ratio(self) -> complex:
        return self.pickoff / self.electrode


@dataclass
class NetworkResponse:
    frequency: float
    plus: ArmResponse
    minus: ArmResponse
    source_power: float

    @property
    def differential(self) -> complex:
        return self.plus.electrode - self.minus.electrode


@dataclass(frozen=True)
class Mismatch:
    amplitude_ratio: float
    phase_error: float
    common_mode: complex

    def to_dict(self) -> Dict[str, float]:
        return {
            "amplitude_ratio": self.amplitude_ratio,
            "phase_error_rad": self.phase_error,
            "common_mode_V": abs(self.common_mode),
        }


@dataclass(frozen=True)
class AsymmetryFit:
    """Arm imbalance and transformer coupling reproducing an un-optimized modulation index.

    ``network`` carries both: ``c_trap_delta`` added on ``arm`` and the
    fitted ``coupling`` at unchanged differential inductance.
    """

    network: ResonatorNetwork
    arm: str
    c_trap_delta: float
    coupling: float
    matched_cv: float
    beta: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "fitted_asymmetry_pF": self.c_trap_delta * 1e12,
            "fitted_coupling": self.coupling,
            "expected_matched_cv_pF": self.matched_cv * 1e12,
            "nominal_beta": self.beta,
        }
