from dataclasses import dataclass, field, replace
from typing import Any, Dict, Mapping, Optional

import numpy as np
from scipy import constants

from .electrode import ElectrodeLayout
from .exceptions import ConfigError

CA40_MASS = 39.962590863 * constants.atomic_mass


@dataclass(frozen=True)
class Ion:
    charge: float = constants.e
    mass: float = CA40_MASS

    def __post_init__(self):
        if self.mass <= 0:
            raise ConfigError("ion mass must be positive")

    @classmethod
    def calcium40(cls) -> "Ion":
        return cls()


@dataclass(frozen=True)
class DriveConfig:
    """rf drive phasors plus static dc voltages.

    ``rf_amplitudes`` are zero-to-peak phasors (V); the instantaneous
    electrode voltage is ``Re(V e^{i Omega t})``.
    """

    rf_frequency: float
    rf_amplitudes: Mapping[str, complex] = field(default_factory=dict)
    dc_voltages: Mapping[str, float] = field(default_factory=dict)
    ion: Ion = field(default_factory=Ion)

    def __post_init__(self):
        if not self.rf_frequency > 0:
            raise ConfigError("rf frequency must be positive")
        object.__setattr__(self, "rf_amplitudes", dict(self.rf_amplitudes))
        object.__setattr__(self, "dc_voltages", dict(self.dc_voltages))

    @classmethod
    def vertical_linear(
        cls, layout: ElectrodeLayout, amplitude: float, rf_frequency: float, ion: Optional[Ion] = None, **kwargs
    ) -> "DriveConfig":
        """Diagonal pairs out of phase: rf_plus at +V, rf_minus at -V."""
        amps = {e.name: complex(amplitude) for e in layout.by_role("rf_plus")}
        amps.update({e.name: complex(-amplitude) for e in layout.by_role("rf_minus")})
        return cls(rf_frequency, amps, ion=ion or Ion(), **kwargs)

    @classmethod
    def point_trap(
        cls, layout: ElectrodeLayout, amplitude: float, rf_frequency: float, ion: Optional[Ion] = None, **kwargs
    ) -> "DriveConfig":
        """All rf electrodes in phase: a single three-dimensional rf null."""
        amps = {e.name: complex(amplitude) for e in layout.by_role("rf_plus") + layout.by_role("rf_minus")}
        return cls(rf_frequency, amps, ion=ion or Ion(), **kwargs)

    @property
    def amplitude(self) -> float:
        """Largest rf amplitude magnitude."""
        return max((abs(v) for v in self.rf_amplitudes.values()), default=0.0)

    def scaled(self, factor: float) -> "DriveConfig":
        return replace(self, rf_amplitudes={k: v * factor for k, v in self.rf_amplitudes.items()})

    def with_dc(self, voltages: Mapping[str, float]) -> "DriveConfig":
        return replace(self, dc_voltages=dict(voltages))

    def with_rf(self, amplitudes: Mapping[str, complex]) -> "DriveConfig":
        return replace(self, rf_amplitudes=dict(amplitudes))

    def perturbed(self, electrode: str, factor: complex) -> "DriveConfig":
        amps = dict(self.rf_amplitudes)
        if electrode not in amps:
            raise ConfigError(f"electrode '{electrode}' carries no rf")
        amps[electrode] = amps[electrode] * factor
        return replace(self, rf_amplitudes=amps)

    def rf_vector(self, basis) -> np.ndarray:
        return basis.voltage_vector({k: complex(v) for k, v in self.rf_amplitudes.items()}).astype(complex)

    def dc_vector(self, basis) -> np.ndarray:
        return basis.voltage_vector({k: float(v) for k, v in self.dc_voltages.items()}).astype(float)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rf_frequency_MHz": self.rf_frequency / (2 * np.pi * 1e6),
            "rf_amplitudes_V": {k: [complex(v).real, complex(v).imag] for k, v in self.rf_amplitudes.items()},
            "dc_voltages_V": dict(self.dc_voltages),
            "ion": {"charge_C": self.ion.charge, "mass_kg": self.ion.mass},
        }
