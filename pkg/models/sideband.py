from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .exceptions import ConfigError

SIDEBANDS = ("red", "blue", "carrier")
SCAN_COLUMNS = ("sideband", "detuning_Hz", "excited_fraction", "shots")


@dataclass(frozen=True)
class SidebandScan:
    """Probe settings for one sideband scan. Frequencies are angular."""

    mode_frequency: float
    eta: float
    rabi_frequency: float
    probe_time: float
    detunings: Tuple[float, ...]
    shots: int = 100

    def __post_init__(self):
        if not 0.0 < self.eta < 0.5:
            raise ConfigError(f"Lamb-Dicke parameter must lie in (0, 0.5), got {self.eta}")
        if self.shots < 1:
            raise ConfigError("shots per point must be at least 1")
        if not self.probe_time > 0:
            raise ConfigError("probe time must be positive")
        if not self.rabi_frequency > 0:
            raise ConfigError("carrier Rabi frequency must be positive")
        object.__setattr__(self, "detunings", tuple(float(d) for d in self.detunings))

    @property
    def sideband_rabi(self) -> float:
        return self.eta * self.rabi_frequency

    @property
    def grid(self) -> np.ndarray:
        return np.array(self.detunings)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mode_frequency_MHz": self.mode_frequency / (2 * np.pi * 1e6),
            "eta": self.eta,
            "rabi_frequency_kHz": self.rabi_frequency / (2 * np.pi * 1e3),
            "probe_time_us": self.probe_time * 1e6,
            "points": len(self.detunings),
            "shots": self.shots,
        }


@dataclass
class SidebandData:
    detunings: np.ndarray
    red: np.ndarray
    blue: np.ndarray
    shots: int
    seed: Optional[int] = None
    analytic: bool = False

    def rows(self) -> List[Tuple[Any, ...]]:
        out = []
        for name, values in (("red", self.red), ("blue", self.blue)):
            for d, p in zip(self.detunings, values):
                out.append((name, d / (2 * np.pi), float(p), 0 if self.analytic else self.shots))
        return out


@dataclass(frozen=True)
class GaussianFit:
    amplitude: float
    center: float
    width: float
    offset: float
    covariance: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def amplitude_sigma(self) -> float:
        if self.covariance is None:
            return 0.0
        return float(np.sqrt(max(self.covariance[0, 0], 0.0)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.amplitude * np.exp(-0.5 * ((x - self.center) / self.width) ** 2) + self.offset


@dataclass(frozen=True)
class ThermalEstimate:
    nbar: float
    sigma: float
    ratio: float
    method: str = "gaussian_ratio"
    red_fit: Optional[GaussianFit] = None
    blue_fit: Optional[GaussianFit] = None

    @property
    def ground_state_probability(self) -> float:
        return 1.0 / (self.nbar + 1.0)

    def to_dict(self) -> Dict[str, Any]:
        out = {"method": self.method, "nbar": self.nbar, "sigma": self.sigma, "ratio": self.ratio}
        for name, fit in (("red", self.red_fit), ("blue", self.blue_fit)):
            if fit is not None:
                out[f"{name}_amplitude"] = fit.amplitude
                out[f"{name}_amplitude_sigma"] = fit.amplitude_sigma
                out[f"{name}_center_Hz"] = fit.center / (2 * np.pi)
                out[f"{name}_width_Hz"] = fit.width / (2 * np.pi)
        return out
