from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np

from .exceptions import ConfigError, IntegrationError

PROBE_WAVELENGTH = 729e-9

TRAJECTORY_COLUMNS = ("t_s", "x_m", "y_m", "z_m", "vx_m_per_s", "vy_m_per_s", "vz_m_per_s")


@dataclass(frozen=True)
class ProbeGeometry:
    """Wavevector (rad/m) of the interrogating laser."""

    wavevector: Tuple[float, float, float]

    def __post_init__(self):
        k = np.asarray(self.wavevector, dtype=float)
        if k.shape != (3,) or not np.linalg.norm(k) > 0:
            raise ConfigError("probe wavevector must be a non-zero 3-vector")
        object.__setattr__(self, "wavevector", tuple(float(v) for v in k))

    @classmethod
    def along(cls, direction, wavelength: float = PROBE_WAVELENGTH) -> "ProbeGeometry":
        d = np.asarray(direction, dtype=float)
        norm = np.linalg.norm(d)
        if not norm > 0 or not wavelength > 0:
            raise ConfigError("probe direction and wavelength must be non-zero")
        return cls(tuple(2.0 * np.pi / wavelength * d / norm))

    @classmethod
    def vertical(cls, wavelength: float = PROBE_WAVELENGTH) -> "ProbeGeometry":
        return cls.along((0.0, 0.0, 1.0), wavelength)

    @classmethod
    def in_plane(cls, angle: float = np.pi / 4, wavelength: float = PROBE_WAVELENGTH) -> "ProbeGeometry":
        return cls.along((np.cos(angle), np.sin(angle), 0.0), wavelength)

    @property
    def k(self) -> np.ndarray:
        return np.array(self.wavevector)

    @property
    def magnitude(self) -> float:
        return float(np.linalg.norm(self.wavevector))

    @property
    def direction(self) -> np.ndarray:
        return self.k / self.magnitude


@dataclass
class Trajectory:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    method: str
    step: float = 0.0
    rtol: float = 0.0
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        self.velocities = np.asarray(self.velocities, dtype=float)
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise IntegrationError("trajectory time stamps must increase strictly")
        if not (np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.velocities))):
            raise IntegrationError("trajectory contains non-finite values")

    def __len__(self) -> int:
        return len(self.times)

    def coordinate(self, axis: int) -> np.ndarray:
        return self.positions[:, axis]

    def rows(self) -> List[Tuple[float, ...]]:
        return [(t, *p, *v) for t, p, v in zip(self.times, self.positions, self.velocities)]

    def metadata(self) -> Dict[str, Any]:
        return {"method": self.method, "step_s": self.step, "rtol": self.rtol, **self.meta}
