from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np

from .exceptions import InfeasibleBoundsError, LaplaceViolationError

MATHIEU_Q_LIMIT = 0.908
# curvatures below this fraction of the stiffest one count as unconfined
SOFT_CURVATURE = 1e-6
AXIS_LABELS = ("x", "y", "z")


@dataclass
class TrapSolution:
    """Secular modes at an equilibrium point.

    Columns of ``principal_axes`` are the mode eigenvectors, ordered to
    match ``frequencies``: the vertical mode (largest |z| component) is
    last, the other two are ordered by their alignment with x then y.
    Frequencies are angular; an unstable axis carries a negative value.
    """

    equilibrium: np.ndarray
    frequencies: np.ndarray
    principal_axes: np.ndarray
    mathieu_q: np.ndarray
    mathieu_a: np.ndarray
    eigenvalues: np.ndarray
    hessian: np.ndarray
    depths: Optional[np.ndarray] = None
    warnings: List[str] = field(default_factory=list)

    @property
    def unstable_axes(self) -> List[str]:
        floor = SOFT_CURVATURE * float(np.max(np.abs(self.eigenvalues)))
        return [AXIS_LABELS[i] for i, lam in enumerate(self.eigenvalues) if lam <= floor]

    @property
    def stable(self) -> bool:
        return not self.unstable_axes

    @property
    def vertical_frequency(self) -> float:
        return float(self.frequencies[2])

    @property
    def planar_frequency(self) -> float:
        """Lower of the two non-vertical mode frequencies."""
        return float(min(self.frequencies[0], self.frequencies[1]))

    @property
    def planar_splitting(self) -> float:
        wx, wy = self.frequencies[0], self.frequencies[1]
        return float(abs(wx - wy) / wx)

    @property
    def vertical_tilt(self) -> float:
        """Angle (rad) between the vertical mode and the z axis."""
        return float(np.arccos(min(1.0, abs(self.principal_axes[2, 2]))))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "equilibrium_um": (self.equilibrium * 1e6).tolist(),
            "frequencies_MHz": (self.frequencies / (2 * np.pi * 1e6)).tolist(),
            "principal_axes": self.principal_axes.T.tolist(),
            "mathieu_q": self.mathieu_q.tolist(),
            "mathieu_a": self.mathieu_a.tolist(),
            "depths_J": None if self.depths is None else self.depths.tolist(),
            "warnings": list(self.warnings),
        }


# rows of the dc constraint system: field components then independent Hessian entries
CONSTRAINT_ROWS: Tuple[str, ...] = ("Ex", "Ey", "Ez", "Hxx", "Hyy", "Hxy", "Hxz", "Hyz")


@dataclass
class DcTarget:
    """Field and curvature to realize with dc electrodes at ``point``.

    ``hessian_target`` is the potential Hessian (V/m^2) and must be
    traceless. ``weights`` has one entry per :data:`CONSTRAINT_ROWS`;
    by default Hessian rows are scaled by the target height so both
    groups are in V/m. ``bounds`` maps electrode -> (lower, upper) in V.
    """

    point: np.ndarray
    field_target: np.ndarray = field(default_factory=lambda: np.zeros(3))
    hessian_target: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    weights: Optional[np.ndarray] = None
    bounds: Mapping[str, Tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=float)
        self.field_target = np.asarray(self.field_target, dtype=float)
        self.hessian_target = np.asarray(self.hessian_target, dtype=float)
        if self.weights is None:
            scale = float(self.point[2]) if self.point[2] > 0 else 1.0
            self.weights = np.array([1.0, 1.0, 1.0] + [scale] * 5)
        self.weights = np.asarray(self.weights, dtype=float)
        self.bounds = dict(self.bounds)

    def validate(self, tol: float = 1e-9) -> None:
        h = self.hessian_target
        norm = np.linalg.norm(h)
        if abs(np.trace(h)) > tol * max(norm, 1e-300) and norm > 0:
            raise LaplaceViolationError(
                f"hessian target trace {np.trace(h):.3e} V/m^2 violates Laplace (|H| = {norm:.3e})"
            )
        if not np.allclose(h, h.T, rtol=1e-12, atol=1e-12 * max(norm, 1.0)):
            raise LaplaceViolationError("hessian target must be symmetric")
        for name, (lo, hi) in self.bounds.items():
            if lo > hi:
                raise InfeasibleBoundsError(f"bounds for '{name}': lower {lo} > upper {hi}")

    def vector(self) -> np.ndarray:
        h = self.hessian_target
        return np.array([*self.field_target, h[0, 0], h[1, 1], h[0, 1], h[0, 2], h[1, 2]])


@dataclass
class DcSolution:
    voltages: Dict[str, float]
    residual: float
    achieved_field: np.ndarray
    achieved_hessian: np.ndarray
    clipped: List[str] = field(default_factory=list)
    attained: bool = True

    def to_rows(self) -> List[Tuple[str, float]]:
        return [(name, v) for name, v in self.voltages.items()]
