"""Unit-voltage basis fields of rectangular electrodes in a grounded plane.

Each rectangle contributes Omega / (2 pi), Omega being the solid angle it
subtends at the evaluation point. The solid angle is a signed sum of four
corner terms ``F(X, Y) = atan2(X Y, z R)`` with ``X, Y`` the corner offsets
and ``R`` the corner distance; gradient and Hessian are the exact
derivatives of the same closed form.
"""

import functools
import logging
from dataclasses import dataclass
from typing import Mapping, Tuple, Union

import numpy as np

from models.electrode import ElectrodeLayout
from models.exceptions import DomainError, UnknownElectrodeError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
# corner signs: (x_min, y_min) +, (x_min, y_max) -, (x_max, y_min) -, (x_max, y_max) +
_CORNER_SIGN = np.array([[1.0, -1.0], [-1.0, 1.0]])

Amplitude = Union[float, complex]


@dataclass(frozen=True)
class BasisValues:
    """Per-electrode unit-voltage values at one point or a grid of points.

    Shapes: potential ``(..., n)``, gradient ``(..., n, 3)``,
    hessian ``(..., n, 3, 3)``.
    """

    potential: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray


def _check_points(point) -> np.ndarray:
    p = np.asarray(point, dtype=float)
    if p.shape[-1] != 3:
        raise ValueError(f"points need 3 coordinates, got shape {p.shape}")
    if np.any(p[..., 2] <= 0.0):
        raise DomainError("field model is only defined above the electrode plane (z > 0)")
    return p


def rectangle_terms(rects: np.ndarray, points: np.ndarray):
    """Potential, gradient and Hessian of unit-voltage rectangles.

    ``rects`` is ``(R, 4)`` as (x_min, x_max, y_min, y_max); ``points`` is
    ``(..., 3)``. Returns arrays shaped ``(..., R)``, ``(..., R, 3)`` and
    ``(..., R, 3, 3)``.
    """
    x = points[..., 0][..., None, None, None]
    y = points[..., 1][..., None, None, None]
    z = points[..., 2][..., None, None, None]
    X = rects[:, 0:2][:, :, None] - x
    Y = rects[:, 2:4][:, None, :] - y
    X, Y, z = np.broadcast_arrays(X, Y, z)

    X2, Y2, z2 = X * X, Y * Y, z * z
    R2 = X2 + Y2 + z2
    R = np.sqrt(R2)
    R3 = R2 * R
    P = X2 + z2
    Q = Y2 + z2
    XY = X * Y

    F = np.arctan2(XY, z * R)
    FX = z * Y / (P * R)
    FY = z * X / (Q * R)
    Fz = -XY * (R2 + z2) / (R * P * Q)
    FXY = z / R3
    FXX = -z * XY * (2.0 * R2 + P) / (P * P * R3)
    FYY = -z * XY * (2.0 * R2 + Q) / (Q * Q * R3)
    FXz = Y * ((X2 - z2) * R2 - z2 * P) / (P * P * R3)
    FYz = X * ((Y2 - z2) * R2 - z2 * Q) / (Q * Q * R3)
    Fzz = -XY * z * (4.0 * R2 * P * Q - (R2 + z2) * (P * Q + 2.0 * R2 * (P + Q))) / (R3 * P * P * Q * Q)

    def corner_sum(term):
        return (term * _CORNER_SIGN).sum(axis=(-2, -1)) / TWO_PI

    phi = corner_sum(F)
    # X = x_corner - x, so d/dx = -d/dX
    grad = np.stack([-corner_sum(FX), -corner_sum(FY), corner_sum(Fz)], axis=-1)
    hxx, hyy, hzz = corner_sum(FXX), corner_sum(FYY), corner_sum(Fzz)
    hxy, hxz, hyz = corner_sum(FXY), -corner_sum(FXz), -corner_sum(FYz)
    hess = np.stack(
        [
            np.stack([hxx, hxy, hxz], axis=-1),
            np.stack([hxy, hyy, hyz], axis=-1),
            np.stack([hxz, hyz, hzz], axis=-1),
        ],
        axis=-2,
    )
    return phi, grad, hess


class FieldBasis:
    """Analytic basis evaluator for every electrode of a layout.

    With ``cache=True`` single-point evaluations are memoized, which pays
    off when the same point is queried repeatedly (dc solves, root finds).
    """

    def __init__(self, layout: ElectrodeLayout, cache: bool = False, cache_size: int = 4096):
        self.layout = layout
        self.names = layout.names
        rects, owner = [], []
        for k, electrode in enumerate(layout.electrodes):
            for r in electrode.rectangles:
                rects.append(r.bounds)
                owner.append(k)
        self._rects = np.array(rects, dtype=float).reshape(-1, 4)
        self._owner = np.zeros((len(self.names), len(rects)))
        self._owner[owner, np.arange(len(rects))] = 1.0
        self._cached = functools.lru_cache(maxsize=cache_size)(self._evaluate_tuple) if cache else None

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.layout.index(name)

    def _evaluate_array(self, points: np.ndarray) -> BasisValues:
        phi, grad, hess = rectangle_terms(self._rects, points)
        return BasisValues(
            np.einsum("...r,nr->...n", phi, self._owner),
            np.einsum("...rk,nr->...nk", grad, self._owner),
            np.einsum("...rkl,nr->...nkl", hess, self._owner),
        )

    def _evaluate_tuple(self, point: Tuple[float, float, float]) -> BasisValues:
        return self._evaluate_array(np.array(point))

    def evaluate(self, point) -> BasisValues:
        p = _check_points(point)
        if self._cached is not None and p.shape == (3,):
            return self._cached(tuple(float(v) for v in p))
        return self._evaluate_array(p)

    def voltage_vector(self, voltages: Mapping[str, Amplitude]) -> np.ndarray:
        """Electrode amplitudes as a vector aligned with :attr:`names`."""
        is_complex = any(isinstance(v, complex) or np.iscomplexobj(v) for v in voltages.values())
        vec = np.zeros(len(self.names), dtype=complex if is_complex else float)
        for name, value in voltages.items():
            if self.layout.find(name) is None:
                raise UnknownElectrodeError(f"unknown electrode '{name}'")
            vec[self.layout.index(name)] = value
        return vec

    def field_terms(self, vector: np.ndarray, point):
        """Potential, gradient and Hessian of a voltage vector at ``point``."""
        values = self.evaluate(point)
        pot = np.einsum("...n,n->...", values.potential, vector)
        grad = np.einsum("...nk,n->...k", values.gradient, vector)
        hess = np.einsum("...nkl,n->...kl", values.hessian, vector)
        return pot, grad, hess

    def electric_field(self, vector: np.ndarray, point) -> np.ndarray:
        """E = -grad(phi) for a voltage vector (complex vectors give phasors)."""
        values = self.evaluate(point)
        return -np.einsum("...nk,n->...k", values.gradient, vector)


def basis_potential(basis: FieldBasis, electrode: str, point) -> np.ndarray:
    """Potential (V per V) of one electrode held at 1 V, all others grounded."""
    return basis.evaluate(point).potential[..., basis.index(electrode)]


def basis_gradient(basis: FieldBasis, electrode: str, point) -> np.ndarray:
    return basis.evaluate(point).gradient[..., basis.index(electrode), :]


def basis_hessian(basis: FieldBasis, electrode: str, point) -> np.ndarray:
    return basis.evaluate(point).hessian[..., basis.index(electrode), :, :]


def superpose(basis: FieldBasis, voltages: Mapping[str, Amplitude], point):
    """Linear superposition of basis fields: (potential, gradient, Hessian).

    Complex amplitudes are rf phasors and give complex results.
    """
    return basis.field_terms(basis.voltage_vector(voltages), point)


def strip_potential(x_min: float, x_max: float, point) -> np.ndarray:
    """Infinite strip along y (two-dimensional model), unit voltage."""
    p = _check_points(point)
    x, z = p[..., 0], p[..., 2]
    return (np.arctan2(x_max - x, z) - np.arctan2(x_min - x, z)) / np.pi


def strip_gradient(x_min: float, x_max: float, point) -> np.ndarray:
    p = _check_points(point)
    x, z = p[..., 0], p[..., 2]

    def d_dx(a):
        return -z / ((a - x) ** 2 + z * z)

    def d_dz(a):
        return -(a - x) / ((a - x) ** 2 + z * z)

    gx = (d_dx(x_max) - d_dx(x_min)) / np.pi
    gz = (d_dz(x_max) - d_dz(x_min)) / np.pi
    return np.stack([gx, np.zeros_like(gx), gz], axis=-1)
