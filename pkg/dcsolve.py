"""Least-squares dc voltage solver for equilibrium height, stray-field
compensation, vertical confinement, planar splitting and mode tilt."""

import logging
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from efield import FieldBasis
from models.drive import DriveConfig
from models.exceptions import (
    ConfigError,
    ModelDomainError,
    NoEquilibriumError,
    TargetUnreachableError,
    UnstableEquilibriumError,
)
from models.solution import DcSolution, DcTarget
from utils.logs import logged

logger = logging.getLogger(__name__)

MAX_TILT = np.radians(10.0)
MAX_HEIGHT = 500e-6


def constraint_matrix(basis: FieldBasis, point, electrodes: Sequence[str]) -> np.ndarray:
    """8 x n matrix of unit-voltage field and Hessian components, rows as CONSTRAINT_ROWS."""
    values = basis.evaluate(np.asarray(point, dtype=float))
    idx = [basis.index(name) for name in electrodes]
    g = values.gradient[idx]
    h = values.hessian[idx]
    return np.stack(
        [-g[:, 0], -g[:, 1], -g[:, 2], h[:, 0, 0], h[:, 1, 1], h[:, 0, 1], h[:, 0, 2], h[:, 1, 2]],
        axis=0,
    )


def _min_norm(m: np.ndarray, rhs: np.ndarray, ridge: float) -> np.ndarray:
    if m.shape[1] == 0:
        return np.zeros(0)
    rank = np.linalg.matrix_rank(m)
    if ridge > 0 and rank < min(m.shape):
        normal = m.T @ m
        eps = ridge * np.max(np.linalg.eigvalsh(normal))
        logger.debug("rank-deficient constraint matrix (rank %d), ridge %.3e", rank, eps)
        return np.linalg.solve(normal + eps * np.eye(normal.shape[0]), m.T @ rhs)
    solution, *_ = np.linalg.lstsq(m, rhs, rcond=None)
    return solution


@logged
def solve_dc(
    basis: FieldBasis,
    target: DcTarget,
    electrodes: Optional[Sequence[str]] = None,
    ridge: float = 1e-12,
    attain_tol: float = 1e-9,
) -> DcSolution:
    """Minimum-norm voltages realizing ``target``.

    Bounds are enforced by clipping violators and re-solving on the
    remaining free electrodes. A residual that cannot be removed is reported
    on the solution rather than raised.
    """
    target.validate()
    names = list(electrodes) if electrodes is not None else basis.layout.names_by_role("dc")
    if not names:
        raise ConfigError("dc solve needs at least one dc electrode")
    for name in target.bounds:
        basis.layout.index(name)

    w = np.diag(target.weights)
    a = w @ constraint_matrix(basis, target.point, names)
    b = w @ target.vector()
    lo = np.array([target.bounds.get(n, (-np.inf, np.inf))[0] for n in names])
    hi = np.array([target.bounds.get(n, (-np.inf, np.inf))[1] for n in names])

    v = np.zeros(len(names))
    free = np.ones(len(names), dtype=bool)
    for _ in range(len(names) + 1):
        v[free] = _min_norm(a[:, free], b - a[:, ~free] @ v[~free], ridge)
        violated = free & ((v < lo) | (v > hi))
        if not violated.any():
            break
        v[violated] = np.clip(v[violated], lo[violated], hi[violated])
        free &= ~violated
    clipped = [n for n, f in zip(names, free) if not f]

    residual = float(np.linalg.norm(a @ v - b))
    voltages = {n: float(x) for n, x in zip(names, v)}
    _, grad, hess = basis.field_terms(basis.voltage_vector(voltages), target.point)
    attained = residual <= attain_tol * max(float(np.linalg.norm(b)), 1e-300) or residual == 0.0
    if not attained:
        logger.info("dc target not attained: weighted residual %.3e", residual)
    return DcSolution(voltages, residual, -grad, hess, clipped, attained)


def compensation_target(point, stray_field, hessian_target=None, bounds=None) -> DcTarget:
    """Target cancelling a stray field at ``point``."""
    return DcTarget(
        point,
        -np.asarray(stray_field, dtype=float),
        np.zeros((3, 3)) if hessian_target is None else hessian_target,
        bounds=bounds or {},
    )


def confinement_target(point, vertical_curvature: float, splitting_term: float = 0.0) -> DcTarget:
    """Lab-frame quadrupole: ``c`` along z, ``-c/2 -+ d/2`` along x and y (V/m^2)."""
    c, d = vertical_curvature, splitting_term
    return DcTarget(point, np.zeros(3), np.diag([-0.5 * c - 0.5 * d, -0.5 * c + 0.5 * d, c]))


def _rotation(theta: float, plane: str) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    if plane == "xz":
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    if plane == "yz":
        return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])
    if plane == "xy":
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    raise ConfigError(f"unknown tilt plane '{plane}'")


def tilt_target(hessian: np.ndarray, theta: float, plane: str = "xz") -> np.ndarray:
    """Conjugate ``hessian`` by the rotation of ``theta`` in ``plane``.

    The rotation carries z towards the first axis of the plane, so a vertical
    principal axis ends up tilted by ``theta`` towards x (for ``xz``).
    """
    if abs(theta) > MAX_TILT + 1e-15:
        raise ModelDomainError(f"tilt {np.degrees(theta):.2f} deg exceeds 10 deg")
    r = _rotation(theta, plane)
    out = r @ np.asarray(hessian, dtype=float) @ r.T
    return 0.5 * (out + out.T)


def mode_target(
    basis: FieldBasis,
    drive: DriveConfig,
    point,
    omega_x: float,
    omega_y: float,
    tilt: float = 0.0,
    plane: str = "xz",
) -> DcTarget:
    """dc target giving planar frequencies ``omega_x``, ``omega_y`` at ``point``.

    The rf pseudopotential curvature is subtracted from the desired total;
    the vertical frequency follows from Laplace (dc Hessian traceless).
    """
    from pseudo import pseudo_hessian

    ion = drive.ion
    p = np.asarray(point, dtype=float)
    k_rf = pseudo_hessian(basis, drive, p)
    kx, ky = ion.mass * omega_x ** 2, ion.mass * omega_y ** 2
    kz = np.trace(k_rf) - kx - ky
    if kz <= 0:
        raise TargetUnreachableError(
            f"rf curvature too weak for planar {omega_x / (2 * np.pi):.4g} Hz: vertical curvature {kz:.3e} J/m^2"
        )
    total = tilt_target(np.diag([kx, ky, kz]), tilt, plane)
    dc = (total - k_rf) / ion.charge
    dc -= np.trace(dc) / 3.0 * np.eye(3)
    return DcTarget(p, np.zeros(3), dc)


@logged
def equilibrium_on_null(
    basis: FieldBasis,
    drive: DriveConfig,
    dc_voltages: Optional[Dict[str, float]] = None,
    interval: Tuple[float, float] = (20e-6, 500e-6),
    samples: int = 400,
    xtol: float = 1e-13,
) -> float:
    """Height on the rf-null axis where the dc axial force vanishes with positive curvature.

    Several stable roots resolve to the one with the lowest dc energy.
    """
    lo, hi = interval
    if not 0.0 < lo < hi <= MAX_HEIGHT:
        raise ModelDomainError(f"search interval must lie in (0, 500 um], got ({lo:.3e}, {hi:.3e}) m")
    voltages = drive.dc_voltages if dc_voltages is None else dc_voltages
    vector = basis.voltage_vector({k: float(v) for k, v in voltages.items()})
    x0, y0 = basis.layout.symmetry_point
    charge = drive.ion.charge

    def axis(z):
        z = np.atleast_1d(z)
        return np.stack([np.full_like(z, x0), np.full_like(z, y0), z], axis=-1)

    def axial_field(z):
        _, g, _ = basis.field_terms(vector, axis(z))
        return -g[..., 2]

    zs = np.linspace(lo, hi, samples)
    ez = axial_field(zs)
    if not np.any(ez):
        raise NoEquilibriumError("dc axial field vanishes identically: no axial confinement")

    roots = []
    for i in range(samples - 1):
        if ez[i] == 0.0:
            roots.append(zs[i])
        elif ez[i] * ez[i + 1] < 0:
            roots.append(optimize.brentq(lambda z: float(axial_field(z)[0]), zs[i], zs[i + 1], xtol=xtol))
    if ez[-1] == 0.0:
        roots.append(zs[-1])
    if not roots:
        raise NoEquilibriumError(f"no axial force zero between {lo * 1e6:.1f} and {hi * 1e6:.1f} um")

    pot, _, hess = basis.field_terms(vector, axis(np.array(roots)))
    stable = [(charge * p, z) for z, p, h in zip(roots, pot, hess) if charge * h[2, 2] > 0]
    if not stable:
        raise UnstableEquilibriumError(
            f"axial force zero(s) at {', '.join(f'{z * 1e6:.2f}' for z in roots)} um are all unstable"
        )
    energy, z_star = min(stable)
    if len(stable) > 1:
        logger.info("%d stable axial equilibria, choosing %.3f um", len(stable), z_star * 1e6)
    return float(z_star)


def tilted_confinement(k_rf: np.ndarray, charge: float, base: np.ndarray, tilt: float, plane: str = "xz") -> np.ndarray:
    """Lab-frame dc quadrupole ``base`` plus the xz (or yz) coupling that tilts the total vertical mode by ``tilt``.

    ``k_rf`` is the pseudopotential Hessian (J/m^2) the dc field adds to.
    """
    if plane not in ("xz", "yz"):
        raise ConfigError(f"tilt plane must be 'xz' or 'yz', got '{plane}'")
    if abs(tilt) > MAX_TILT + 1e-15:
        raise ModelDomainError(f"tilt {np.degrees(tilt):.2f} deg exceeds 10 deg")
    axis = 0 if plane == "xz" else 1
    h = np.array(base, dtype=float)
    a = k_rf[axis, axis] + charge * h[axis, axis]
    c = k_rf[2, 2] + charge * h[2, 2]
    b = 0.5 * (c - a) * np.tan(2.0 * tilt)
    h[axis, 2] = h[2, axis] = (b - k_rf[axis, 2]) / charge
    return h


def drive_confinement_target(
    basis: FieldBasis,
    drive: DriveConfig,
    point,
    vertical_frequency: float,
    tilt: float = 0.0,
    plane: str = "xz",
) -> DcTarget:
    """Vertical confinement at ``point`` for ``drive``, vertical mode tilted by ``tilt``."""
    from pseudo import pseudo_hessian

    ion = drive.ion
    p = np.asarray(point, dtype=float)
    c = ion.mass * vertical_frequency ** 2 / ion.charge
    base = np.diag([-0.5 * c, -0.5 * c, c])
    return DcTarget(p, np.zeros(3), tilted_confinement(pseudo_hessian(basis, drive, p), ion.charge, base, tilt, plane))
