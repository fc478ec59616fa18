"""rf pseudopotential, rf-null search, secular modes and Mathieu parameters."""

import logging
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, special

from efield import FieldBasis
from models.drive import DriveConfig
from models.exceptions import (
    ConfigError,
    NoNullError,
    NonStationaryPointError,
    TargetUnreachableError,
    UnstableModeError,
)
from models.solution import MATHIEU_Q_LIMIT, SOFT_CURVATURE, TrapSolution
from utils.logs import logged

logger = logging.getLogger(__name__)


def _ponderomotive_factor(drive: DriveConfig) -> float:
    ion = drive.ion
    return ion.charge ** 2 / (4.0 * ion.mass * drive.rf_frequency ** 2)


def rf_field(basis: FieldBasis, drive: DriveConfig, point) -> np.ndarray:
    """Complex rf field phasor E = -grad(phi_rf) (V/m)."""
    return basis.electric_field(drive.rf_vector(basis), point)


def pseudopotential(basis: FieldBasis, drive: DriveConfig, point) -> np.ndarray:
    """Psi = q^2 |E_rf|^2 / (4 m Omega^2) in joules."""
    e = rf_field(basis, drive, point)
    return _ponderomotive_factor(drive) * np.sum(np.abs(e) ** 2, axis=-1)


def pseudo_gradient(basis: FieldBasis, drive: DriveConfig, point) -> np.ndarray:
    _, g, h = basis.field_terms(drive.rf_vector(basis), point)
    return 2.0 * _ponderomotive_factor(drive) * np.real(np.einsum("...ij,...j->...i", h, np.conj(g)))


def _rf_third_derivative(basis: FieldBasis, vector: np.ndarray, point: np.ndarray, step: float) -> np.ndarray:
    """T[i] = d/dx_i of the rf potential Hessian, by central differences of the analytic Hessian."""
    offsets = np.vstack([np.eye(3) * step, -np.eye(3) * step])
    _, _, h = basis.field_terms(vector, point[None, :] + offsets)
    return (h[:3] - h[3:]) / (2.0 * step)


def pseudo_hessian(basis: FieldBasis, drive: DriveConfig, point, rf_terms=None) -> np.ndarray:
    """Hessian of the pseudopotential (J/m^2).

    The leading term Re(H conj(H)) uses analytic basis Hessians and carries
    all curvature at an rf null. The field-weighted third-derivative term
    vanishes there and is taken from differences of the analytic Hessian.
    """
    p = np.asarray(point, dtype=float)
    vector = drive.rf_vector(basis)
    if rf_terms is None:
        _, g, h = basis.field_terms(vector, p)
    else:
        g, h = rf_terms
    curvature = np.real(h @ np.conj(h))
    if np.any(np.abs(g) > 0):
        t = _rf_third_derivative(basis, vector, p, 1e-4 * p[2])
        curvature = curvature + np.real(np.einsum("i,ijk->jk", np.conj(g), t))
    curvature = 0.5 * (curvature + curvature.T)
    return 2.0 * _ponderomotive_factor(drive) * curvature


def _newton_null(basis, drive, start, residual_fn, tol, max_iter, bound):
    x = np.array(start, dtype=float)
    residual = np.inf
    for _ in range(max_iter):
        e, jac = residual_fn(x)
        residual = float(np.linalg.norm(e))
        if residual < tol:
            return x, residual
        a = np.vstack([jac.real, jac.imag])
        b = np.concatenate([e.real, e.imag])
        step, *_ = np.linalg.lstsq(a, -b, rcond=None)
        x = x + step
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > bound:
            break
    raise NoNullError(f"rf null search did not converge (|E| = {residual:.3e} V/m)", residual)


@logged
def find_rf_null(
    basis: FieldBasis,
    drive: DriveConfig,
    height: float,
    guess: Sequence[float] = (0.0, 0.0),
    tol: float = 1e-6,
    max_iter: int = 50,
) -> np.ndarray:
    """In-plane point at ``height`` where the in-plane rf field vanishes.

    Gauss-Newton on the 2x2 in-plane field Jacobian (real and imaginary
    parts stacked, so phase-mismatched drives converge to the field
    minimum and fail unless it reaches ``tol``).
    """
    vector = drive.rf_vector(basis)
    bound = 10.0 * max(height, 1e-3)

    def residual(xy):
        _, g, h = basis.field_terms(vector, np.array([xy[0], xy[1], height]))
        return -g[:2], -h[:2, :2]

    xy, res = _newton_null(basis, drive, guess, residual, tol, max_iter, bound)
    logger.debug("rf null at height %.3e m: (%.3e, %.3e), |E| = %.2e", height, xy[0], xy[1], res)
    return xy


def find_point_null(
    basis: FieldBasis, drive: DriveConfig, guess: Sequence[float], tol: float = 1e-6, max_iter: int = 50
) -> np.ndarray:
    """Three-dimensional rf null, e.g. of the point-trap configuration."""
    vector = drive.rf_vector(basis)
    bound = 10.0 * max(guess[2], 1e-3)

    def residual(p):
        _, g, h = basis.field_terms(vector, p)
        return -g, -h

    p, _ = _newton_null(basis, drive, guess, residual, tol, max_iter, bound)
    if p[2] <= 0:
        raise NoNullError("rf null search left the region above the plane", np.inf)
    return p


def mathieu_stable(a: float, q: float) -> bool:
    """True when (a, q) lies inside the first Mathieu stability region."""
    q = abs(q)
    return special.mathieu_a(0, q) < a < special.mathieu_b(1, q)


def _order_axes(vectors: np.ndarray) -> np.ndarray:
    vertical = int(np.argmax(np.abs(vectors[2])))
    rest = [i for i in range(3) if i != vertical]
    if abs(vectors[0, rest[1]]) > abs(vectors[0, rest[0]]):
        rest.reverse()
    return np.array(rest + [vertical])


def _orient(vectors: np.ndarray) -> np.ndarray:
    out = vectors.copy()
    for i in range(3):
        k = int(np.argmax(np.abs(out[:, i])))
        if out[k, i] < 0:
            out[:, i] *= -1.0
    return out


def total_potential(basis: FieldBasis, drive: DriveConfig, point) -> np.ndarray:
    """Psi + q Phi_dc (J)."""
    dc = drive.dc_vector(basis)
    values = basis.evaluate(point)
    phi_dc = np.einsum("...n,n->...", values.potential, dc)
    e_rf = -np.einsum("...nk,n->...k", values.gradient, drive.rf_vector(basis))
    return _ponderomotive_factor(drive) * np.sum(np.abs(e_rf) ** 2, axis=-1) + drive.ion.charge * phi_dc


def trap_depth(
    basis: FieldBasis, drive: DriveConfig, point, axis: np.ndarray, reach: Optional[float] = None, samples: int = 400
) -> float:
    """Barrier height (J) along ``axis`` out to the first maximum of the total potential.

    The smaller of the two directions is returned. When no maximum is found
    within ``reach`` the value at the end of the search is returned.
    """
    p = np.asarray(point, dtype=float)
    axis = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
    u0 = float(total_potential(basis, drive, p))
    depths = []
    for sign in (1.0, -1.0):
        d = sign * axis
        limit = reach or 2.0 * p[2]
        if d[2] < 0:
            limit = min(limit, 0.95 * p[2] / -d[2])
        s = np.linspace(0.0, limit, samples)[1:]
        u = total_potential(basis, drive, p[None, :] + s[:, None] * d[None, :]) - u0
        peaks = np.where((u[1:-1] >= u[:-2]) & (u[1:-1] > u[2:]))[0]
        depths.append(float(u[peaks[0] + 1]) if peaks.size else float(u[-1]))
    return min(depths)


def _equilibrium_offset(
    force: np.ndarray, eigenvalues: np.ndarray, vectors: np.ndarray, soft: float = SOFT_CURVATURE
) -> float:
    """Distance (m) to the equilibrium implied by a residual force.

    Directions with curvature below ``soft`` of the stiffest one (the
    vertical axis of a pure rf drive) are judged against the stiffest
    curvature instead of their own.
    """
    scale = float(np.max(np.abs(eigenvalues)))
    if scale == 0.0:
        return 0.0 if not np.any(force) else np.inf
    f = vectors.T @ force
    stiffness = np.where(np.abs(eigenvalues) > soft * scale, np.abs(eigenvalues), scale)
    return float(np.linalg.norm(f / stiffness))


@logged
def mode_analysis(
    basis: FieldBasis,
    drive: DriveConfig,
    equilibrium,
    stationary_tol: float = 1e-9,
    with_depth: bool = False,
    require_stable: bool = False,
) -> TrapSolution:
    """Secular frequencies and principal axes from the total-potential Hessian."""
    p = np.asarray(equilibrium, dtype=float)
    ion = drive.ion
    rf_vec = drive.rf_vector(basis)
    dc_vec = drive.dc_vector(basis)
    values = basis.evaluate(p)
    g_rf = np.einsum("nk,n->k", values.gradient, rf_vec)
    h_rf = np.einsum("nkl,n->kl", values.hessian, rf_vec)
    g_dc = np.einsum("nk,n->k", values.gradient, dc_vec)
    h_dc = np.einsum("nkl,n->kl", values.hessian, dc_vec)

    force = 2.0 * _ponderomotive_factor(drive) * np.real(h_rf @ np.conj(g_rf)) + ion.charge * g_dc
    hessian = pseudo_hessian(basis, drive, p, rf_terms=(g_rf, h_rf)) + ion.charge * h_dc
    eigenvalues, vectors = np.linalg.eigh(hessian)

    displacement = _equilibrium_offset(force, eigenvalues, vectors)
    if displacement > stationary_tol:
        raise NonStationaryPointError(
            f"point is not stationary: residual force {np.linalg.norm(force):.3e} N "
            f"(~{displacement:.3e} m from equilibrium)"
        )

    order = _order_axes(vectors)
    eigenvalues = eigenvalues[order]
    vectors = _orient(vectors[:, order])
    frequencies = np.sign(eigenvalues) * np.sqrt(np.abs(eigenvalues) / ion.mass)

    norm = ion.mass * drive.rf_frequency ** 2
    q = np.array([2.0 * ion.charge * np.linalg.norm(h_rf @ vectors[:, i]) / norm for i in range(3)])
    a = np.array([4.0 * ion.charge * vectors[:, i] @ h_dc @ vectors[:, i] / norm for i in range(3)])

    solution = TrapSolution(p, frequencies, vectors, q, a, eigenvalues, hessian)
    labels = "xyz"
    unstable = solution.unstable_axes
    for i in range(3):
        if labels[i] in unstable:
            solution.warnings.append(f"unstable axis {labels[i]}: curvature {eigenvalues[i]:.3e} J/m^2")
        if abs(q[i]) >= MATHIEU_Q_LIMIT:
            solution.warnings.append(f"axis {labels[i]}: |q| = {abs(q[i]):.3f} >= {MATHIEU_Q_LIMIT}")
        elif q[i] > 0 and not mathieu_stable(a[i], q[i]):
            solution.warnings.append(f"axis {labels[i]}: (a, q) = ({a[i]:.4f}, {q[i]:.4f}) outside first stability region")
    for w in solution.warnings:
        logger.warning(w)
    if require_stable and not solution.stable:
        raise UnstableModeError("; ".join(solution.warnings))

    if with_depth:
        solution.depths = np.array([trap_depth(basis, drive, p, vectors[:, i]) for i in range(3)])
    return solution


@logged
def rf_amplitude_for_target(
    basis: FieldBasis,
    drive: DriveConfig,
    height: float,
    target_frequency: float,
    tilt: float = 0.0,
    vertical_frequency: Optional[float] = None,
    splitting: float = 0.0,
    plane: str = "xz",
    v_max: float = 1e4,
) -> float:
    """rf amplitude (V, zero-to-peak) giving ``target_frequency`` as the planar secular frequency.

    With ``vertical_frequency`` set, dc electrodes hold the ion at ``height``
    with a lab-frame dc quadrupole of that vertical curvature, a planar
    splitting ``splitting`` and an xz (or yz) coupling that tilts the vertical
    mode by ``tilt``. Without it confinement is pure rf.
    """
    from dcsolve import solve_dc, tilted_confinement  # dcsolve builds on this module
    from models.solution import DcTarget

    if target_frequency <= 0:
        raise ConfigError("target frequency must be positive")
    if not 0.0 <= abs(tilt) <= np.radians(10.0):
        raise ConfigError("tilt angle must lie within 0..10 degrees")
    if plane not in ("xz", "yz"):
        raise ConfigError(f"tilt plane must be 'xz' or 'yz', got '{plane}'")
    x0, y0 = basis.layout.symmetry_point
    point = np.array([x0, y0, height])
    unit = drive.scaled(1.0 / drive.amplitude).with_dc({})
    ion = drive.ion

    if vertical_frequency is None:
        if tilt:
            raise ConfigError("tilting the vertical mode needs dc confinement (vertical_frequency)")

        def planar(v):
            return mode_analysis(basis, unit.scaled(v), point).planar_frequency

    else:
        k_unit = pseudo_hessian(basis, unit, point)
        c = ion.mass * vertical_frequency ** 2 / ion.charge
        delta = ion.mass * target_frequency ** 2 * ((1.0 + splitting) ** 2 - 1.0) / ion.charge
        base = np.diag([-0.5 * c - 0.5 * delta, -0.5 * c + 0.5 * delta, c])

        def planar(v):
            h = tilted_confinement(v * v * k_unit, ion.charge, base, tilt, plane)
            dc = solve_dc(basis, DcTarget(point, np.zeros(3), h))
            return mode_analysis(basis, unit.scaled(v).with_dc(dc.voltages), point).planar_frequency

    def mismatch(v):
        return planar(v) - target_frequency

    lo, hi = 0.0, 1.0
    while mismatch(hi) < 0:
        lo, hi = hi, 2.0 * hi
        if hi > v_max:
            raise TargetUnreachableError(
                f"planar frequency {target_frequency / (2 * np.pi):.4g} Hz not reached below {v_max} V at height {height:.3e} m"
            )
    v = optimize.brentq(mismatch, lo, hi, xtol=1e-12 * hi, rtol=1e-13)
    logger.info("height %.1f um: rf amplitude %.4f V (tilt %.2f deg)", height * 1e6, v, np.degrees(tilt))
    return v
