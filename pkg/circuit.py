"""Lumped model of the transformer-fed two-arm rf resonator.

Nodal analysis per arm: winding output A, electrode node B (behind the
series C1), divider pickoff D. The two secondary windings are mutually
coupled and driven with opposite polarity, so only the differential mode
is resonantly excited; arm asymmetries leak into a common mode that shows
up as residual rf field on the null axis.
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

import numpy as np
from scipy import optimize

from dynamics import modulation_index
from efield import FieldBasis
from models.drive import DriveConfig
from models.exceptions import CircuitSolveError, ConfigError, TargetUnreachableError
from models.motion import ProbeGeometry
from models.resonator import (
    CV_RANGE,
    ArmResponse,
    AsymmetryFit,
    Mismatch,
    NetworkResponse,
    ResonatorNetwork,
    Transformer,
)
from pseudo import rf_field
from utils.logs import logged
from utils.parallel import parallel_map

logger = logging.getLogger(__name__)

BETA_COLUMNS = ("cv_pF", "resonance_Hz", "amplitude_ratio", "phase_error_rad", "beta", "signed_beta")


def _system(net: ResonatorNetwork, omega: float) -> Tuple[np.ndarray, np.ndarray]:
    """Complex MNA matrix and source vector.

    Unknowns: V_A+, V_A-, V_B+, V_B-, V_D+, V_D-, I+, I-.
    """
    t = net.transformer
    z_m = 1j * omega * t.coupling * t.l_sec
    y_x = 1j * omega * net.c_cross
    e = net.source_amplitude
    m = np.zeros((8, 8), dtype=complex)
    s = np.zeros(8, dtype=complex)

    for k, (arm, sign) in enumerate(((net.plus, 1.0), (net.minus, -1.0))):
        a, b, d, i, other_i, other_b = k, 2 + k, 4 + k, 6 + k, 7 - k, 3 - k
        y1 = 1j * omega * arm.c1
        y2 = 1j * omega * arm.c2
        y_b = 1.0 / (1j * omega * arm.l1) + 1j * omega * (arm.c_trap + arm.cv)
        y_d = 1j * omega * arm.c3 + 1.0 / arm.r_probe
        z_l = arm.r_loss + 1j * omega * t.l_sec

        # winding: V_A = sign*e - Z_L I + Z_M I_other
        m[i, a] = 1.0
        m[i, i] = z_l
        m[i, other_i] = -z_m
        s[i] = sign * e
        # KCL at A: winding current enters C1
        m[a, i] = 1.0
        m[a, a] = -y1
        m[a, b] = y1
        # KCL at B
        m[b, a] = y1
        m[b, b] = -(y1 + y_b + y2 + y_x)
        m[b, d] = y2
        m[b, other_b] = y_x
        # KCL at D
        m[d, b] = y2
        m[d, d] = -(y2 + y_d)
    return m, s


def _solve(net: ResonatorNetwork, omega: float) -> np.ndarray:
    if not omega > 0:
        raise CircuitSolveError("frequency must be positive")
    m, s = _system(net, omega)
    try:
        x = np.linalg.solve(m, s)
    except np.linalg.LinAlgError:
        raise CircuitSolveError(f"singular nodal matrix at {omega / (2 * np.pi):.6g} Hz") from None
    if not np.all(np.isfinite(x)) or np.linalg.cond(m) > 1e15:
        raise CircuitSolveError(f"ill-conditioned nodal matrix at {omega / (2 * np.pi):.6g} Hz")
    return x


def _source_power(net: ResonatorNetwork, x: np.ndarray) -> float:
    e = net.source_amplitude
    return 0.5 * float(np.real(e * np.conj(x[6]) - e * np.conj(x[7])))


def solve_network(net: ResonatorNetwork, frequency: float, characterize: bool = False) -> NetworkResponse:
    """Electrode and pickoff phasors of both arms at ``frequency`` (rad/s).

    ``characterize`` also fills each arm's resonance and loaded Q.
    """
    x = _solve(net, frequency)
    plus = ArmResponse(complex(x[2]), complex(x[4]))
    minus = ArmResponse(complex(x[3]), complex(x[5]))
    if characterize:
        for which, arm in (("+", plus), ("-", minus)):
            arm.resonance, arm.loaded_q = resonance(net, lambda v, k=which: abs(v[2] if k == "+" else v[3]))
    return NetworkResponse(frequency, plus, minus, _source_power(net, x))


def _peak(net: ResonatorNetwork, metric, span: float = 0.5, samples: int = 801) -> float:
    w0 = net.nominal_resonance()
    grid = np.linspace((1.0 - span) * w0, (1.0 + span) * w0, samples)
    values = np.array([metric(_solve(net, w)) for w in grid])
    k = int(np.argmax(values))
    if k in (0, samples - 1):
        raise TargetUnreachableError("resonance peak lies outside the search window")
    res = optimize.minimize_scalar(
        lambda w: -metric(_solve(net, w)),
        bounds=(grid[k - 1], grid[k + 1]),
        method="bounded",
        options={"xatol": 1e-10 * w0},
    )
    return float(res.x)


def resonance(net: ResonatorNetwork, metric) -> Tuple[float, float]:
    """Peak frequency of ``metric(solution)`` and the loaded Q from its half-power bandwidth."""
    w_r = _peak(net, metric)
    half = metric(_solve(net, w_r)) / np.sqrt(2.0)

    def edge(w):
        return metric(_solve(net, w)) - half

    w0 = net.nominal_resonance()
    lo = optimize.brentq(edge, 0.5 * w0, w_r, xtol=1e-10 * w0)
    hi = optimize.brentq(edge, w_r, 1.5 * w0, xtol=1e-10 * w0)
    return w_r, w_r / (hi - lo)


def drive_resonance(net: ResonatorNetwork) -> float:
    """Peak of the differential electrode amplitude |V+ - V-| (rad/s)."""
    return _peak(net, lambda x: abs(x[2] - x[3]))


def differential_q(net: ResonatorNetwork) -> float:
    return resonance(net, lambda x: abs(x[2] - x[3]))[1]


def mismatch(net: ResonatorNetwork, frequency: float, pickoff: bool = False) -> Mismatch:
    """Amplitude ratio, phase error wrapped to (-pi, pi] and common mode of the arms.

    With ``pickoff`` the divider outputs are compared instead of the electrodes.
    """
    r = solve_network(net, frequency)
    vp = r.plus.pickoff if pickoff else r.plus.electrode
    vm = r.minus.pickoff if pickoff else r.minus.electrode
    phase = np.angle(vp) - np.angle(vm) - np.pi
    phase = np.pi - (np.pi - phase) % (2.0 * np.pi)
    return Mismatch(abs(vp) / abs(vm), float(phase), 0.5 * (vp + vm))


def _check_trimmer(net: ResonatorNetwork) -> None:
    lo, hi = CV_RANGE
    for which in ("+", "-"):
        cv = net.arm(which).cv
        if not lo - 1e-18 <= cv <= hi + 1e-18:
            logger.warning("trimmer CV%s = %.2f pF outside its 2-7 pF range", which, cv * 1e12)


def arm_drive(net: ResonatorNetwork, template: DriveConfig, layout) -> DriveConfig:
    """Drive at the circuit's differential resonance with electrode phasors from the network.

    Phasors are scaled so the differential amplitude |V+ - V-|/2 equals the
    template amplitude.
    """
    w_r = drive_resonance(net)
    r = solve_network(net, w_r)
    scale = template.amplitude / (0.5 * abs(r.differential))
    amps = {e.name: r.plus.electrode * scale for e in layout.by_role("rf_plus")}
    amps.update({e.name: r.minus.electrode * scale for e in layout.by_role("rf_minus")})
    return DriveConfig(w_r, amps, template.dc_voltages, template.ion)


@dataclass
class BetaPoint:
    cv: float
    resonance: float
    mismatch: Mismatch
    beta: float
    signed_beta: float

    def row(self) -> Tuple[float, ...]:
        return (
            self.cv * 1e12,
            self.resonance / (2 * np.pi),
            self.mismatch.amplitude_ratio,
            self.mismatch.phase_error,
            self.beta,
            self.signed_beta,
        )


def beta_at(
    net: ResonatorNetwork, basis: FieldBasis, template: DriveConfig, point, probe: ProbeGeometry
) -> Tuple[float, float, DriveConfig]:
    """Modulation index at ``point`` for the network-driven rf.

    The signed value takes the sign of the common mode relative to the
    differential drive, so it passes linearly through zero at the match.
    """
    drive = arm_drive(net, template, basis.layout)
    e_res = rf_field(basis, drive, point)
    beta = modulation_index(e_res, drive, probe)
    plus = next(iter(drive.rf_amplitudes.values()))
    proj = np.dot(probe.wavevector, e_res) * np.conj(plus)
    sign = 1.0 if np.real(proj) >= 0 else -1.0
    return beta, sign * beta, drive


@logged
def beta_vs_resonance(
    net: ResonatorNetwork,
    basis: FieldBasis,
    template: DriveConfig,
    point,
    probe: ProbeGeometry,
    cv_values: Sequence[float],
    arm: str = "+",
    threads: int = 1,
) -> List[BetaPoint]:
    """Sweep one trimmer and report (resonance, beta) per setting."""

    def one(cv):
        n = net.with_arm(arm, cv=float(cv))
        _check_trimmer(n)
        beta, signed, drive = beta_at(n, basis, template, point, probe)
        return BetaPoint(float(cv), drive.rf_frequency, mismatch(n, drive.rf_frequency), beta, signed)

    points = parallel_map(one, cv_values, threads)
    best = min(points, key=lambda p: p.beta)
    logger.info("beta minimum %.4f at CV%s = %.3f pF", best.beta, arm, best.cv * 1e12)
    return points


def fit_arm_asymmetry(
    net: ResonatorNetwork,
    basis: FieldBasis,
    template: DriveConfig,
    point,
    probe: ProbeGeometry,
    target_beta: float = 1.5,
    arm: str = "+",
    matched_cv: float = 3e-12,
    coupling_range: Tuple[float, float] = (0.02, 0.95),
) -> AsymmetryFit:
    """Imbalance giving ``target_beta`` at the nominal trimmers while CV on ``arm`` can still null it.

    Extra C_trap on ``arm`` puts the rematch at ``matched_cv``. The common
    mode per unit imbalance scales with (1 - k) / k for transformer coupling
    k, so k is solved for at fixed l_sec (1 + k), which keeps the
    differential resonance and loaded Q.
    """
    lo, hi = CV_RANGE
    if not lo <= matched_cv <= hi:
        raise ConfigError(f"matched trimmer {matched_cv * 1e12:.2f} pF outside the 2-7 pF range")
    own, other = net.arm(arm), net.arm("-" if arm == "+" else "+")
    delta = other.c_trap + other.cv - own.c_trap - matched_cv
    if not own.c_trap + delta > 0:
        raise ConfigError(f"no positive C_trap{arm} rematches the arms at CV{arm} = {matched_cv * 1e12:.2f} pF")
    unbalanced = net.with_arm(arm, c_trap=own.c_trap + delta)
    l_diff = net.transformer.differential_inductance

    def coupled(k):
        return replace(unbalanced, transformer=Transformer(l_sec=l_diff / (1.0 + k), coupling=k))

    def excess(k):
        return beta_at(coupled(k), basis, template, point, probe)[0] - target_beta

    k_lo, k_hi = coupling_range
    if not excess(k_lo) > 0 > excess(k_hi):
        raise TargetUnreachableError(
            f"beta {target_beta} not bracketed by transformer coupling {k_lo}-{k_hi} "
            f"with a {delta * 1e12:.3f} pF imbalance"
        )
    k = float(optimize.brentq(excess, k_lo, k_hi, xtol=1e-12))
    fitted = coupled(k)
    beta = beta_at(fitted, basis, template, point, probe)[0]
    logger.info(
        "fitted imbalance C_trap%s %+.3f pF, coupling %.4f: beta %.3f at nominal trimmers", arm, delta * 1e12, k, beta
    )
    return AsymmetryFit(fitted, arm, float(delta), k, float(matched_cv), float(beta))


def linear_fit(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float, float]:
    """Least-squares line: (slope, intercept, R^2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return float(slope), float(intercept), 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
