"""Micromotion modulation index, Bessel sideband conversion and full
time-dependent trajectory integration."""

import logging
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, special
from scipy.integrate import solve_ivp

from models.drive import DriveConfig, Ion
from models.exceptions import BetaRangeError, ConfigError, IntegrationError, IonEscapedError
from models.motion import ProbeGeometry, Trajectory
from utils.logs import logged

logger = logging.getLogger(__name__)

# first zero of J0; J1/J0 diverges there
J0_FIRST_ZERO = special.jn_zeros(0, 1)[0]

Acceleration = Callable[[float, np.ndarray], np.ndarray]


def micromotion_amplitude(e_res, drive: DriveConfig) -> np.ndarray:
    """Driven micromotion amplitude phasor u = q E / (m Omega^2) (m)."""
    ion = drive.ion
    return ion.charge * np.asarray(e_res, dtype=complex) / (ion.mass * drive.rf_frequency ** 2)


def modulation_index(e_res, drive: DriveConfig, probe: ProbeGeometry) -> float:
    """beta = |k . u| for the residual rf field phasor at the ion."""
    return float(abs(np.dot(probe.k, micromotion_amplitude(e_res, drive))))


def field_for_beta(beta: float, drive: DriveConfig, probe: ProbeGeometry) -> float:
    """Residual field magnitude along the probe direction that gives ``beta`` (V/m)."""
    ion = drive.ion
    return beta * ion.mass * drive.rf_frequency ** 2 / (ion.charge * probe.magnitude)


def beta_to_sideband_ratio(beta: float) -> float:
    """Omega_1 / Omega_0 = J1(beta) / J0(beta)."""
    if not 0.0 <= beta < J0_FIRST_ZERO:
        raise BetaRangeError(f"beta {beta} outside [0, {J0_FIRST_ZERO:.6f})")
    return float(special.j1(beta) / special.j0(beta))


def sideband_ratio_to_beta(ratio: float, xtol: float = 1e-15) -> float:
    """Invert J1(beta)/J0(beta) = ratio on the branch below the first zero of J0."""
    if ratio < 0 or not np.isfinite(ratio):
        raise BetaRangeError(f"sideband ratio must be finite and non-negative, got {ratio}")
    if ratio == 0.0:
        return 0.0
    upper = J0_FIRST_ZERO * (1.0 - 1e-12)
    if beta_to_sideband_ratio(upper) < ratio:
        raise BetaRangeError(f"sideband ratio {ratio} beyond the invertible range")
    root = optimize.brentq(
        lambda b: special.j1(b) / special.j0(b) - ratio, 0.0, upper, xtol=xtol, rtol=4 * np.finfo(float).eps
    )
    return float(root)


def small_beta(ratio: float) -> float:
    """Weak-modulation approximation beta ~ 2 Omega_1 / Omega_0."""
    return 2.0 * ratio


def trap_acceleration(basis, drive: DriveConfig, phase: float = 0.0) -> Acceleration:
    """a(t, x) = (q/m) [E_dc(x) + Re(E_rf(x) exp(i (Omega t + phase)))]."""
    rf = drive.rf_vector(basis)
    dc = drive.dc_vector(basis)
    ratio = drive.ion.charge / drive.ion.mass
    omega = drive.rf_frequency

    def acceleration(t, x):
        g = basis.evaluate(x).gradient
        e_rf = -(g.T @ rf)
        e_dc = -(g.T @ dc)
        return ratio * (e_dc + np.real(e_rf * np.exp(1j * (omega * t + phase))))

    return acceleration


def quadrupole_acceleration(ion: Ion, hessian, center=(0.0, 0.0, 0.0)) -> Acceleration:
    """Static harmonic well of potential Hessian ``hessian`` (V/m^2) around ``center``."""
    h = np.asarray(hessian, dtype=float)
    c = np.asarray(center, dtype=float)
    ratio = ion.charge / ion.mass

    def acceleration(t, x):
        return -ratio * (h @ (x - c))

    return acceleration


def _box_event(box):
    lows = np.array([b[0] for b in box])
    highs = np.array([b[1] for b in box])

    def event(t, y):
        x = y[:3]
        return float(min(np.min(x - lows), np.min(highs - x)))

    event.terminal = True
    event.direction = -1
    return event, lows, highs


def _outside(x, lows, highs) -> bool:
    return bool(np.any(x <= lows) or np.any(x >= highs))


@logged
def integrate(
    acceleration: Acceleration,
    position: Sequence[float],
    velocity: Sequence[float],
    duration: float,
    samples: int = 2001,
    method: str = "DOP853",
    rtol: float = 1e-10,
    atol: Optional[float] = None,
    step: Optional[float] = None,
    box: Optional[Sequence[Tuple[float, float]]] = None,
) -> Trajectory:
    """Integrate x'' = a(t, x).

    ``method`` is an adaptive scipy scheme (dense output, sampled uniformly)
    or ``"verlet"`` for fixed-step velocity Verlet with step ``step``.
    Leaving ``box`` raises :class:`IonEscapedError` with the exit time and
    the trajectory up to it.
    """
    if not duration > 0:
        raise ConfigError("duration must be positive")
    x0 = np.asarray(position, dtype=float)
    v0 = np.asarray(velocity, dtype=float)
    if method == "verlet":
        return _verlet(acceleration, x0, v0, duration, samples, step, box)

    scale = max(float(np.max(np.abs(x0))), 1e-9)
    if atol is None:
        atol = rtol * scale

    def rhs(t, y):
        return np.concatenate([y[3:], acceleration(t, y[:3])])

    events = None
    lows = highs = None
    if box is not None:
        event, lows, highs = _box_event(box)
        if _outside(x0, lows, highs):
            raise ConfigError("initial position lies outside the sampling box")
        events = [event]
    kwargs = {"max_step": step} if step else {}
    sol = solve_ivp(
        rhs,
        (0.0, duration),
        np.concatenate([x0, v0]),
        method=method,
        rtol=rtol,
        atol=atol,
        dense_output=True,
        events=events,
        **kwargs,
    )
    if sol.status == -1:
        raise IntegrationError(f"step control failed: {sol.message}")
    end = duration
    escaped = sol.status == 1 and events is not None and len(sol.t_events[0]) > 0
    if escaped:
        end = float(sol.t_events[0][0])
    times = np.linspace(0.0, end, samples if not escaped else max(2, int(samples * end / duration)))
    y = sol.sol(times)
    traj = Trajectory(times, y[:3].T, y[3:].T, method, rtol=rtol, meta={"nfev": int(sol.nfev)})
    if escaped:
        logger.warning("ion left the sampling box at t = %.4e s", end)
        raise IonEscapedError(f"ion escaped at t = {end:.4e} s", end, traj)
    return traj


def _verlet(acceleration, x0, v0, duration, samples, step, box) -> Trajectory:
    if not step or step <= 0:
        raise ConfigError("fixed-step integration needs a positive step")
    n = int(np.ceil(duration / step))
    stride = max(1, n // max(samples - 1, 1))
    lows = highs = None
    if box is not None:
        _, lows, highs = _box_event(box)
    x, v, t = x0.copy(), v0.copy(), 0.0
    a = acceleration(t, x)
    times, xs, vs = [t], [x.copy()], [v.copy()]
    for i in range(1, n + 1):
        v_half = v + 0.5 * step * a
        x = x + step * v_half
        t = i * step
        if lows is not None and _outside(x, lows, highs):
            traj = Trajectory(times, xs, vs, "verlet", step=step)
            raise IonEscapedError(f"ion escaped at t = {t:.4e} s", t, traj)
        a = acceleration(t, x)
        v = v_half + 0.5 * step * a
        if i % stride == 0 or i == n:
            times.append(t)
            xs.append(x.copy())
            vs.append(v.copy())
    return Trajectory(times, xs, vs, "verlet", step=step)


def integrate_motion(
    basis,
    drive: DriveConfig,
    position: Sequence[float],
    velocity: Sequence[float],
    duration: float,
    box: Optional[Sequence[Tuple[float, float]]] = None,
    phase: float = 0.0,
    **kwargs,
) -> Trajectory:
    """Trajectory in the full time-dependent field of ``drive``.

    The default sampling box extends one initial height sideways and from
    5% to three times the initial height vertically.
    """
    x0 = np.asarray(position, dtype=float)
    if not x0[2] > 0:
        raise ConfigError("initial position must lie above the electrode plane")
    if box is None:
        h = x0[2]
        box = ((x0[0] - h, x0[0] + h), (x0[1] - h, x0[1] + h), (0.05 * h, 3.0 * h))
    return integrate(trap_acceleration(basis, drive, phase), x0, velocity, duration, box=box, **kwargs)


def dominant_frequency(times, signal, band: Optional[Tuple[float, float]] = None) -> float:
    """Angular frequency of the strongest spectral line (Hann window, parabolic peak interpolation).

    ``band`` limits the search to (low, high) in rad/s. Needs uniform sampling.
    """
    t = np.asarray(times, dtype=float)
    s = np.asarray(signal, dtype=float)
    dt = t[1] - t[0]
    if not np.allclose(np.diff(t), dt, rtol=1e-6):
        raise ConfigError("spectral analysis needs uniformly sampled data")
    spectrum = np.abs(np.fft.rfft((s - s.mean()) * np.hanning(len(s))))
    freqs = 2.0 * np.pi * np.fft.rfftfreq(len(s), dt)
    mask = freqs > 0
    if band is not None:
        mask &= (freqs >= band[0]) & (freqs <= band[1])
    if not mask.any():
        raise ConfigError("no spectral bins in the requested band")
    idx = np.flatnonzero(mask)
    k = int(idx[np.argmax(spectrum[idx])])
    if 0 < k < len(spectrum) - 1:
        a, b, c = np.log(spectrum[k - 1 : k + 2] + 1e-300)
        denom = a - 2.0 * b + c
        offset = 0.5 * (a - c) / denom if denom != 0 else 0.0
    else:
        offset = 0.0
    return float((k + offset) * (freqs[1] - freqs[0]))


def spectral_amplitude(times, signal, frequency: float) -> float:
    """Amplitude of the component at ``frequency`` (rad/s), by demodulation.

    Accurate when the record spans an integer number of periods.
    """
    t = np.asarray(times, dtype=float)
    s = np.asarray(signal, dtype=float)
    weights = np.gradient(t)
    phasor = np.sum(weights * (s - np.average(s, weights=weights)) * np.exp(-1j * frequency * t)) / np.sum(weights)
    return float(2.0 * abs(phasor))
