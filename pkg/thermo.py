"""Sideband spectroscopy model and mean phonon number estimation."""

import logging
from typing import Optional, Sequence

import numpy as np
from scipy import constants, optimize, special

from models.drive import Ion
from models.exceptions import ConfigError, FitError, NonThermalError
from models.motion import ProbeGeometry
from models.sideband import GaussianFit, SidebandData, SidebandScan, ThermalEstimate
from utils.logs import logged

logger = logging.getLogger(__name__)

TAIL_MASS = 1e-12


def lamb_dicke(probe: ProbeGeometry, mode_axis, ion: Ion, mode_frequency: float) -> float:
    """eta = |k . e| sqrt(hbar / (2 m omega))."""
    e = np.asarray(mode_axis, dtype=float)
    e = e / np.linalg.norm(e)
    return float(abs(probe.k @ e) * np.sqrt(constants.hbar / (2.0 * ion.mass * mode_frequency)))


def default_scan(
    mode_frequency: float,
    eta: float,
    rabi_frequency: float = 2 * np.pi * 100e3,
    points: int = 21,
    shots: int = 100,
) -> SidebandScan:
    """pi-time probe for the n = 0 blue sideband; the grid covers its central lobe."""
    rabi = eta * rabi_frequency
    span = np.sqrt(3.0) * rabi
    return SidebandScan(mode_frequency, eta, rabi_frequency, np.pi / rabi, tuple(np.linspace(-span, span, points)), shots)


def thermal_weights(nbar: float, tail: float = TAIL_MASS) -> np.ndarray:
    """p_n = nbar^n / (nbar + 1)^(n + 1), truncated once the remaining mass is below ``tail``."""
    if nbar < 0:
        raise ConfigError("mean phonon number must be non-negative")
    if nbar == 0:
        return np.ones(1)
    r = nbar / (nbar + 1.0)
    # remaining mass beyond n_max is r^(n_max + 1)
    n_max = int(np.ceil(np.log(tail) / np.log(r)))
    n = np.arange(n_max + 1)
    return (1.0 - r) * r ** n


def coupling(scan: SidebandScan, sideband: str, n: np.ndarray, exact: bool = False) -> np.ndarray:
    """Rabi frequency from level n on the given sideband.

    Lamb-Dicke limit by default; ``exact`` uses the Laguerre-polynomial
    matrix elements of the displacement operator.
    """
    n = np.asarray(n)
    eta, omega0 = scan.eta, scan.rabi_frequency
    shift = {"red": -1, "blue": 1, "carrier": 0}.get(sideband)
    if shift is None:
        raise ConfigError(f"sideband must be red, blue or carrier, got '{sideband}'")
    if not exact:
        if shift == 0:
            return np.full(n.shape, omega0, dtype=float)
        return eta * omega0 * np.sqrt(n if shift < 0 else n + 1.0)
    lower = n if shift >= 0 else n - 1
    valid = lower >= 0
    lower = np.where(valid, lower, 0)
    s = abs(shift)
    log_fact = 0.5 * (special.gammaln(lower + 1) - special.gammaln(lower + s + 1))
    out = omega0 * np.exp(-0.5 * eta * eta + log_fact) * eta ** s * special.eval_genlaguerre(lower, s, eta * eta)
    return np.where(valid, np.abs(out), 0.0)


def excitation_probability(
    scan: SidebandScan, sideband: str, nbar: float, detuning, exact: bool = False
) -> np.ndarray:
    """Thermally averaged excitation after the probe pulse, detuning from the sideband center."""
    p = thermal_weights(nbar)
    rabi = coupling(scan, sideband, np.arange(len(p)), exact)
    d = np.atleast_1d(np.asarray(detuning, dtype=float))[:, None]
    generalized = np.sqrt(rabi[None, :] ** 2 + d ** 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        lineshape = np.where(
            generalized > 0,
            rabi[None, :] ** 2 / generalized ** 2 * np.sin(0.5 * generalized * scan.probe_time) ** 2,
            0.0,
        )
    out = np.clip(lineshape @ p, 0.0, 1.0)
    return out if np.ndim(detuning) else float(out[0])


def synthesize_scan(
    scan: SidebandScan, nbar: float, seed: Optional[int] = None, analytic: bool = False, exact: bool = False
) -> SidebandData:
    """Red and blue excitation fractions on the scan grid with binomial shot noise.

    ``analytic`` returns the exact probabilities (infinite-shot limit).
    """
    grid = scan.grid
    red = excitation_probability(scan, "red", nbar, grid, exact)
    blue = excitation_probability(scan, "blue", nbar, grid, exact)
    if analytic:
        return SidebandData(grid, red, blue, scan.shots, seed, analytic=True)
    rng = np.random.default_rng(seed)
    red = rng.binomial(scan.shots, red) / scan.shots
    blue = rng.binomial(scan.shots, blue) / scan.shots
    return SidebandData(grid, red, blue, scan.shots, seed)


def _gaussian(x, amplitude, center, width, offset):
    return amplitude * np.exp(-0.5 * ((x - center) / width) ** 2) + offset


def fit_gaussian(detunings: Sequence[float], values: Sequence[float]) -> GaussianFit:
    """Unweighted least-squares Gaussian with offset; covariance scaled by the residuals."""
    x = np.asarray(detunings, dtype=float)
    y = np.asarray(values, dtype=float)
    span = float(x.max() - x.min())
    if not span > 0 or len(x) < 5:
        raise FitError("Gaussian fit needs at least five distinct detunings")
    p0 = (max(float(y.max() - y.min()), 1e-3), float(x[np.argmax(y)]), span / 6.0, float(y.min()))
    bounds = ([0.0, x.min(), span / 100.0, -1.0], [2.0, x.max(), 2.0 * span, 1.0])
    try:
        popt, pcov = optimize.curve_fit(_gaussian, x, y, p0=p0, bounds=bounds, maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"Gaussian fit failed: {exc}") from None
    if not np.all(np.isfinite(pcov)):
        pcov = np.where(np.isfinite(pcov), pcov, 0.0)
        logger.warning("Gaussian fit covariance undetermined; reporting zero uncertainty")
    return GaussianFit(*map(float, popt), covariance=pcov)


def nbar_from_ratio(ratio: float, sigma: float = 0.0):
    """nbar = R / (1 - R) and its propagated 1 s.d."""
    if ratio < 0:
        raise NonThermalError(f"negative sideband ratio {ratio}")
    if ratio >= 1:
        raise NonThermalError(f"sideband ratio {ratio:.3f} >= 1 is not a thermal state")
    return ratio / (1.0 - ratio), sigma / (1.0 - ratio) ** 2


@logged
def estimate_nbar(data: SidebandData) -> ThermalEstimate:
    """Ratio of fitted Gaussian amplitudes, red over blue."""
    red = fit_gaussian(data.detunings, data.red)
    blue = fit_gaussian(data.detunings, data.blue)
    if not blue.amplitude > 0:
        raise FitError("blue sideband fit has no amplitude")
    ratio = red.amplitude / blue.amplitude
    sigma_r = np.hypot(red.amplitude_sigma / blue.amplitude, red.amplitude * blue.amplitude_sigma / blue.amplitude ** 2)
    nbar, sigma = nbar_from_ratio(ratio, sigma_r)
    logger.info("nbar = %.3f +/- %.3f (R = %.3f)", nbar, sigma, ratio)
    return ThermalEstimate(nbar, float(sigma), float(ratio), "gaussian_ratio", red, blue)


@logged
def estimate_nbar_lineshape(scan: SidebandScan, data: SidebandData, exact: bool = False) -> ThermalEstimate:
    """Joint fit of both scans to the thermal lineshape model with nbar as the only free parameter."""
    x = np.asarray(data.detunings, dtype=float)
    y = np.concatenate([data.red, data.blue])

    def model(_, nbar):
        return np.concatenate(
            [excitation_probability(scan, "red", nbar, x, exact), excitation_probability(scan, "blue", nbar, x, exact)]
        )

    try:
        popt, pcov = optimize.curve_fit(model, np.zeros(len(y)), y, p0=(0.1,), bounds=([0.0], [50.0]))
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"lineshape fit failed: {exc}") from None
    nbar = float(popt[0])
    sigma = float(np.sqrt(max(pcov[0, 0], 0.0))) if np.isfinite(pcov[0, 0]) else 0.0
    return ThermalEstimate(nbar, sigma, nbar / (nbar + 1.0), "lineshape")


def ground_state_probability(nbar: float) -> float:
    return 1.0 / (nbar + 1.0)
