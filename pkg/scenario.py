"""Scenario runner: every pipeline as a named command writing tabular output."""

import logging
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import scipy
from scipy import constants

import circuit
import dcsolve
import dynamics
import pseudo
import thermo
from efield import FieldBasis
from geometry import load_layout, validate
from models.drive import DriveConfig, Ion
from models.electrode import ElectrodeLayout
from models.exceptions import ConfigError, NoNullError
from models.motion import TRAJECTORY_COLUMNS, ProbeGeometry
from models.resonator import ResonatorNetwork
from models.scenario import UNITLESS, Scenario, figure_scenario_path
from models.sideband import SCAN_COLUMNS
from utils.io import load_json, write_table
from utils.parallel import output_lock, parallel_map
from utils.units import UM, parse_quantities

logger = logging.getLogger(__name__)

VERSION = "0.1.0"
EV = constants.electron_volt


def load_scenario(path: str) -> Scenario:
    data = load_json(path)
    return Scenario.from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)), source=path)


def _ion(values: Dict[str, Any]) -> Ion:
    return Ion(mass=values["ion_mass"]) if "ion_mass" in values else Ion()


def build_drive(layout: ElectrodeLayout, section: Dict[str, Any]) -> DriveConfig:
    """Drive from a scenario section such as ``{"rf_frequency_MHz": 18.1, "rf_amplitude_V": 100}``."""
    raw = dict(section)
    dc = raw.pop("dc_voltages_V", {}) or {}
    values = parse_quantities(raw, unitless=("configuration",))
    if "rf_frequency" not in values:
        raise ConfigError("drive needs rf_frequency_MHz")
    ion = _ion(values)
    amplitude = values.get("rf_amplitude", 1.0)
    configuration = values.get("configuration", "vertical_linear")
    if configuration == "vertical_linear":
        drive = DriveConfig.vertical_linear(layout, amplitude, values["rf_frequency"], ion)
    elif configuration == "point_trap":
        drive = DriveConfig.point_trap(layout, amplitude, values["rf_frequency"], ion)
    else:
        raise ConfigError(f"unknown rf configuration '{configuration}'")
    return drive.with_dc({k: float(v) for k, v in dc.items()})


@dataclass
class RunContext:
    scenario: Scenario
    layout: ElectrodeLayout
    basis: FieldBasis
    drive_section: Dict[str, Any]
    params: Dict[str, Any]
    out_dir: str
    threads: int = 1

    @cached_property
    def drive(self) -> DriveConfig:
        """Built on first use; drive-free commands run without an rf section."""
        return build_drive(self.layout, self.drive_section)

    @property
    def ion(self) -> Ion:
        return _ion(parse_quantities({k: v for k, v in self.drive_section.items() if k.startswith("ion_mass_")}))

    def get(self, key: str, default: Any = None, required: bool = False) -> Any:
        if key not in self.params:
            if required:
                raise ConfigError(f"{self.scenario.command}: missing parameter '{key}'")
            return default
        return self.params[key]

    def point(self, height: float) -> np.ndarray:
        x0, y0 = self.layout.symmetry_point
        return np.array([x0, y0, height])

    def linspace(self, key: str, default_points: int = 51) -> np.ndarray:
        lo, hi = self.get(key, required=True)
        return np.linspace(lo, hi, int(self.get("points", default_points)))

    def metadata(self, **extra) -> Dict[str, Any]:
        return {
            "command": self.scenario.command,
            "scenario": self.scenario.to_dict(),
            "seed": self.scenario.seed,
            "versions": {"trapsim": VERSION, "numpy": np.__version__, "scipy": scipy.__version__},
            **extra,
        }

    def write(self, name: str, metadata: Dict[str, Any], columns: Sequence[str], rows) -> str:
        path = os.path.join(self.out_dir, name)
        with output_lock:
            write_table(path, metadata, columns, rows)
        logger.info("wrote %s", path)
        return path


def _tilt(ctx: RunContext) -> float:
    return float(ctx.get("tilt", 0.0))


def _dc_for_point(ctx: RunContext, point) -> Optional[dcsolve.DcSolution]:
    """dc voltages from the scenario: planar mode target, vertical confinement, or none."""
    plane = ctx.get("plane", "xz")
    if "planar" in ctx.params:
        wx = ctx.params["planar"]
        target = dcsolve.mode_target(
            ctx.basis, ctx.drive, point, wx, wx * (1.0 + float(ctx.get("splitting", 0.0))), _tilt(ctx), plane
        )
    elif "vertical" in ctx.params:
        target = dcsolve.drive_confinement_target(ctx.basis, ctx.drive, point, ctx.params["vertical"], _tilt(ctx), plane)
    else:
        return None
    target.field_target = -np.asarray(ctx.get("stray_field", np.zeros(3)), dtype=float)
    target.bounds = _bounds(ctx)
    return dcsolve.solve_dc(ctx.basis, target)


def _bounds(ctx: RunContext) -> Dict[str, tuple]:
    raw = ctx.scenario.params.get("bounds_V", {}) or {}
    return {name: (float(lo), float(hi)) for name, (lo, hi) in raw.items()}


def _potential_map(ctx: RunContext) -> List[str]:
    plane = ctx.get("plane", "xy")
    n = int(ctx.get("points", 81))
    xs = np.linspace(*ctx.get("x_range", required=True), n)
    if plane == "xy":
        ys = np.linspace(*ctx.get("y_range", required=True), n)
        x, y = np.meshgrid(xs, ys, indexing="ij")
        grid = np.stack([x, y, np.full_like(x, ctx.get("height", required=True))], -1)
        labels = ("x_um", "y_um")
        second = 1
    elif plane == "xz":
        zs = np.linspace(*ctx.get("z_range", required=True), n)
        x, z = np.meshgrid(xs, zs, indexing="ij")
        grid = np.stack([x, np.full_like(x, ctx.get("y", 0.0)), z], -1)
        labels = ("x_um", "z_um")
        second = 2
    else:
        raise ConfigError(f"potential-map plane must be 'xy' or 'xz', got '{plane}'")
    psi = pseudo.pseudopotential(ctx.basis, ctx.drive, grid)
    total = pseudo.total_potential(ctx.basis, ctx.drive, grid)
    k = np.unravel_index(np.argmin(psi), psi.shape)
    minimum = [float(grid[k][0] / UM), float(grid[k][second] / UM)]
    rows = [
        (grid[i, j, 0] / UM, grid[i, j, second] / UM, psi[i, j] / EV, total[i, j] / EV)
        for i in range(n)
        for j in range(n)
    ]
    meta = ctx.metadata(pseudopotential_minimum_um=minimum)
    return [ctx.write("potential-map.csv", meta, labels + ("pseudopotential_eV", "total_eV"), rows)]


def _null_scan(ctx: RunContext) -> List[str]:
    drive = ctx.drive
    perturb = ctx.scenario.params.get("perturb")
    if perturb:
        factor = float(perturb.get("factor", 1.0)) * np.exp(1j * np.radians(float(perturb.get("phase_deg", 0.0))))
        drive = drive.perturbed(perturb["electrode"], factor)
    offset = float(ctx.get("reference_offset", 50 * UM))
    rf = drive.rf_vector(ctx.basis)

    def one(z):
        point = ctx.point(z)
        on_axis = np.linalg.norm(ctx.basis.electric_field(rf, point))
        reference = np.linalg.norm(ctx.basis.electric_field(rf, point + np.array([offset, 0.0, 0.0])))
        try:
            xy = pseudo.find_rf_null(ctx.basis, drive, z, guess=point[:2])
            _, g, _ = ctx.basis.field_terms(rf, np.array([xy[0], xy[1], z]))
            residual = float(np.linalg.norm(g[:2]))
        except NoNullError as exc:
            logger.warning("no rf null at %.1f um: %s", z / UM, exc)
            xy, residual = (np.nan, np.nan), exc.residual
        return (z / UM, xy[0] / UM, xy[1] / UM, residual, on_axis, on_axis / reference)

    rows = parallel_map(one, ctx.linspace("heights"), ctx.threads)
    columns = ("height_um", "null_x_um", "null_y_um", "residual_V_per_m", "axis_field_V_per_m", "axis_ratio")
    return [ctx.write("null-scan.csv", ctx.metadata(), columns, rows)]


def _modes(ctx: RunContext) -> List[str]:
    point = ctx.point(ctx.get("height", required=True))
    drive = ctx.drive
    dc = _dc_for_point(ctx, point)
    if dc is not None:
        drive = drive.with_dc(dc.voltages)
    solution = pseudo.mode_analysis(ctx.basis, drive, point, with_depth=True)
    rows = []
    for i, label in enumerate(("x", "y", "z")):
        axis = solution.principal_axes[:, i]
        rows.append(
            (
                label,
                solution.frequencies[i] / (2 * np.pi * 1e6),
                solution.mathieu_q[i],
                solution.mathieu_a[i],
                solution.depths[i] / EV,
                *axis,
            )
        )
    meta = ctx.metadata(
        equilibrium_um=(point / UM).tolist(),
        vertical_tilt_deg=float(np.degrees(solution.vertical_tilt)),
        planar_splitting=solution.planar_splitting,
        warnings=solution.warnings,
        dc_voltages_V=None if dc is None else dc.voltages,
    )
    columns = ("axis", "frequency_MHz", "mathieu_q", "mathieu_a", "depth_eV", "ex", "ey", "ez")
    return [ctx.write("modes.csv", meta, columns, rows)]


def _rf_power_curve(ctx: RunContext) -> List[str]:
    heights = ctx.linspace("heights")
    target = ctx.get("target", required=True)
    tilts = [np.radians(t) for t in ctx.scenario.params.get("tilts_deg", [0.0])]
    vertical = ctx.get("vertical")
    splitting = float(ctx.get("splitting", 0.0))
    plane = ctx.get("plane", "xz")

    def one(z):
        return [
            pseudo.rf_amplitude_for_target(ctx.basis, ctx.drive, z, target, t, vertical, splitting, plane)
            for t in tilts
        ]

    voltages = parallel_map(one, heights, ctx.threads)
    if len(tilts) == 1:
        columns = ("height_um", "V_required")
    else:
        columns = ("height_um",) + tuple(f"V_required_{np.degrees(t):g}deg" for t in tilts)
    rows = [(z / UM, *v) for z, v in zip(heights, voltages)]
    minima = {f"{np.degrees(t):g}deg": float(heights[int(np.argmin([v[k] for v in voltages]))] / UM) for k, t in enumerate(tilts)}
    return [ctx.write("rf-power-curve.csv", ctx.metadata(minimum_height_um=minima), columns, rows)]


def _dc_solve(ctx: RunContext) -> List[str]:
    point = ctx.point(ctx.get("height", required=True))
    dc = _dc_for_point(ctx, point)
    if dc is None:
        raise ConfigError("dc-solve needs planar_MHz or vertical_MHz")
    drive = ctx.drive.with_dc(dc.voltages)
    extra: Dict[str, Any] = {
        "residual": dc.residual,
        "attained": dc.attained,
        "clipped": dc.clipped,
    }
    solution = pseudo.mode_analysis(ctx.basis, drive, point)
    extra["frequencies_MHz"] = (solution.frequencies / (2 * np.pi * 1e6)).tolist()
    extra["planar_splitting"] = solution.planar_splitting
    extra["vertical_tilt_deg"] = float(np.degrees(solution.vertical_tilt))
    if not np.any(ctx.get("stray_field", np.zeros(3))):
        extra["equilibrium_height_um"] = dcsolve.equilibrium_on_null(ctx.basis, drive) / UM
    return [ctx.write("dc-solve.csv", ctx.metadata(**extra), ("electrode", "voltage_V"), dc.to_rows())]


def _probe(ctx: RunContext) -> ProbeGeometry:
    return ProbeGeometry.along(ctx.get("probe_direction", (0.0, 0.0, 1.0)))


def _circuit_sweep(ctx: RunContext) -> List[str]:
    if ctx.scenario.netlist_path:
        net = ResonatorNetwork.from_dict(load_json(ctx.scenario.netlist_path))
    else:
        net = ResonatorNetwork()
    point = ctx.point(ctx.get("height", required=True))
    probe = _probe(ctx)
    arm = ctx.get("arm", "+")
    extra: Dict[str, Any] = {}
    if "target_beta" in ctx.params:
        fit = circuit.fit_arm_asymmetry(
            net,
            ctx.basis,
            ctx.drive,
            point,
            probe,
            float(ctx.params["target_beta"]),
            arm,
            float(ctx.get("matched_cv", 3e-12)),
        )
        net = fit.network
        extra.update(fit.to_dict())
    points = circuit.beta_vs_resonance(net, ctx.basis, ctx.drive, point, probe, ctx.linspace("cv_range"), arm, ctx.threads)
    best = min(points, key=lambda p: p.beta)
    _, _, r2 = circuit.linear_fit([p.resonance for p in points], [p.signed_beta for p in points])
    extra.update(
        matched_cv_pF=best.cv * 1e12,
        minimum_beta=best.beta,
        signed_beta_r2=r2,
        network=net.to_dict(),
    )
    return [ctx.write("circuit-sweep.csv", ctx.metadata(**extra), circuit.BETA_COLUMNS, [p.row() for p in points])]


def _beta(ctx: RunContext) -> List[str]:
    betas = [float(b) for b in ctx.get("betas", [])]
    betas += [dynamics.sideband_ratio_to_beta(float(r)) for r in ctx.get("ratios", [])]
    rows = []
    for b in betas:
        ratio = dynamics.beta_to_sideband_ratio(b)
        rows.append((b, ratio, dynamics.small_beta(ratio)))
    extra: Dict[str, Any] = {}
    if "height" in ctx.params:
        drive = ctx.drive
        perturb = ctx.scenario.params.get("perturb")
        if perturb:
            factor = float(perturb.get("factor", 1.0)) * np.exp(1j * np.radians(float(perturb.get("phase_deg", 0.0))))
            drive = drive.perturbed(perturb["electrode"], factor)
        e_res = pseudo.rf_field(ctx.basis, drive, ctx.point(ctx.params["height"]))
        trap_beta = dynamics.modulation_index(e_res, drive, _probe(ctx))
        extra["trap_beta"] = trap_beta
        extra["residual_field_V_per_m"] = float(np.linalg.norm(e_res))
        rows.append((trap_beta, dynamics.beta_to_sideband_ratio(trap_beta), dynamics.small_beta(dynamics.beta_to_sideband_ratio(trap_beta))))
    return [ctx.write("beta.csv", ctx.metadata(**extra), ("beta", "sideband_ratio", "small_beta_approx"), rows)]


def _trajectory(ctx: RunContext) -> List[str]:
    point = ctx.point(ctx.get("height", required=True))
    drive = ctx.drive
    dc = _dc_for_point(ctx, point)
    if dc is not None:
        drive = drive.with_dc(dc.voltages)
    start = point + np.asarray(ctx.get("displacement", np.zeros(3)), dtype=float)
    velocity = np.asarray(ctx.get("velocity", np.zeros(3)), dtype=float)
    method = ctx.get("method", "DOP853")
    kwargs = {"samples": int(ctx.get("samples", 4001)), "method": method, "rtol": float(ctx.get("rtol", 1e-10))}
    if "step" in ctx.params:
        kwargs["step"] = ctx.params["step"]
    traj = dynamics.integrate_motion(ctx.basis, drive, start, velocity, ctx.get("duration", required=True), **kwargs)
    predicted = pseudo.mode_analysis(ctx.basis, drive, point)
    observed = [dynamics.dominant_frequency(traj.times, traj.coordinate(i), (0.0, 0.5 * drive.rf_frequency)) for i in range(3)]
    meta = ctx.metadata(
        predicted_MHz=(predicted.frequencies / (2 * np.pi * 1e6)).tolist(),
        dominant_MHz=[w / (2 * np.pi * 1e6) for w in observed],
        **traj.metadata(),
    )
    return [ctx.write("trajectory.csv", meta, TRAJECTORY_COLUMNS, traj.rows())]


def _thermometry_entries(ctx: RunContext) -> List[Dict[str, Any]]:
    """One dict per thermal state: ``nbar`` plus optional probe, mode axis and mode frequency overrides."""
    entries = ctx.get("entries")
    if entries is None:
        return [{"nbar": float(n)} for n in ctx.get("nbars", [0.2])]
    if not isinstance(entries, list) or not all(isinstance(e, dict) and "nbar" in e for e in entries):
        raise ConfigError("thermometry: 'entries' must be a list of objects with an 'nbar'")
    return [parse_quantities(e, UNITLESS) for e in entries]


def _entry_scan(ctx: RunContext, entry: Dict[str, Any]):
    mode = entry.get("mode", ctx.get("mode", 2 * np.pi * 1e6))
    probe = ProbeGeometry.along(entry.get("probe_direction", ctx.get("probe_direction", (0.0, 0.0, 1.0))))
    axis = entry.get("mode_axis", ctx.get("mode_axis", (0.0, 0.0, 1.0)))
    eta = entry.get("eta") or ctx.get("eta") or thermo.lamb_dicke(probe, axis, ctx.ion, mode)
    if not eta > 0:
        raise ConfigError(f"thermometry: probe {probe.direction.tolist()} does not couple to mode axis {list(axis)}")
    return thermo.default_scan(
        mode, eta, ctx.get("rabi", 2 * np.pi * 100e3), int(ctx.get("points", 21)), int(ctx.get("shots", 100))
    )


def _thermometry(ctx: RunContext) -> List[str]:
    entries = _thermometry_entries(ctx)
    seeds = np.random.SeedSequence(ctx.scenario.seed).generate_state(len(entries))
    exact = bool(ctx.get("exact", False))
    scan_rows, estimate_rows, scans = [], [], []
    for entry, seed in zip(entries, seeds):
        nbar = float(entry["nbar"])
        scan = _entry_scan(ctx, entry)
        scans.append({"nbar_true": nbar, **scan.to_dict()})
        data = thermo.synthesize_scan(scan, nbar, int(seed), exact=exact)
        estimate = thermo.estimate_nbar(data)
        joint = thermo.estimate_nbar_lineshape(scan, data, exact)
        scan_rows += [(nbar, *row) for row in data.rows()]
        estimate_rows.append(
            (nbar, estimate.nbar, estimate.sigma, estimate.ratio, joint.nbar, joint.sigma, estimate.ground_state_probability)
        )
    meta = ctx.metadata(scans=scans)
    return [
        ctx.write("thermometry-scans.csv", meta, ("nbar_true",) + SCAN_COLUMNS, scan_rows),
        ctx.write(
            "thermometry.csv",
            meta,
            ("nbar_true", "nbar", "sigma", "ratio", "lineshape_nbar", "lineshape_sigma", "ground_state_probability"),
            estimate_rows,
        ),
    ]


COMMANDS: Dict[str, Callable[[RunContext], List[str]]] = {
    "potential-map": _potential_map,
    "null-scan": _null_scan,
    "modes": _modes,
    "rf-power-curve": _rf_power_curve,
    "dc-solve": _dc_solve,
    "circuit-sweep": _circuit_sweep,
    "beta": _beta,
    "trajectory": _trajectory,
    "thermometry": _thermometry,
}


def run(scenario: Scenario, out_dir: Optional[str] = None, threads: int = 1, seed: Optional[int] = None) -> List[str]:
    """Run one scenario; returns the written file paths."""
    if seed is not None:
        scenario.seed = seed
    scenario.validate()
    layout = load_layout(scenario.layout_path)
    report = validate(layout)
    if not report.ok:
        raise ConfigError(f"invalid layout {scenario.layout_path}:\n{report}")
    unitless = UNITLESS | {"plane", "arm", "method", "configuration"}
    params = parse_quantities({k: v for k, v in scenario.params.items() if k not in ("bounds_V", "perturb", "tilts_deg")}, unitless)
    out = out_dir or scenario.output_dir
    os.makedirs(out, exist_ok=True)
    ctx = RunContext(
        scenario,
        layout,
        FieldBasis(layout, cache=True),
        scenario.drive or {},
        params,
        out,
        max(1, threads),
    )
    logger.info("running %s (seed %d)", scenario.command, scenario.seed)
    return COMMANDS[scenario.command](ctx)


def emit_figure_data(figure: str, out_root: str = "results", threads: int = 1, seed: Optional[int] = None) -> List[str]:
    """Run the checked-in scenario for a figure into ``<out_root>/fig_<id>``."""
    scenario = load_scenario(figure_scenario_path(figure))
    return run(scenario, os.path.join(out_root, f"fig_{figure}"), threads, seed)
