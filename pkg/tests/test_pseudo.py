import unittest

import numpy as np
from scipy import optimize

import pseudo
from dcsolve import confinement_target, solve_dc
from models.drive import DriveConfig
from models.exceptions import (
    ConfigError,
    NoNullError,
    NonStationaryPointError,
    TargetUnreachableError,
    UnstableModeError,
)
from tests.fixtures import BASIS, LAYOUT, MHZ, RF_FREQUENCY, axis_point, matched_drive
from utils.units import UM


def _dc_confined(drive, height_um=100.0, vertical=1.2 * MHZ):
    point = axis_point(height_um)
    c = drive.ion.mass * vertical ** 2 / drive.ion.charge
    dc = solve_dc(BASIS, confinement_target(point, c))
    return drive.with_dc(dc.voltages), point


class TestPseudopotential(unittest.TestCase):
    def test_ponderomotive_formula(self):
        drive = matched_drive()
        point = (25 * UM, -40 * UM, 90 * UM)
        e = pseudo.rf_field(BASIS, drive, point)
        ion = drive.ion
        expected = ion.charge ** 2 * np.sum(np.abs(e) ** 2) / (4 * ion.mass * drive.rf_frequency ** 2)
        self.assertAlmostEqual(float(pseudo.pseudopotential(BASIS, drive, point)) / expected, 1.0, places=12)

    def test_one_kilovolt_per_meter(self):
        # 40Ca+ at 18.1 MHz
        factor = pseudo._ponderomotive_factor(matched_drive())
        self.assertAlmostEqual(factor * 1e6 / 7.48e-24, 1.0, places=2)

    def test_vanishes_on_axis(self):
        drive = matched_drive()
        off_axis = float(pseudo.pseudopotential(BASIS, drive, (10 * UM, 0.0, 100 * UM)))
        on_axis = float(pseudo.pseudopotential(BASIS, drive, axis_point(100)))
        self.assertLess(on_axis, 1e-18 * off_axis)

    def test_quadratic_in_amplitude(self):
        point = (10 * UM, 5 * UM, 80 * UM)
        base = float(pseudo.pseudopotential(BASIS, matched_drive(50.0), point))
        doubled = float(pseudo.pseudopotential(BASIS, matched_drive(100.0), point))
        self.assertAlmostEqual(doubled / base, 4.0, places=10)

    def test_gradient_against_differences(self):
        drive = matched_drive()
        p = np.array([20.0, -10.0, 100.0]) * UM
        h = 5e-8
        numeric = [
            (pseudo.pseudopotential(BASIS, drive, p + h * e) - pseudo.pseudopotential(BASIS, drive, p - h * e)) / (2 * h)
            for e in np.eye(3)
        ]
        np.testing.assert_allclose(pseudo.pseudo_gradient(BASIS, drive, p), numeric, rtol=1e-5)

    def test_hessian_against_differences(self):
        drive = matched_drive()
        p = np.array([20.0, -10.0, 100.0]) * UM
        h = 1e-7
        analytic = pseudo.pseudo_hessian(BASIS, drive, p)
        numeric = np.array(
            [
                (pseudo.pseudo_gradient(BASIS, drive, p + h * e) - pseudo.pseudo_gradient(BASIS, drive, p - h * e))
                / (2 * h)
                for e in np.eye(3)
            ]
        )
        self.assertLess(np.abs(analytic - numeric).max(), 1e-5 * np.abs(analytic).max())


class TestRfNull(unittest.TestCase):
    def test_symmetric_null_at_origin(self):
        xy = pseudo.find_rf_null(BASIS, matched_drive(), 100 * UM, guess=(20 * UM, -10 * UM))
        self.assertLess(np.hypot(*xy), 1e-9)

    def test_perturbed_null_follows_grid_minimum(self):
        drive = matched_drive().perturbed("rf_p1", 1.01)
        height = 100 * UM
        xy = pseudo.find_rf_null(BASIS, drive, height)
        self.assertGreater(np.hypot(*xy), 1e-8)

        step = 0.25 * UM
        ticks = np.arange(-80, 81) * step
        grid = np.stack(np.meshgrid(ticks, ticks, [height], indexing="ij"), axis=-1)[:, :, 0, :]
        e = pseudo.rf_field(BASIS, drive, grid)
        planar = np.sum(np.abs(e[..., :2]) ** 2, axis=-1)
        i, j = np.unravel_index(np.argmin(planar), planar.shape)
        brute = np.array([ticks[i], ticks[j]])
        self.assertLess(np.abs(brute - xy).max(), 1.5 * step)

    def test_phase_mismatch_has_no_null(self):
        drive = matched_drive().perturbed("rf_p1", np.exp(0.3j))
        with self.assertRaises(NoNullError) as ctx:
            pseudo.find_rf_null(BASIS, drive, 100 * UM)
        self.assertGreater(ctx.exception.residual, 1.0)

    def test_point_trap_null(self):
        drive = DriveConfig.point_trap(LAYOUT, 100.0, RF_FREQUENCY)
        vector = drive.rf_vector(BASIS)

        def minus_potential(z):
            return -float(BASIS.field_terms(vector, axis_point(z))[0].real)

        peak = optimize.minimize_scalar(minus_potential, bounds=(20.0, 800.0), method="bounded", options={"xatol": 1e-6})
        found = pseudo.find_point_null(BASIS, drive, (3 * UM, -2 * UM, (peak.x + 10.0) * UM))
        self.assertLess(np.hypot(found[0], found[1]), 1e-9)
        self.assertAlmostEqual(found[2] / UM, peak.x, delta=0.05)


class TestModeAnalysis(unittest.TestCase):
    def test_frequency_linear_in_amplitude(self):
        low = pseudo.mode_analysis(BASIS, matched_drive(50.0), axis_point(100))
        high = pseudo.mode_analysis(BASIS, matched_drive(100.0), axis_point(100))
        self.assertAlmostEqual(high.planar_frequency / low.planar_frequency, 2.0, places=9)

    def test_adiabatic_relation_to_mathieu_q(self):
        solution = pseudo.mode_analysis(BASIS, matched_drive(), axis_point(100))
        for i in range(2):
            expected = solution.mathieu_q[i] * RF_FREQUENCY / (2 * np.sqrt(2))
            self.assertAlmostEqual(solution.frequencies[i] / expected, 1.0, places=9)
        self.assertTrue(all(abs(q) < 0.908 for q in solution.mathieu_q))

    def test_pure_rf_on_axis_at_every_height(self):
        for h in np.linspace(50, 300, 26):
            solution = pseudo.mode_analysis(BASIS, matched_drive(), axis_point(h))
            self.assertEqual(solution.unstable_axes, ["z"])
            self.assertGreater(solution.planar_frequency, 0.0)

    def test_frequency_per_volt_constant_over_a_decade(self):
        ratios = [
            pseudo.mode_analysis(BASIS, matched_drive(v), axis_point(150)).planar_frequency / v
            for v in (10.0, 31.6, 100.0)
        ]
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-6)

    def test_pure_rf_has_no_vertical_confinement(self):
        solution = pseudo.mode_analysis(BASIS, matched_drive(), axis_point(100))
        self.assertIn("z", solution.unstable_axes)
        self.assertTrue(any("unstable axis z" in w for w in solution.warnings))
        with self.assertRaises(UnstableModeError):
            pseudo.mode_analysis(BASIS, matched_drive(), axis_point(100), require_stable=True)

    def test_vertical_frequency_from_dc_quadrupole(self):
        drive, point = _dc_confined(matched_drive())
        solution = pseudo.mode_analysis(BASIS, drive, point, require_stable=True)
        self.assertAlmostEqual(solution.vertical_frequency / (1.2 * MHZ), 1.0, places=6)
        np.testing.assert_allclose(np.abs(solution.principal_axes[:, 2]), [0.0, 0.0, 1.0], atol=1e-6)
        self.assertAlmostEqual(solution.vertical_tilt, 0.0, places=6)

    def test_depths_positive_in_plane(self):
        drive, point = _dc_confined(matched_drive())
        solution = pseudo.mode_analysis(BASIS, drive, point, with_depth=True)
        self.assertEqual(solution.depths.shape, (3,))
        self.assertTrue(np.all(solution.depths[:2] > 0))

    def test_off_null_point_rejected(self):
        with self.assertRaises(NonStationaryPointError):
            pseudo.mode_analysis(BASIS, matched_drive(), (20 * UM, 0.0, 100 * UM))

    def test_large_q_flagged(self):
        point = axis_point(100)
        reference = pseudo.mode_analysis(BASIS, matched_drive(), point).mathieu_q[0]
        strong = matched_drive(100.0 * 1.0 / reference)
        with self.assertLogs("pseudo", level="WARNING") as logs:
            solution = pseudo.mode_analysis(BASIS, strong, point)
        self.assertAlmostEqual(solution.mathieu_q[0], 1.0, places=6)
        self.assertTrue(any("0.908" in w for w in solution.warnings))
        self.assertTrue(any("0.908" in line for line in logs.output))

    def test_mathieu_region(self):
        self.assertTrue(pseudo.mathieu_stable(0.0, 0.5))
        self.assertFalse(pseudo.mathieu_stable(0.0, 0.95))
        self.assertFalse(pseudo.mathieu_stable(-0.1, 0.1))

    def test_to_dict(self):
        record = pseudo.mode_analysis(BASIS, matched_drive(), axis_point(100)).to_dict()
        self.assertEqual(len(record["frequencies_MHz"]), 3)
        self.assertAlmostEqual(record["equilibrium_um"][2], 100.0)


class TestRfAmplitude(unittest.TestCase):
    def test_reaches_target(self):
        drive = matched_drive()
        v = pseudo.rf_amplitude_for_target(BASIS, drive, 100 * UM, 1.0 * MHZ)
        solution = pseudo.mode_analysis(BASIS, drive.scaled(v / drive.amplitude), axis_point(100))
        self.assertAlmostEqual(solution.planar_frequency / MHZ, 1.0, places=8)

    def test_doubling_target_doubles_voltage(self):
        drive = matched_drive()
        v1 = pseudo.rf_amplitude_for_target(BASIS, drive, 120 * UM, 1.0 * MHZ)
        v2 = pseudo.rf_amplitude_for_target(BASIS, drive, 120 * UM, 2.0 * MHZ)
        self.assertAlmostEqual(v2 / v1, 2.0, places=8)

    def test_minimum_height(self):
        heights = np.arange(50, 301, 10)
        volts = [pseudo.rf_amplitude_for_target(BASIS, matched_drive(), h * UM, 1.0 * MHZ) for h in heights]
        best = int(np.argmin(volts))
        self.assertTrue(0 < best < len(heights) - 1)
        self.assertLessEqual(abs(heights[best] - 110), 20)
        self.assertTrue(np.all(np.diff(volts[: best + 1]) < 0))
        self.assertTrue(np.all(np.diff(volts[best:]) > 0))

    def test_tilted_curve_needs_more_voltage(self):
        for h in (60.0, 120.0, 250.0):
            flat = pseudo.rf_amplitude_for_target(
                BASIS, matched_drive(), h * UM, 1.0 * MHZ, vertical_frequency=1.2 * MHZ
            )
            tilted = pseudo.rf_amplitude_for_target(
                BASIS, matched_drive(), h * UM, 1.0 * MHZ, tilt=np.radians(4.0), vertical_frequency=1.2 * MHZ
            )
            self.assertGreaterEqual(tilted, flat)

    def test_unreachable(self):
        with self.assertRaises(TargetUnreachableError):
            pseudo.rf_amplitude_for_target(BASIS, matched_drive(), 100 * UM, 1.0 * MHZ, v_max=1.0)

    def test_bad_inputs(self):
        with self.assertRaises(ConfigError):
            pseudo.rf_amplitude_for_target(BASIS, matched_drive(), 100 * UM, -1.0)
        with self.assertRaises(ConfigError):
            pseudo.rf_amplitude_for_target(BASIS, matched_drive(), 100 * UM, MHZ, tilt=np.radians(12.0))
        with self.assertRaises(ConfigError):
            pseudo.rf_amplitude_for_target(BASIS, matched_drive(), 100 * UM, MHZ, tilt=np.radians(2.0))


if __name__ == "__main__":
    unittest.main()
