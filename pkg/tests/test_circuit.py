import os
import unittest

import numpy as np

import circuit
from models.exceptions import CircuitSolveError, ConfigError
from models.motion import ProbeGeometry
from models.resonator import ArmComponents, ResonatorNetwork, Transformer
from models.scenario import DATA_DIR
from tests.fixtures import BASIS, axis_point, matched_drive
from utils.io import load_json

NET = ResonatorNetwork()
PROBE = ProbeGeometry.vertical()
POINT = axis_point(200)


def _close(a, b, rel=1e-9):
    return abs(a - b) <= rel * max(abs(a), abs(b))


class TestNetwork(unittest.TestCase):
    def setUp(self):
        self.w_r = circuit.drive_resonance(NET)

    def test_resonance_near_drive_frequency(self):
        self.assertAlmostEqual(self.w_r / (2 * np.pi * 18.1e6), 1.0, delta=0.01)

    def test_loaded_q(self):
        self.assertAlmostEqual(circuit.differential_q(NET), 200.0, delta=20.0)

    def test_symmetric_arms_are_antiphase(self):
        m = circuit.mismatch(NET, self.w_r)
        self.assertAlmostEqual(m.amplitude_ratio, 1.0, places=10)
        self.assertAlmostEqual(m.phase_error, 0.0, places=10)
        self.assertLess(abs(m.common_mode), 1e-9)

    def test_divider_ratio(self):
        r = circuit.solve_network(NET, self.w_r)
        self.assertAlmostEqual(NET.plus.divider_ratio, 2.0 / 102.0)
        self.assertAlmostEqual(abs(r.plus.pickoff_ratio) / (2.0 / 102.0), 1.0, delta=1e-3)

    def test_pickoff_tracks_electrodes(self):
        net = NET.with_arm("+", cv=5.5e-12)
        w = circuit.drive_resonance(net)
        at_electrode = circuit.mismatch(net, w)
        at_pickoff = circuit.mismatch(net, w, pickoff=True)
        self.assertAlmostEqual(at_pickoff.amplitude_ratio / at_electrode.amplitude_ratio, 1.0, delta=0.01)
        self.assertAlmostEqual(at_pickoff.phase_error, at_electrode.phase_error, delta=0.01 * abs(at_electrode.phase_error) + 1e-6)

    def test_swapping_arms_mirrors_mismatch(self):
        net = NET.with_arm("+", cv=6e-12)
        w = circuit.drive_resonance(net)
        m = circuit.mismatch(net, w)
        s = circuit.mismatch(net.swapped(), w)
        self.assertNotAlmostEqual(m.phase_error, 0.0, places=4)
        self.assertAlmostEqual(s.phase_error, -m.phase_error, places=9)
        self.assertAlmostEqual(s.amplitude_ratio * m.amplitude_ratio, 1.0, places=9)

    def test_loss_imbalance_is_quadrature(self):
        net = NET.with_arm("+", r_loss=1.5)
        w = circuit.drive_resonance(net)
        m = circuit.mismatch(net, w)
        self.assertGreater(abs(m.phase_error), 1e-4)
        self.assertAlmostEqual(circuit.mismatch(net.swapped(), w).phase_error, -m.phase_error, places=9)
        # a trimmer change leaves a loss-induced common mode in place
        best = min(
            abs(circuit.mismatch(n, circuit.drive_resonance(n)).common_mode)
            for n in (net.with_arm("+", cv=cv * 1e-12) for cv in np.linspace(4.0, 6.0, 21))
        )
        self.assertGreater(best, 1e-6)

    def test_phase_error_wrapped(self):
        for cv in (2e-12, 7e-12):
            net = NET.with_arm("-", cv=cv)
            m = circuit.mismatch(net, circuit.drive_resonance(net))
            self.assertTrue(-np.pi < m.phase_error <= np.pi)

    def test_common_mode_grows_with_detuning(self):
        commons = []
        for cv in (5.0, 5.5, 6.0, 6.5):
            net = NET.with_arm("+", cv=cv * 1e-12)
            commons.append(abs(circuit.mismatch(net, circuit.drive_resonance(net)).common_mode))
        self.assertTrue(np.all(np.diff(commons) > 0))

    def test_passive(self):
        net = NET.with_arm("+", cv=3e-12)
        for w in np.linspace(0.8, 1.2, 41) * self.w_r:
            self.assertGreaterEqual(circuit.solve_network(net, w).source_power, -1e-15)
        self.assertGreater(circuit.solve_network(net, self.w_r).source_power, 0.0)

    def test_characterize_fills_arms(self):
        r = circuit.solve_network(NET, self.w_r, characterize=True)
        for arm in (r.plus, r.minus):
            self.assertAlmostEqual(arm.resonance / self.w_r, 1.0, delta=1e-3)
            self.assertGreater(arm.loaded_q, 100.0)

    def test_bad_frequency(self):
        with self.assertRaises(CircuitSolveError):
            circuit.solve_network(NET, 0.0)

    def test_trimmer_range_warning(self):
        with self.assertLogs("circuit", level="WARNING") as logs:
            circuit._check_trimmer(NET.with_arm("-", cv=8e-12))
        self.assertIn("CV-", logs.output[0])


class TestNetlist(unittest.TestCase):
    def test_round_trip(self):
        net = NET.with_arm("+", cv=3.3e-12, c_trap=71.8e-12)
        back = ResonatorNetwork.from_dict(net.to_dict())
        for which in ("+", "-"):
            for name, value in vars(net.arm(which)).items():
                self.assertTrue(_close(getattr(back.arm(which), name), value), name)
        self.assertTrue(_close(back.transformer.l_sec, net.transformer.l_sec))
        self.assertEqual(back.transformer.coupling, net.transformer.coupling)

    def test_checked_in_netlist_is_nominal(self):
        net = ResonatorNetwork.from_dict(load_json(os.path.join(DATA_DIR, "resonator_netlist.json")))
        self.assertTrue(_close(net.plus.c_trap, 70e-12))
        self.assertTrue(_close(net.minus.cv, 5e-12))
        self.assertEqual((net.plus.r_loss, net.minus.r_loss), (0.593, 0.593))

    def test_loss_belongs_to_arms(self):
        with self.assertRaises(ConfigError):
            ResonatorNetwork.from_dict({"transformer": {"r_loss_ohm": 0.6}})
        net = ResonatorNetwork.from_dict({"components": [{"name": "R_loss", "arm": "-", "value_ohm": 1.2}]})
        self.assertEqual((net.plus.r_loss, net.minus.r_loss), (0.593, 1.2))

    def test_unknown_component(self):
        with self.assertRaises(ConfigError):
            ResonatorNetwork.from_dict({"components": [{"name": "C9", "arm": "+", "value_pF": 1.0}]})

    def test_invalid_values(self):
        with self.assertRaises(ConfigError):
            ArmComponents(cv=-1e-12)
        with self.assertRaises(ConfigError):
            ArmComponents(r_loss=-0.1)
        self.assertEqual(ArmComponents(r_loss=0.0).r_loss, 0.0)
        with self.assertRaises(ConfigError):
            Transformer(coupling=1.0)
        with self.assertRaises(ConfigError):
            NET.arm("x")


class TestBeta(unittest.TestCase):
    def test_matched_network_has_no_micromotion(self):
        beta, signed, drive = circuit.beta_at(NET, BASIS, matched_drive(), POINT, PROBE)
        self.assertLess(beta, 1e-6)
        self.assertAlmostEqual(drive.amplitude / 100.0, 1.0, delta=1e-6)

    def test_minimum_at_matched_trimmer(self):
        cvs = np.linspace(4e-12, 6e-12, 9)
        points = circuit.beta_vs_resonance(NET, BASIS, matched_drive(), POINT, PROBE, cvs)
        self.assertEqual(int(np.argmin([p.beta for p in points])), 4)
        self.assertEqual(len(points[0].row()), len(circuit.BETA_COLUMNS))

    def test_signed_beta_linear_near_match(self):
        cvs = np.linspace(4.8e-12, 5.2e-12, 9)
        points = circuit.beta_vs_resonance(NET, BASIS, matched_drive(), POINT, PROBE, cvs, threads=2)
        resonances = [p.resonance for p in points]
        detuning = (max(resonances) - min(resonances)) / np.mean(resonances)
        self.assertLess(detuning, 0.01)
        _, _, r2 = circuit.linear_fit(resonances, [p.signed_beta for p in points])
        self.assertGreater(r2, 0.99)

    def test_fitted_asymmetry_gives_contrast(self):
        fit = circuit.fit_arm_asymmetry(NET, BASIS, matched_drive(), POINT, PROBE, target_beta=1.5)
        self.assertAlmostEqual(fit.c_trap_delta * 1e12, 2.0, places=9)
        self.assertTrue(0.0 < fit.coupling < 0.5)
        net = fit.network
        self.assertAlmostEqual(net.transformer.differential_inductance / NET.transformer.differential_inductance, 1.0)
        self.assertAlmostEqual(circuit.beta_at(net, BASIS, matched_drive(), POINT, PROBE)[0], 1.5, places=6)
        cvs = np.linspace(2e-12, 7e-12, 41)
        points = circuit.beta_vs_resonance(net, BASIS, matched_drive(), POINT, PROBE, cvs)
        betas = [p.beta for p in points]
        best = int(np.argmin(betas))
        self.assertTrue(0 < best < len(cvs) - 1)
        self.assertAlmostEqual(points[best].cv, fit.matched_cv, delta=1e-18)
        self.assertGreaterEqual(max(betas), 1.0)
        self.assertLessEqual(min(betas), 0.1)

    def test_fitted_network_keeps_resonance(self):
        fit = circuit.fit_arm_asymmetry(NET, BASIS, matched_drive(), POINT, PROBE, target_beta=1.5)
        rematched = fit.network.with_arm("+", cv=fit.matched_cv)
        self.assertAlmostEqual(circuit.drive_resonance(rematched) / circuit.drive_resonance(NET), 1.0, delta=1e-3)
        self.assertAlmostEqual(circuit.differential_q(rematched), 200.0, delta=20.0)

    def test_fit_rejects_matched_trimmer_out_of_range(self):
        with self.assertRaises(ConfigError):
            circuit.fit_arm_asymmetry(NET, BASIS, matched_drive(), POINT, PROBE, matched_cv=8e-12)

    def test_linear_fit(self):
        slope, intercept, r2 = circuit.linear_fit([0, 1, 2, 3], [1, 3, 5, 7])
        self.assertAlmostEqual(slope, 2.0)
        self.assertAlmostEqual(intercept, 1.0)
        self.assertAlmostEqual(r2, 1.0)


if __name__ == "__main__":
    unittest.main()
