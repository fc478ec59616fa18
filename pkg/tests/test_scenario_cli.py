import contextlib
import io
import json
import os
import tempfile
import unittest
from unittest import mock

import numpy as np

import cli
from models.exceptions import ConfigError
from models.scenario import DEFAULT_LAYOUT, LAYOUT_ENV, Scenario, default_layout_path, figure_scenario_path
from scenario import build_drive, emit_figure_data, load_scenario, run
from tests.fixtures import LAYOUT
from utils.io import read_table

DRIVE = {"rf_frequency_MHz": 18.1, "rf_amplitude_V": 100.0}


class ScenarioCase(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = self._tmp.name

    def tearDown(self):
        self._tmp.cleanup()

    def scenario_file(self, command, params, drive=DRIVE, **extra):
        path = os.path.join(self.tmp, f"{command}.json")
        data = {"command": command, "layout": DEFAULT_LAYOUT, "drive": drive, "params": params, **extra}
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f)
        return path

    def run_cli(self, *argv):
        err = io.StringIO()
        out = io.StringIO()
        with contextlib.redirect_stderr(err), contextlib.redirect_stdout(out):
            code = cli.main(list(argv))
        return code, out.getvalue(), err.getvalue()


class TestScenarioModel(ScenarioCase):
    def test_relative_paths_resolve_against_file(self):
        path = os.path.join(self.tmp, "s.json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"command": "beta", "layout": "layout.json", "params": {"betas": [0.1]}}, f)
        scenario = load_scenario(path)
        self.assertEqual(scenario.layout_path, os.path.join(self.tmp, "layout.json"))
        with self.assertRaises(ConfigError):
            scenario.validate()

    def test_unknown_command(self):
        with self.assertRaises(ConfigError):
            Scenario("sweep-everything", DEFAULT_LAYOUT).validate()

    def test_missing_command(self):
        with self.assertRaises(ConfigError):
            Scenario.from_dict({"params": {}})

    def test_layout_from_environment(self):
        with mock.patch.dict(os.environ, {LAYOUT_ENV: "/tmp/other.json"}):
            self.assertEqual(default_layout_path(), "/tmp/other.json")
        with mock.patch.dict(os.environ, {LAYOUT_ENV: ""}):
            self.assertEqual(default_layout_path(), DEFAULT_LAYOUT)

    def test_unknown_figure(self):
        with self.assertRaises(ConfigError):
            figure_scenario_path("9z")

    def test_build_drive(self):
        drive = build_drive(LAYOUT, {"rf_frequency_MHz": 18.1, "rf_amplitude_V": 50.0, "dc_voltages_V": {"dc_c": -1.0}})
        self.assertAlmostEqual(drive.amplitude, 50.0)
        self.assertEqual(drive.dc_voltages, {"dc_c": -1.0})
        point = build_drive(LAYOUT, {"rf_frequency_MHz": 18.1, "configuration": "point_trap"})
        self.assertTrue(all(v == 1.0 for v in point.rf_amplitudes.values()))
        with self.assertRaises(ConfigError):
            build_drive(LAYOUT, {"rf_amplitude_V": 1.0})
        with self.assertRaises(ConfigError):
            build_drive(LAYOUT, {"rf_frequency_MHz": 18.1, "configuration": "ring"})


class TestCommands(ScenarioCase):
    def test_potential_map_minimum_at_center(self):
        params = {"plane": "xy", "height_um": 175.0, "x_range_um": [-300, 300], "y_range_um": [-300, 300], "points": 21}
        (path,) = run(load_scenario(self.scenario_file("potential-map", params)), self.tmp)
        meta, columns, rows = read_table(path)
        for coordinate in meta["pseudopotential_minimum_um"]:
            self.assertAlmostEqual(coordinate, 0.0, places=6)
        self.assertEqual(columns, ["x_um", "y_um", "pseudopotential_eV", "total_eV"])
        self.assertEqual(len(rows), 21 * 21)

    def test_potential_map_figures(self):
        for figure in ("1b", "1c"):
            (path,) = emit_figure_data(figure, self.tmp)
            self.assertTrue(path.endswith(os.path.join(f"fig_{figure}", "potential-map.csv")))
            meta, _, rows = read_table(path)
            self.assertEqual(len(rows), 61 * 61)
            self.assertAlmostEqual(meta["pseudopotential_minimum_um"][0], 0.0, places=6)

    def test_null_scan_with_perturbation(self):
        params = {"heights_um": [60, 200], "points": 5, "perturb": {"electrode": "rf_p1", "factor": 1.01}}
        (path,) = run(load_scenario(self.scenario_file("null-scan", params)), self.tmp, threads=2)
        _, columns, rows = read_table(path)
        self.assertEqual(len(rows), 5)
        self.assertTrue(all(float(r[1]) != 0.0 for r in rows))

    def test_modes_with_vertical_confinement(self):
        params = {"height_um": 100.0, "vertical_MHz": 1.2}
        (path,) = run(load_scenario(self.scenario_file("modes", params)), self.tmp)
        meta, _, rows = read_table(path)
        self.assertEqual([r[0] for r in rows], ["x", "y", "z"])
        self.assertAlmostEqual(float(rows[2][1]), 1.2, places=5)
        self.assertEqual(len(meta["dc_voltages_V"]), 9)

    def test_dc_solve(self):
        params = {"height_um": 100.0, "planar_MHz": 0.9, "splitting": 0.1}
        (path,) = run(load_scenario(self.scenario_file("dc-solve", params)), self.tmp)
        meta, columns, rows = read_table(path)
        self.assertEqual(columns, ["electrode", "voltage_V"])
        self.assertEqual(len(rows), 9)
        self.assertTrue(meta["attained"])
        self.assertAlmostEqual(meta["planar_splitting"], 0.1, delta=1e-3)

    def test_rf_power_curve_columns(self):
        params = {"heights_um": [50, 300], "points": 6, "target_MHz": 1.0, "tilts_deg": [0.0, 4.0], "vertical_MHz": 1.2}
        (path,) = run(load_scenario(self.scenario_file("rf-power-curve", params)), self.tmp)
        _, columns, rows = read_table(path)
        self.assertEqual(columns, ["height_um", "V_required_0deg", "V_required_4deg"])
        self.assertTrue(all(float(r[2]) >= float(r[1]) for r in rows))

    def test_beta_table(self):
        params = {"betas": [0.1, 1.5], "ratios": [0.0501]}
        (path,) = run(load_scenario(self.scenario_file("beta", params)), self.tmp)
        _, _, rows = read_table(path)
        self.assertEqual(len(rows), 3)
        self.assertAlmostEqual(float(rows[2][0]), 0.1, delta=1e-3)

    def test_circuit_sweep_figure_rematches_inside_trimmer_range(self):
        (path,) = emit_figure_data("3b", self.tmp)
        meta, _, rows = read_table(path)
        self.assertEqual(len(rows), 41)
        self.assertAlmostEqual(meta["fitted_asymmetry_pF"], 2.0, places=9)
        self.assertAlmostEqual(meta["matched_cv_pF"], meta["expected_matched_cv_pF"], places=9)
        self.assertTrue(2.0 < meta["matched_cv_pF"] < 7.0)
        self.assertLessEqual(meta["minimum_beta"], 0.1)
        self.assertAlmostEqual(meta["nominal_beta"], 1.5, places=6)
        self.assertGreaterEqual(max(float(r[4]) for r in rows), 1.0)

    def test_thermometry_outputs(self):
        written = emit_figure_data("4", self.tmp)
        self.assertEqual([os.path.basename(p) for p in written], ["thermometry-scans.csv", "thermometry.csv"])
        meta, _, rows = read_table(written[1])
        self.assertEqual(meta["seed"], 2024)
        self.assertEqual([float(r[0]) for r in rows], [0.17, 0.2])
        for row in rows:
            self.assertLess(abs(float(row[1]) - float(row[0])), 4 * float(row[2]) + 0.02)

    def test_thermometry_beam_per_entry(self):
        written = emit_figure_data("4", self.tmp)
        meta, _, _ = read_table(written[1])
        planar, vertical = meta["scans"]
        self.assertEqual([planar["nbar_true"], vertical["nbar_true"]], [0.17, 0.2])
        # 45 degree in-plane beam on the x mode
        self.assertAlmostEqual(planar["eta"] / vertical["eta"], np.sqrt(0.5), places=12)

    def test_thermometry_rejects_uncoupled_beam(self):
        entries = [{"nbar": 0.2, "probe_direction": [1.0, 0.0, 0.0], "mode_axis": [0.0, 0.0, 1.0]}]
        path = self.scenario_file("thermometry", {"entries": entries})
        with self.assertRaises(ConfigError):
            run(load_scenario(path), self.tmp)

    def test_beta_table_needs_no_drive(self):
        (path,) = run(load_scenario(self.scenario_file("beta", {"betas": [0.5]}, drive={})), self.tmp)
        _, _, rows = read_table(path)
        self.assertEqual(len(rows), 1)
        with self.assertRaises(ConfigError):
            run(load_scenario(self.scenario_file("beta", {"betas": [0.5], "height_um": 100.0}, drive={})), self.tmp)

    def test_outputs_are_deterministic(self):
        first = emit_figure_data("4", os.path.join(self.tmp, "a"))
        second = emit_figure_data("4", os.path.join(self.tmp, "b"))
        for a, b in zip(first, second):
            with open(a, "rb") as fa, open(b, "rb") as fb:
                self.assertEqual(fa.read(), fb.read())

    def test_seed_override(self):
        written = emit_figure_data("4", self.tmp, seed=5)
        meta, _, _ = read_table(written[0])
        self.assertEqual(meta["seed"], 5)


class TestCli(ScenarioCase):
    def test_success_prints_paths(self):
        path = self.scenario_file("beta", {"betas": [0.2]})
        code, out, _ = self.run_cli("beta", "--scenario", path, "--out", self.tmp)
        self.assertEqual(code, 0)
        self.assertTrue(out.strip().endswith("beta.csv"))

    def test_config_error_exit_code(self):
        path = self.scenario_file("modes", {})
        code, _, err = self.run_cli("modes", "--scenario", path, "--out", self.tmp)
        self.assertEqual(code, 2)
        self.assertEqual(json.loads(err)["error"], "config")

    def test_missing_scenario_file(self):
        code, _, _ = self.run_cli("beta", "--scenario", os.path.join(self.tmp, "nope.json"))
        self.assertEqual(code, 2)

    def test_numerical_error_exit_code(self):
        path = self.scenario_file(
            "dc-solve", {"height_um": 100.0, "planar_MHz": 1.0}, drive={"rf_frequency_MHz": 18.1, "rf_amplitude_V": 1.0}
        )
        code, _, err = self.run_cli("dc-solve", "--scenario", path, "--out", self.tmp)
        self.assertEqual(code, 3)
        self.assertEqual(json.loads(err)["type"], "TargetUnreachableError")

    def test_domain_error_exit_code(self):
        params = {"plane": "xz", "x_range_um": [-100, 100], "z_range_um": [0, 100], "points": 5}
        path = self.scenario_file("potential-map", params)
        code, _, err = self.run_cli("potential-map", "--scenario", path, "--out", self.tmp)
        self.assertEqual(code, 4)
        self.assertEqual(json.loads(err)["error"], "domain")

    def test_foreign_exception_is_numerical(self):
        path = self.scenario_file("beta", {"betas": [0.2]})
        with mock.patch("cli.run", side_effect=np.linalg.LinAlgError("Singular matrix")):
            code, _, err = self.run_cli("beta", "--scenario", path, "--out", self.tmp)
        self.assertEqual(code, 3)
        report = json.loads(err.strip().splitlines()[-1])
        self.assertEqual(report["error"], "numerical")
        self.assertEqual(report["type"], "LinAlgError")

    def test_unknown_figure_rejected_by_parser(self):
        with contextlib.redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit) as ctx:
                cli.main(["figure", "9z"])
        self.assertEqual(ctx.exception.code, 2)


if __name__ == "__main__":
    unittest.main()
