from dataclasses import asdict

from flask import Flask, jsonify, request

import dynamics
import pseudo
from efield import FieldBasis
from geometry import load_layout, validate
from models.exceptions import TrapSimError
from models.scenario import Scenario, default_layout_path
from scenario import build_drive, run
from utils.units import parse_quantities

app = Flask(__name__)  # create instance

STATUS = {"config": 400, "domain": 422, "numerical": 500}


def _layout():
    return load_layout(request.args.get("layout") or default_layout_path())


@app.errorhandler(TrapSimError)
def handle_trap_error(e):
    return jsonify({"error": str(e), "category": e.category}), STATUS.get(e.category, 500)


@app.errorhandler(ValueError)
@app.errorhandler(ArithmeticError)
def handle_numerical_failure(e):
    app.logger.exception("numerical failure")
    return jsonify({"error": str(e), "category": "numerical"}), STATUS["numerical"]


# ---------------------- Layout ----------------------
@app.route("/layout", methods=["GET"])
def get_layout():
    return jsonify(_layout().to_dict())


@app.route("/layout/validate", methods=["GET"])
def validate_layout():
    report = validate(_layout())
    return jsonify({"ok": report.ok, "violations": [asdict(v) for v in report.violations]})


# ---------------------- Modes at a point ----------------------
@app.route("/modes", methods=["POST"])
def modes():
    data = request.get_json() or {}
    layout = _layout()
    basis = FieldBasis(layout)
    drive = build_drive(layout, data.get("drive", {}))
    height = parse_quantities({k: v for k, v in data.items() if k == "height_um"}).get("height")
    if height is None:
        return jsonify({"error": "height_um required", "category": "config"}), 400
    x0, y0 = layout.symmetry_point
    solution = pseudo.mode_analysis(basis, drive, (x0, y0, height))
    return jsonify(solution.to_dict())


# ---------------------- Sideband ratio <-> beta ----------------------
@app.route("/beta", methods=["GET"])
def beta():
    if "ratio" in request.args:
        ratio = float(request.args["ratio"])
        return jsonify({"ratio": ratio, "beta": dynamics.sideband_ratio_to_beta(ratio)})
    if "beta" in request.args:
        b = float(request.args["beta"])
        return jsonify({"beta": b, "ratio": dynamics.beta_to_sideband_ratio(b)})
    return jsonify({"error": "give ratio or beta", "category": "config"}), 400


# ---------------------- Run a scenario ----------------------
@app.route("/run/<command>", methods=["POST"])
def run_command(command):
    data = dict(request.get_json() or {})
    data["command"] = command
    out = data.pop("out", "results")
    threads = int(data.pop("threads", 1))
    scenario = Scenario.from_dict(data)
    files = run(scenario, out, threads)
    return jsonify({"message": f"{command} finished", "files": files}), 201


# ---------------------- Run Server ----------------------
if __name__ == "__main__":
    app.run(debug=True)
