#!/usr/bin/env python3
"""Smoke test for the sgflow_py extension module.

Build the module first:

    cargo build -p sgflow-py --release

The script locates the cdylib in target/, exposes it under the importable
module name, and exercises the main entry points against known values.
"""

import json
import math
import shutil
import sys
import tempfile
from pathlib import Path


def import_module():
    root = Path(__file__).resolve().parent.parent
    candidates = [
        root / "target" / "release" / "libsgflow_py.so",
        root / "target" / "debug" / "libsgflow_py.so",
    ]
    lib = next((p for p in candidates if p.exists()), None)
    if lib is None:
        sys.exit("build the module first: cargo build -p sgflow-py --release")
    staging = Path(tempfile.mkdtemp(prefix="sgflow-py-"))
    shutil.copy2(lib, staging / "sgflow_py.so")
    sys.path.insert(0, str(staging))
    import sgflow_py

    return sgflow_py


def approx(a, b, rel=1e-8):
    return abs(a - b) <= rel * max(abs(a), abs(b), 1e-300)


def main():
    sg = import_module()
    print(f"sgflow_py {sg.__version__}")

    # basis norms of the first mode
    field = sg.Field(4, [(1, 1, 1.0)], alpha=0.5)
    n = field.norms()
    assert approx(n["l2"], 1.0, 1e-14), n
    assert approx(n["h2proxy"], 2.0, 1e-14), n
    assert approx(n["curl_sigma_norm"], 2.0 * math.sqrt(2.0), 1e-14), n
    assert len(field.coeffs()) == 16
    print("field norms ok")

    # analytic single-mode decay
    config = {
        "nu": 0.1,
        "alpha": 0.5,
        "T": 1.0,
        "K": 4,
        "dt": 1e-3,
        "y0": [{"k": 1, "m": 1, "c": 1.0}],
    }
    result = sg.simulate_config(json.dumps(config))
    final = {(k, m): c for (k, m, c) in result["final_coeffs"]}
    assert approx(final[(1, 1)], math.exp(-0.1)), final[(1, 1)]
    assert approx(
        result["final_energy"] / result["initial_energy"], math.exp(-0.2)
    ), result
    print("single-mode decay ok")

    # objective of the pure decay against a zero target
    config["lambda"] = 0.0
    j = sg.evaluate_objective(json.dumps(config))
    want = 0.5 * (1.0 - math.exp(-0.2)) / 0.2
    assert approx(j, want, 1e-6), (j, want)
    print("objective ok")

    # gradient vanishes for the trivial problem
    trivial = {
        "nu": 0.1,
        "alpha": 0.5,
        "T": 1.0,
        "K": 3,
        "dt": 1e-2,
        "lambda": 1e-3,
        "control": {"n_intervals": 4},
    }
    assert sg.gradient_norm(json.dumps(trivial)) == 0.0
    print("trivial gradient ok")

    # small synthetic recovery through the optimizer
    recovery = {
        "nu": 0.1,
        "alpha": 0.5,
        "T": 1.0,
        "K": 3,
        "dt": 1.0 / 256.0,
        "lambda": 1e-3,
        "y0": [{"k": 1, "m": 1, "c": 1.0}],
        "y_d": {
            "from_control": {
                "n_intervals": 4,
                "values": [[{"k": 1, "m": 1, "c": 0.8}]] * 4,
            }
        },
        "control": {"n_intervals": 4},
        "admissible": {"kind": "ball", "radius": 2.0},
    }
    report = sg.optimize_config(json.dumps(recovery))
    assert report["status"] == "Converged", report
    assert report["j"][-1] <= 0.1 * report["j"][0], report
    print(f"optimizer ok ({report['iterations']} iterations)")

    # verification battery
    verify = json.loads(sg.verify("forms", 42))
    assert verify["all_passed"], verify
    assert verify["suite"] == "forms"
    print(f"verify forms ok ({len(verify['checks'])} checks)")

    # invalid input surfaces as ValueError
    try:
        sg.verify("bogus", 1)
    except ValueError:
        print("error mapping ok")
    else:
        sys.exit("expected ValueError for unknown suite")

    print("smoke test passed")


if __name__ == "__main__":
    main()
