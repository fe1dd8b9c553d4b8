import json
import subprocess
import sys

import numpy as np
import pytest

from xdiff import cli
from xdiff.io import read_csv


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc, indent=2))
    return str(path)


def run(tmp_path, command, doc, *extra):
    out = tmp_path / "out"
    code = cli.main([command, "--config", write_config(tmp_path, doc), "--out", str(out), *extra])
    return code, out


def strip_created(path):
    doc = json.loads(path.read_text())
    doc.pop("created")
    return doc


# --- check -------------------------------------------------------------------

def test_check_thin_film_all_pass(tmp_path):
    doc = {
        "model": {"name": "thin_film"},
        "experiment": {"checks": ["H3", "H4ii", "H5", "LemG", "GPL"], "samples": 4000},
    }
    code, out = run(tmp_path, "check", doc)
    assert code == cli.EXIT_OK
    report = json.loads((out / "check_H5.json").read_text())
    assert report["report"]["verdict"] == "PASS"
    assert report["config"]["model"]["name"] == "thin_film" and report["seed"] == 0
    header, rows = read_csv(out / "checks.csv")
    assert header == ["check", "verdict", "statistic", "samples"] and len(rows) == 5


def test_check_ion_channel_h4_fails_near_solvent_depletion(tmp_path):
    doc = {"model": {"name": "ion_channel"}, "experiment": {"checks": ["H4ii"], "samples": 2000}}
    code, out = run(tmp_path, "check", doc)
    assert code == cli.EXIT_FAIL
    witness = json.loads((out / "check_H4ii.json").read_text())["report"]["witness"]
    assert witness["bar_u"][0] < 1e-4


def test_check_inconclusive_exit_code(tmp_path):
    doc = {
        "model": {"name": "scalar", "params": {"alpha": 1.0}, "reaction": {"kind": "logistic"}},
        "experiment": {"checks": ["Reaction"], "samples": 2000},
    }
    code, _ = run(tmp_path, "check", doc)
    assert code == cli.EXIT_INCONCLUSIVE


@pytest.mark.parametrize(
    "doc",
    [
        {"model": {"name": "scalar"}, "experiment": {"checks": []}},
        {"model": {"name": "scalar"}, "experiment": {}},
        {"model": {"name": "scalar"}, "experiment": {"checks": ["H3"]}, "bogus": 1},
        {"model": {"name": "nope"}, "experiment": {"checks": ["H3"]}},
        {"model": {"name": "scalar", "params": {"alpha": 3}}, "experiment": {"checks": ["H3"]}},
        {"model": {"name": "scalar", "params": {"beta": 1}}, "experiment": {"checks": ["H3"]}},
        {"model": {"name": "scalar"}, "experiment": {"checks": ["IonLemma"]}},
    ],
)
def test_check_config_errors_exit_1(tmp_path, doc, capsys):
    code, _ = run(tmp_path, "check", doc)
    assert code == cli.EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_schema_error_is_line_anchored(tmp_path, capsys):
    text = '{\n  "model": {"name": "scalar"},\n  "experiment": {\n    "checks": ["H3"],\n    "sampels": 10\n  }\n}\n'
    path = tmp_path / "bad.json"
    path.write_text(text)
    assert cli.main(["check", "--config", str(path), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    assert f"{path}:5:" in capsys.readouterr().err


# --- simulate ----------------------------------------------------------------

def test_simulate_single_step_has_two_time_blocks(tmp_path):
    doc = {"model": {"name": "scalar"}, "solver": {"tau": 0.01, "T": 0.01, "cells": 8}}
    code, out = run(tmp_path, "simulate", doc)
    assert code == cli.EXIT_OK
    header, rows = read_csv(out / "trajectory.csv")
    assert header == ["t", "x", "u1", "u0"]
    assert sorted({r[0] for r in rows}) == ["0", "0.01"]
    assert len(rows) == 16


def test_simulate_maxwell_stefan_entropy_monotone(tmp_path):
    doc = {"model": {"name": "maxwell_stefan"}, "solver": {"tau": 0.01, "T": 0.1, "cells": 16}}
    code, out = run(tmp_path, "simulate", doc, "--format", "json")
    assert code == cli.EXIT_OK
    E = np.array(json.loads((out / "ledger.json").read_text())["ledger"]["columns"]["entropy"])
    assert np.all(np.diff(E) <= 0)
    assert not (out / "trajectory.csv").exists()


def test_simulate_divergence_exit_4(tmp_path):
    doc = {
        "model": {"name": "scalar"},
        "solver": {"tau": 0.5, "T": 1.0, "cells": 16, "newton_max_iter": 1, "newton_tol": 1e-15},
        "experiment": {"initial": {"amplitude": 0.4}},
    }
    code, out = run(tmp_path, "simulate", doc)
    assert code == cli.EXIT_SOLVER
    assert json.loads((out / "ledger.json").read_text())["ledger"]["failed_step"] == 1


def test_output_directory_created_or_rejected(tmp_path):
    doc = {"model": {"name": "scalar"}, "solver": {"tau": 0.01, "T": 0.01, "cells": 4}}
    cfg = write_config(tmp_path, doc)
    nested = tmp_path / "a" / "b"
    assert cli.main(["simulate", "--config", cfg, "--out", str(nested)]) == cli.EXIT_OK
    assert (nested / "trajectory.csv").exists()
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["simulate", "--config", cfg, "--out", str(blocker / "sub")]) == cli.EXIT_CONFIG


def test_missing_config_file_exit_1(tmp_path):
    assert cli.main(["simulate", "--config", str(tmp_path / "none.json")]) == cli.EXIT_CONFIG


# --- twin --------------------------------------------------------------------

def test_twin_zero_delta(tmp_path):
    doc = {
        "model": {"name": "tumor"},
        "solver": {"tau": 0.01, "T": 0.1, "cells": 16},
        "experiment": {"delta": 0.0, "identical_reference": True},
    }
    code, out = run(tmp_path, "twin", doc)
    assert code == cli.EXIT_OK
    result = json.loads((out / "twin.json").read_text())["result"]
    assert max(result["series"]["H"]) <= 1e-10
    assert result["fitted_C"] == "not-applicable"


def test_twin_tumor_finite_growth_constant(tmp_path):
    doc = {
        "model": {"name": "tumor"},
        "solver": {"tau": 0.01, "T": 0.1, "cells": 16},
        "experiment": {"delta": 1e-2},
    }
    code, out = run(tmp_path, "twin", doc)
    assert code == cli.EXIT_OK
    result = json.loads((out / "twin.json").read_text())["result"]
    assert np.isfinite(result["fitted_C"]) and result["envelope_violations"] == 0
    assert result["fine_config"]["cells"] == 32
    header, _ = read_csv(out / "twin.csv")
    assert header == ["t", "H", "lower_bound", "I1", "I2"]


def test_twin_negative_delta_exit_1(tmp_path):
    doc = {"model": {"name": "tumor"}, "experiment": {"delta": -1e-2}}
    assert run(tmp_path, "twin", doc)[0] == cli.EXIT_CONFIG


# --- sweep -------------------------------------------------------------------

def _sweep_doc(axis, values, **exp):
    return {
        "model": {"name": "tumor"},
        "solver": {"tau": 0.01, "T": 0.05, "cells": 16},
        "experiment": {"axis": {"name": axis, "values": values}, **exp},
    }


def test_sweep_delta_axis_quadratic(tmp_path):
    code, out = run(tmp_path, "sweep", _sweep_doc("delta", [1e-3, 1e-2]))
    assert code == cli.EXIT_OK
    header, rows = read_csv(out / "sweep.csv")
    assert header == ["delta", "H0", "max_H", "C_star", "entropy_drift", "terminal_error"]
    assert [float(r[0]) for r in rows] == [1e-3, 1e-2]
    assert float(rows[1][1]) / float(rows[0][1]) == pytest.approx(100.0, rel=0.2)


def test_sweep_tau_axis_error_decreases(tmp_path):
    doc = _sweep_doc("tau", [1e-2, 5e-3, 2.5e-3], delta=0.0)
    code, out = run(tmp_path, "sweep", doc)
    assert code == cli.EXIT_OK
    _, rows = read_csv(out / "sweep.csv")
    err = [float(r[5]) for r in rows]
    assert err[0] > err[1] > err[2]


def test_sweep_model_parameter_axis(tmp_path):
    doc = _sweep_doc("theta", [0.5, 1.0], delta=1e-2)
    code, out = run(tmp_path, "sweep", doc, "--format", "json")
    assert code == cli.EXIT_OK
    rows = json.loads((out / "sweep.json").read_text())["rows"]
    assert [r["theta"] for r in rows] == [0.5, 1.0]


def test_sweep_empty_axis_exit_1(tmp_path):
    assert run(tmp_path, "sweep", _sweep_doc("delta", []))[0] == cli.EXIT_CONFIG


# --- provenance and determinism -------------------------------------------------

def test_outputs_are_deterministic(tmp_path, monkeypatch):
    doc = _sweep_doc("delta", [1e-3, 1e-2])
    cfg = write_config(tmp_path, doc)
    out = tmp_path / "o"
    args = ["sweep", "--config", cfg, "--out", str(out), "--seed", "5"]
    monkeypatch.setenv("XDIFF_THREADS", "2")
    assert cli.main(args) == 0
    first_csv, first_json = (out / "sweep.csv").read_bytes(), strip_created(out / "sweep.json")
    monkeypatch.setenv("XDIFF_THREADS", "1")
    assert cli.main(args) == 0
    assert (out / "sweep.csv").read_bytes() == first_csv
    assert strip_created(out / "sweep.json") == first_json
    text = first_csv.decode()
    assert text.startswith("# xdiff ") and "# seed: 5\n" in text and '"tumor"' in text


def test_bad_thread_cap(tmp_path, monkeypatch):
    monkeypatch.setenv("XDIFF_THREADS", "zero")
    doc = {"model": {"name": "scalar"}, "experiment": {"checks": ["GPL"], "samples": 100}}
    assert run(tmp_path, "check", doc)[0] == cli.EXIT_CONFIG


def test_toml_config(tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text(
        '[model]\nname = "scalar"\n[model.params]\nalpha = 0.5\n'
        '[experiment]\nchecks = ["GPL"]\nsamples = 200\n'
    )
    assert cli.main(["check", "--config", str(path), "--out", str(tmp_path / "o")]) == cli.EXIT_OK
    bad = tmp_path / "bad.toml"
    bad.write_text('[model]\nname = "scalar"\n[experiment]\nchecks = ["GPL"]\nextra = 1\n')
    assert cli.main(["check", "--config", str(bad), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG


def test_console_entry_point(tmp_path):
    cfg = write_config(tmp_path, {"model": {"name": "scalar"}, "experiment": {"checks": ["GPL"], "samples": 100}})
    proc = subprocess.run(
        [sys.executable, "-m", "xdiff.cli", "check", "--config", cfg, "--out", str(tmp_path / "o")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "GPL" in proc.stdout and "PASS" in proc.stdout
