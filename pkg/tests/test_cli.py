import csv
import json

import numpy as np
import pytest

from starisac.cli import EXIT_CONFIG, EXIT_OK, main, read_slots_csv
from starisac.metasurface import read_coding_matrix

SCEN = {
    "f0": 28e9, "N": 4, "M": 4, "L_h": 4, "L_v": 4,
    "budget": {"c_r_db": 50, "c_t_db": 20},
    "target": {"theta_deg": 30, "phi_deg": 20, "d": 30, "velocity": [1.0, -2.0, -1.0]},
    "split": {"mode": "fixed", "rho": 0.2, "lambda": 0.5},
    "n_slots": 3, "trials": 2, "seed": 1,
}


@pytest.fixture
def scen_file(tmp_path):
    p = tmp_path / "scen.json"
    p.write_text(json.dumps(SCEN))
    return p


def test_run_one_trial_one_slot(tmp_path, scen_file):
    out = tmp_path / "out"
    assert main(["run", str(scen_file), "-o", str(out), "--trials", "1", "--slots", "1"]) == EXIT_OK
    rows = read_slots_csv(out / "slots.csv")
    assert len(rows) == 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["master_seed"] == 1 and len(manifest["trial_seeds"]) == 1
    assert "mu_c" in manifest["mu_c_convention"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["schema_version"] == 1 and summary["slots"] == 1


def test_same_seed_byte_identical(tmp_path, scen_file):
    assert main(["run", str(scen_file), "-o", str(tmp_path / "a")]) == EXIT_OK
    assert main(["run", str(scen_file), "-o", str(tmp_path / "b")]) == EXIT_OK
    assert (tmp_path / "a" / "slots.csv").read_bytes() == (tmp_path / "b" / "slots.csv").read_bytes()
    assert main(["run", str(scen_file), "-o", str(tmp_path / "c"), "--seed", "2"]) == EXIT_OK
    assert (tmp_path / "a" / "slots.csv").read_bytes() != (tmp_path / "c" / "slots.csv").read_bytes()


def test_worker_pool_keeps_trial_order(tmp_path, scen_file, monkeypatch):
    assert main(["run", str(scen_file), "-o", str(tmp_path / "serial")]) == EXIT_OK
    monkeypatch.setenv("STARISAC_WORKERS", "2")
    monkeypatch.setenv("STARISAC_OUTPUT_DIR", str(tmp_path / "pool"))
    assert main(["run", str(scen_file)]) == EXIT_OK
    assert (tmp_path / "serial" / "slots.csv").read_bytes() == (tmp_path / "pool" / "slots.csv").read_bytes()


def test_patterns_export(tmp_path, scen_file):
    out = tmp_path / "p"
    assert main(["run", str(scen_file), "-o", str(out), "--patterns", "--trials", "1"]) == EXIT_OK
    grid = np.loadtxt(out / "pattern_1.csv", delimiter=",", skiprows=1)
    assert grid.shape[1] == 3
    codes, header = read_coding_matrix(out / "coding_1_reflection.txt")
    assert codes.shape == (4, 4) and header["bits"] == 4


def _sweep(tmp_path, scen_file, axis, values):
    out = tmp_path / axis
    assert main(["sweep", str(scen_file), "--axis", axis, f"--values={values}", "-o", str(out), "--trials", "4"]) == EXIT_OK
    with open(out / "sweep.csv") as fh:
        fh.readline()
        return list(csv.DictReader(fh))


def test_lambda_sweep_monotone(tmp_path, scen_file):
    rows = _sweep(tmp_path, scen_file, "lambda", "0.1,0.3,0.5,0.7,1.0")
    rate1 = [float(r["mean_rate_subslot1"]) for r in rows]
    snr = [float(r["mean_snr_subslot1"]) for r in rows]
    assert all(np.diff(rate1) <= 1e-12) and all(np.diff(snr) >= 0)


def test_rho_sweep_rmse_nonincreasing(tmp_path, scen_file):
    rows = _sweep(tmp_path, scen_file, "rho", "0.05,0.2,0.5,1.0")
    std = [float(r["mean_p_a2"]) for r in rows]
    assert all(np.diff(std) >= -1e-12)


def test_other_sweeps(tmp_path, scen_file):
    assert len(_sweep(tmp_path, scen_file, "p_a1", "0,0.5,1")) == 3
    assert len(_sweep(tmp_path, scen_file, "c_r", "1e3,1e5")) == 2
    assert len(_sweep(tmp_path, scen_file, "snr", "-10,0")) == 2


def test_exit_codes(tmp_path, scen_file, capsys):
    assert main(["validate", str(scen_file)]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["valid"] is True
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**SCEN, "bandwidth": 28e9}))
    assert main(["validate", str(bad)]) == EXIT_CONFIG
    assert "narrowband" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    assert main(["run", str(scen_file)]) == EXIT_CONFIG  # no output directory
    assert main(["sweep", str(scen_file), "--axis", "lambda", "--values", "1.5", "-o", str(tmp_path)]) == EXIT_CONFIG
    assert main(["bogus"]) == EXIT_CONFIG
