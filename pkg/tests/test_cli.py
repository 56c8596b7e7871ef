import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from laptime.cli import EXIT_INFEASIBLE, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_OK, main
from laptime.fitting import LossSample, synthetic_motor_map, write_samples
from laptime.fixtures import MASS_SR, sr_transmission, synthetic_motor


def _run(tmp_path, *argv):
    return main([*argv, "--out-dir", str(tmp_path)])


# -- fit ----------------------------------------------------------------------


def test_fit_exact_alpha(tmp_path):
    path = tmp_path / "map.csv"
    write_samples([LossSample(float(p), 2e-7 * float(p) ** 2) for p in np.linspace(-1e5, 2e5, 9)], path)
    assert _run(tmp_path, "fit", str(path), "--kind", "alpha_b") == EXIT_OK
    doc = json.loads((tmp_path / "alpha_b_model.json").read_text())
    assert doc["alpha_b"] == pytest.approx(2e-7, rel=1e-12)
    assert doc["rmse_relative"] == pytest.approx(0.0, abs=1e-12)


def test_fit_psd_beats_alpha(tmp_path):
    path = tmp_path / "map.csv"
    write_samples(synthetic_motor_map(synthetic_motor().Q, np.linspace(100, 1400, 6), np.linspace(-2e5, 3e5, 9),
                                      noise=0.02, seed=1), path)
    assert _run(tmp_path, "fit", str(path), "--kind", "psd") == EXIT_OK
    doc = json.loads((tmp_path / "psd_model.json").read_text())
    assert np.linalg.eigvalsh(np.array(doc["Q"])).min() >= -1e-9 * np.abs(doc["Q"]).max()
    assert doc["rmse_relative"] <= doc["rmse_alpha"] + 1e-12


def test_fit_empty_file(tmp_path, capsys):
    path = tmp_path / "empty.csv"
    path.write_text("")
    assert _run(tmp_path, "fit", str(path)) == EXIT_INPUT
    assert "no samples" in capsys.readouterr().err


# -- solve --------------------------------------------------------------------


def test_solve_flat(tmp_path, capsys):
    assert _run(tmp_path, "solve", "--track", "builtin:flat") == EXIT_OK
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["lap_time_s"] == pytest.approx(20.0, rel=1e-6)
    assert summary["status"] == "optimal"
    with open(tmp_path / "trajectory.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 101
    assert {"s", "v", "t", "P_m", "gamma"} <= set(rows[0])
    assert "20.0000 s" in capsys.readouterr().out


def test_solve_json_only(tmp_path):
    assert _run(tmp_path, "solve", "--track", "builtin:flat", "--format", "json") == EXIT_OK
    assert (tmp_path / "summary.json").exists()
    assert not (tmp_path / "trajectory.csv").exists()


def test_cvt_not_slower_at_equal_efficiency_and_mass(tmp_path):
    eta = str(sr_transmission().eta_gb)
    common = ["solve", "--track", "builtin:corner", "--mass-kg", str(MASS_SR), "--eta-gb", eta, "--format", "json"]
    times = {}
    for kind in ("sr", "cvt"):
        out = tmp_path / kind
        assert main([*common, "--transmission", kind, "--out-dir", str(out)]) == EXIT_OK
        times[kind] = json.loads((out / "summary.json").read_text())["lap_time_s"]
    assert times["cvt"] <= times["sr"] * (1 + 1e-6)


def test_solve_missing_track(tmp_path, capsys):
    assert _run(tmp_path, "solve", "--track", str(tmp_path / "nope.csv")) == EXIT_INPUT
    assert "not found" in capsys.readouterr().err


def test_solve_unknown_builtin(tmp_path):
    assert _run(tmp_path, "solve", "--track", "builtin:monza") == EXIT_INPUT


def test_solve_bad_budget(tmp_path):
    assert _run(tmp_path, "solve", "--track", "builtin:flat", "--energy-budget-mj", "-1") == EXIT_INPUT


def test_solve_infeasible(tmp_path, capsys):
    code = _run(tmp_path, "solve", "--track", "builtin:corner", "--energy-budget-mj", "0.05")
    assert code == EXIT_INFEASIBLE
    err = capsys.readouterr().err
    assert "infeasible" in err and "primal_infeasible" in err
    assert json.loads((tmp_path / "summary.json").read_text())["status"] == "infeasible"


def test_solve_not_converged(tmp_path):
    code = _run(tmp_path, "solve", "--track", "builtin:corner", "--energy-budget-mj", "2.5",
                "--epsilon-v", "1e-9", "--max-outer-iters", "1")
    assert code == EXIT_NOT_CONVERGED
    assert json.loads((tmp_path / "summary.json").read_text())["converged"] is False


def test_bad_arguments_are_input_errors(tmp_path):
    assert main(["solve"]) == EXIT_INPUT
    assert main(["nonsense"]) == EXIT_INPUT


# -- sweep --------------------------------------------------------------------


def test_sweep_single_cell(tmp_path):
    code = _run(tmp_path, "sweep", "--track", "builtin:sweep", "--grid", "1x1",
                "--eta-range", "0.9:0.9", "--energy-range", "1.0:1.0", "--workers", "1")
    assert code == EXIT_OK
    rows = (tmp_path / "sweep.csv").read_text().splitlines()
    assert len(rows) == 2
    assert rows[1].endswith(",1")
    doc = json.loads((tmp_path / "sweep.json").read_text())
    assert doc["energy_values_J"] == [1.0e6]
    assert doc["failures"] == []


def test_sweep_bad_grid(tmp_path):
    assert _run(tmp_path, "sweep", "--track", "builtin:sweep", "--grid", "3by3") == EXIT_INPUT
    assert _run(tmp_path, "sweep", "--track", "builtin:sweep", "--grid", "1x1", "--eta-range", "0.9:1.2") == EXIT_INPUT


# -- gen-track and compare ----------------------------------------------------


def test_gen_track_straight(tmp_path, capsys):
    dest = tmp_path / "straight.csv"
    assert main(["gen-track", "--segment", "1000", "-o", str(dest)]) == EXIT_OK
    assert "101 nodes" in capsys.readouterr().out
    assert len(dest.read_text().splitlines()) == 102


def test_gen_track_json_then_solve(tmp_path):
    dest = tmp_path / "loop.json"
    assert main(["gen-track", "--segment", "300", "--segment", "100:40", "--segment", "200::0.01",
                 "--format", "json", "-o", str(dest), "--max-decel", "20"]) == EXIT_OK
    assert json.loads(dest.read_text())["step_length_m"] == 10.0
    assert _run(tmp_path, "solve", "--track", str(dest), "--format", "json") == EXIT_OK


def test_gen_track_format_from_suffix(tmp_path):
    dest = tmp_path / "loop.json"
    assert main(["gen-track", "--segment", "200", "-o", str(dest)]) == EXIT_OK
    assert json.loads(dest.read_text())["step_length_m"] == 10.0


def test_gen_track_indivisible(tmp_path):
    assert main(["gen-track", "--segment", "1005", "-o", str(tmp_path / "x.csv")]) == EXIT_INPUT


def test_gen_track_bad_segment(tmp_path):
    assert main(["gen-track", "--segment", "ten", "-o", str(tmp_path / "x.csv")]) == EXIT_INPUT


def test_compare(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["solve", "--track", "builtin:corner", "--transmission", "sr", "--format", "csv", "--out-dir", str(a)]) == 0
    assert main(["solve", "--track", "builtin:corner", "--transmission", "cvt", "--format", "csv", "--out-dir", str(b)]) == 0
    assert _run(tmp_path, "compare", "--compare", str(a / "trajectory.csv"), str(b / "trajectory.csv")) == EXIT_OK
    with open(tmp_path / "compare.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert float(rows[0]["dt_accumulated"]) == 0.0
    assert len(rows) == 161


def test_compare_missing_file(tmp_path):
    assert _run(tmp_path, "compare", "--compare", "a.csv", "b.csv") == EXIT_INPUT


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "laptime.cli", "solve", "--track", "builtin:flat", "--out-dir", str(tmp_path)],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0, proc.stderr
    assert "lap time 20.0000 s" in proc.stdout
