import csv
import io
import json
import subprocess
import sys

import pytest

from tytan.cli import main
from tytan.nn import bundled_paths
from tytan.series import CoefficientTable, gen_coefficients


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestCommands:
    def test_gen_coeffs(self, capsys):
        code, out, _ = run(capsys, "gen-coeffs", "--kind", "log1p", "--terms", "3")
        assert code == 0
        assert CoefficientTable.from_json(out).coefficients == (0.0, 1.0, -0.5)

    def test_sweep_sigmoid(self, capsys, tmp_path):
        path = tmp_path / "sweep.csv"
        code, out, _ = run(capsys, "sweep", "--activation", "sigmoid", "--terms", "1..40", "--out", str(path))
        assert code == 0 and out == ""
        table = rows(path.read_text())
        assert len(table) == 40
        assert [int(r["n_terms"]) for r in table] == list(range(1, 41))
        errs = [float(r["max_abs_err"]) for r in table]
        assert all(b <= a + 1e-13 for a, b in zip(errs, errs[1:]))

    def test_sweep_all_single(self, capsys):
        code, out, _ = run(capsys, "--precision", "single", "sweep", "--activation", "all", "--terms", "40")
        assert code == 0
        table = rows(out)
        assert len(table) == 6
        assert all(float(r["max_abs_err"]) <= 1e-2 for r in table)

    def test_flag_position_agnostic(self, capsys):
        a = run(capsys, "--precision", "single", "sweep", "--activation", "tanh", "--terms", "8")
        b = run(capsys, "sweep", "--precision", "single", "--activation", "tanh", "--terms", "8")
        assert a == b

    def test_threads_env(self, capsys, monkeypatch):
        base = run(capsys, "sweep", "--activation", "gelu,swish", "--terms", "1..6")
        monkeypatch.setenv("TYTAN_THREADS", "1")
        assert run(capsys, "sweep", "--activation", "gelu,swish", "--terms", "1..6") == base
        monkeypatch.setenv("TYTAN_THREADS", "lots")
        assert run(capsys, "sweep", "--activation", "gelu", "--terms", "2")[0] == 1

    def test_threshold(self, capsys):
        code, out, _ = run(capsys, "threshold", "--activation", "sigmoid")
        assert (code, out) == (0, "sigmoid,16\n")
        code, out, _ = run(capsys, "threshold", "--activation", "sigmoid", "--n-max", "2")
        assert out == "sigmoid,not_converged\n"

    def test_predict_cycles(self, capsys):
        assert run(capsys, "predict-cycles", "--inputs", "30", "--terms", "30", "--buffers")[:2] == (0, "22594\n")
        assert run(capsys, "predict-cycles", "--inputs", "30", "--terms", "30")[1] == "22474\n"
        _, out, _ = run(capsys, "predict-cycles", "--inputs", "30", "--terms", "30", "--json")
        assert json.loads(out) == {"fill": 120, "per_output": 747, "total_no_buf": 22474, "total_buf": 22594}

    def test_simulate_defaults(self, capsys):
        code, out, _ = run(capsys, "simulate")
        doc = json.loads(out)
        assert code == 0
        assert doc["cycles"] == {"fill": 120, "per_output": 747, "total_no_buf": 22474, "total_buf": 22594}
        assert len(doc["outputs"]) == 30

    def test_simulate_coeff_file(self, capsys, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(gen_coefficients("exp", 5).to_json())
        code, out, _ = run(capsys, "simulate", "--activation", "identity", "--coeffs", str(path),
                           "--values", "0,1")
        doc = json.loads(out)
        assert code == 0
        assert doc["outputs"][0] == 1.0
        assert doc["n_terms"] == 5

    def test_simulate_trace(self, capsys):
        code, out, err = run(capsys, "--trace", "simulate", "--inputs", "3", "--terms", "4")
        assert code == 0
        table = rows(out)
        assert len(table) == 4 + 3 * (4 + 2)
        assert table[0]["state"] == "Idle" and table[-1]["state"] == "Done"
        assert json.loads(err.strip().splitlines()[-1])["per_output"] == 24 * 4 + 27

    def test_report_round_trip(self, capsys, tmp_path):
        path = tmp_path / "s.csv"
        run(capsys, "sweep", "--activation", "tanh,softplus", "--terms", "1..5", "--out", str(path))
        sweep = rows(path.read_text())
        code, out, _ = run(capsys, "report", "--in", str(path))
        assert code == 0
        series = rows(out)
        assert [(r["activation"], r["n_terms"], float(r["max_abs_err"])) for r in series] == [
            (r["activation"], r["n_terms"], float(r["max_abs_err"])) for r in sweep]

    def test_report_rejects_other_csv(self, capsys, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("a,b\n1,2\n")
        assert run(capsys, "report", "--in", str(path))[0] == 1

    def test_search_reproducible(self, capsys, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run(capsys, "search", "--budget", "0.005", "--out", str(a))[0] == 0
        assert run(capsys, "search", "--budget", "0.005", "--out", str(b))[0] == 0
        assert a.read_bytes() == b.read_bytes()
        plan = json.loads(a.read_text())
        assert plan["baseline_accuracy"] == 0.945 and not plan["over_budget"]

    def test_search_explicit_files(self, capsys):
        model, data = bundled_paths()
        code, out, _ = run(capsys, "search", "--model", str(model), "--data", str(data), "--budget", "0.5")
        assert code == 0
        assert [r["n_terms"] for r in json.loads(out)["records"]] == [1, 1, 1]

    def test_verbose_timing_on_stderr(self, capsys):
        code, out, err = run(capsys, "-v", "predict-cycles", "--inputs", "1", "--terms", "1")
        assert code == 0 and out.strip().isdigit()
        assert "finished in" in err


class TestErrors:
    def test_missing_model(self, capsys, tmp_path):
        missing = tmp_path / "toy.json"
        code, out, err = run(capsys, "search", "--model", str(missing), "--data", "toy.csv", "--budget", "0.01")
        assert code == 1 and out == ""
        assert str(missing) in err

    def test_malformed_model(self, capsys, tmp_path):
        path = tmp_path / "m.json"
        path.write_text("{not json")
        assert run(capsys, "search", "--model", str(path))[0] == 1

    def test_bad_output_dir(self, capsys, tmp_path):
        assert run(capsys, "--out", str(tmp_path / "no" / "x"), "gen-coeffs", "--terms", "2")[0] == 1

    @pytest.mark.parametrize("argv", [
        [],
        ["frobnicate"],
        ["sweep", "--activation", "sigmoid", "--terms", "0..3"],
        ["sweep", "--activation", "relu", "--terms", "3"],
        ["gen-coeffs", "--terms", "3", "--bogus"],
        ["--precision", "half", "gen-coeffs", "--terms", "3"],
    ])
    def test_usage_errors(self, capsys, argv):
        code, _, err = run(capsys, *argv)
        assert code == 2
        assert "usage" in err

    @pytest.mark.parametrize("argv", [
        ["gen-coeffs", "--terms", "65"],
        ["predict-cycles", "--inputs", "0", "--terms", "3"],
        ["sweep", "--activation", "tanh", "--terms", "3", "--step", "0"],
        ["simulate", "--values", "nan"],
        ["search", "--budget", "2"],
    ])
    def test_domain_errors(self, capsys, argv):
        code, _, err = run(capsys, *argv)
        assert code == 1
        assert err.startswith("tytan: error:")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "tytan", "predict-cycles", "--inputs", "30",
                           "--terms", "30", "--buffers"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout == "22594\n"
