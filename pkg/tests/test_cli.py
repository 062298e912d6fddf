import csv
import io
import json
import subprocess
import sys

import pytest

from sturm_osc import cli
from sturm_osc.verify import VerificationReport


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main([str(a) for a in argv], out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def test_spectrum_table(sine_file):
    code, out, _ = run("spectrum", "-p", sine_file, "-n", 3)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "index rho zeros"
    rows = [line.split() for line in lines[1:]]
    assert [(int(i), int(z)) for i, _, z in rows] == [(1, 0), (2, 1), (3, 2)]
    assert [float(r) for _, r, _ in rows] == pytest.approx([2.0, 5.0, 10.0], abs=1e-9)


def test_byte_identical(sine_file):
    for argv in (
        ("spectrum", "-p", sine_file, "-n", 5),
        ("zeros", "-p", sine_file, "--coeffs", "1@1,1@3", "--format", "json"),
        ("combo", "-p", sine_file, "--coeffs", "1@1,1@3", "-k", 2),
    ):
        assert run(*argv) == run(*argv)


def test_json_round_trip(sine_file):
    code, out, _ = run("zeros", "-p", sine_file, "--coeffs", "1@1,1@3", "--format", "json")
    assert code == 0
    data = json.loads(out)
    assert set(data) == {"combination", "records", "count"}
    assert data["combination"]["coeffs"] == [[1, 1.0], [3, 1.0]]
    assert data["combination"]["problem_ref"] == str(sine_file)
    (rec,) = data["records"]
    assert rec["p"] == 2 and rec["sign_change"] is False
    assert data["count"] == {"N": 1, "N_m": 2, "N_bar_m": 2, "N_v": 0, "m_bar_alpha": 0, "m_bar_beta": 0}
    # re-serializing gives the same text
    assert cli.dump_json(data) + "\n" == out


def test_csv_format(sine_file):
    code, out, _ = run("spectrum", "-p", sine_file, "-n", 2, "--format", "csv")
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and rows[0] == ["index", "rho", "zeros"] and len(rows) == 3


def test_combo_relation_residual(sine_file):
    code, out, _ = run("combo", "-p", sine_file, "--coeffs", "1@1,1@3", "-k", 2, "--format", "json")
    data = json.loads(out)
    assert code == 0 and data["relation_residual"] <= 1e-6 and len(data["Y"]) == 9


def test_combo_certificate(sine_file):
    code, out, _ = run(
        "combo", "-p", sine_file, "--coeffs", "1@2,1@3", "--family", "liouville", "--certificate"
    )
    assert code == 0
    assert "k_star 3" in out and "holds True" in out


def test_verify_exit_codes(sine_file, monkeypatch):
    code, out, _ = run("verify", "st2", "-p", sine_file, "--coeffs", "1@1,1@3")
    assert code == 0 and "st2 PASS" in out
    code, _, _ = run("verify", "mono", "-p", sine_file, "--coeffs", "1@1,1@3")
    assert code == 0

    def failing(c):
        r = VerificationReport("st2", "0" * 16)
        r.add("chain", False, N_v=3)
        return r

    monkeypatch.setattr(cli, "check_st2", failing)
    code, out, _ = run("verify", "st2", "-p", sine_file, "--coeffs", "1@1,1@3")
    assert code == 2 and "st2 FAIL" in out


def test_verify_suite(monkeypatch):
    monkeypatch.delenv("STURM_OSC_THREADS", raising=False)
    code, out, _ = run("verify", "suite", "--seed", 1, "--trials", 1, "--generator", "identity")
    assert code == 0 and "suite PASS" in out
    code, _, err = run("verify", "suite", "--trials", 0)
    assert code == 1 and "trials" in err


def test_evolve(sine_file):
    code, out, _ = run("evolve", "-p", sine_file, "--coeffs", "1@1,1@3", "--t", "0:0.05:0.01", "--format", "json")
    data = json.loads(out)
    assert code == 0 and data["N"] == [1, 0, 0, 0, 0, 0] and data["non_increasing"]


def test_emit_samples(sine_file, tmp_path):
    target = tmp_path / "y.csv"
    code, _, _ = run("zeros", "-p", sine_file, "--coeffs", "1@1", "--emit-samples", target, "--samples", 11)
    assert code == 0
    rows = list(csv.reader(target.open()))
    assert rows[0] == ["x", "Y"] and len(rows) == 12
    assert float(rows[-1][0]) == pytest.approx(3.141592653590)


@pytest.mark.parametrize(
    "argv, message",
    [
        (("spectrum", "-p", "nope.toml"), "file not found: nope.toml"),
        (("spectrum",), "problem file is required"),
        (("zeros", "-p", "{f}", "--coeffs", "1@0"), "outside"),
        (("zeros", "-p", "{f}", "--coeffs", "x"), "A@index"),
        (("verify", "st2", "-p", "{f}"), "--coeffs is required"),
        (("evolve", "-p", "{f}", "--coeffs", "1@1", "--t", "1:0:1"), "range"),
        (("spectrum", "-p", "{f}", "-n", 0), "error"),
    ],
)
def test_input_errors(sine_file, argv, message):
    code, _, err = run(*[str(a).replace("{f}", str(sine_file)) for a in argv])
    assert code == 1 and message in err


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["verify", "bogus"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        cli.main([])
    assert info.value.code == 1


def test_module_entry_point(sine_file):
    res = subprocess.run(
        [sys.executable, "-m", "sturm_osc", "spectrum", "-p", str(sine_file), "-n", "2"],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0 and res.stdout.startswith("index rho zeros")
