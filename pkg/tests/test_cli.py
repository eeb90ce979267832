import json
import subprocess
import sys

import pytest

from philap.cli import run


def call(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_nfun_report_power2(capsys):
    code, out, _ = call(capsys, "nfun-report", "--phi", "power:2")
    rep = json.loads(out)
    assert code == 0
    assert rep["delta2_constant"] == pytest.approx(4.0, abs=1e-9)
    assert rep["assumption_band"] == pytest.approx([1.0, 1.0], abs=1e-9)


def test_nfun_report_csv(capsys, tmp_path):
    out = tmp_path / "r.csv"
    assert call(capsys, "nfun-report", "--phi", "power:3", "--format", "csv", "--out", str(out))[0] == 0
    assert out.read_text().startswith("key,value\n")


@pytest.mark.parametrize("argv", [
    ["nfun-report", "--bogus"],
    ["nfun-report", "--phi", "cubic"],
    ["solve-elliptic", "--grid", "8x9"],
    ["verify-degiorgi", "--field", "missing.fld"],
    ["energy-check"],
])
def test_errors_exit_1(capsys, argv):
    code, _, err = call(capsys, *argv)
    assert code == 1 and err.startswith("philap: error:")


def test_affine_pipeline(capsys, tmp_path):
    fld = tmp_path / "u.fld"
    code, _, _ = call(capsys, "solve-elliptic", "--phi", "power:3", "--grid", "32x32",
                      "--bc", "affine", "--out", str(fld))
    assert code == 0 and fld.is_file()
    csv_path = tmp_path / "w.csv"
    code, out, _ = call(capsys, "verify-degiorgi", "--phi", "power:3", "--field", str(fld),
                        "--csv", str(csv_path))
    rep = json.loads(out)
    assert code == 0 and rep["passed"]
    assert rep["bound_ratio"] == pytest.approx(1.0, rel=1e-8)
    assert csv_path.read_text().splitlines()[0] == "k,W_k,Y_k,Z_k,C_k"


def test_equivalence_scan_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["equivalence-scan", "--phi", "power:3", "--trials", "300", "--seed", "11",
            "--which", "b,d1"]
    assert call(capsys, *args, "--out", str(a))[0] == 0
    assert call(capsys, *args, "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == "which,nf,n,m,trials,lo,hi,seed" and len(lines) == 3


def test_config_precedence(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("phi = power:3\nformat = json\ntrials = 200\nwhich = e\n")
    code, out, _ = call(capsys, "equivalence-scan", "--config", str(cfg))
    rows = json.loads(out)
    assert code == 0 and rows[0]["nf"] == "power:3" and rows[0]["trials"] == 200
    code, out, _ = call(capsys, "equivalence-scan", "--config", str(cfg), "--trials", "50")
    assert json.loads(out)[0]["trials"] == 50


def test_parabolic_pipeline(capsys, tmp_path):
    fld = tmp_path / "s.fld"
    code, _, _ = call(capsys, "solve-parabolic", "--phi", "power:2", "--grid", "32x32",
                      "--bc", "sine", "--steps", "32", "--horizon", "0.04", "--out", str(fld))
    assert code == 0
    code, out, _ = call(capsys, "verify-degiorgi", "--mode", "parabolic", "--phi", "power:2",
                        "--field", str(fld))
    rep = json.loads(out)
    assert code == 0 and rep["passed"]
    assert set(rep["bound_ratio_by_exponent"]) == {"(2-n)/2", "(2-n)/n"}


def test_energy_check(capsys, tmp_path):
    fld = tmp_path / "u.fld"
    assert call(capsys, "solve-elliptic", "--phi", "power:2", "--grid", "32x32", "--bc", "exp",
                "--out", str(fld))[0] == 0
    code, out, _ = call(capsys, "energy-check", "--phi", "power:2", "--field", str(fld),
                        "--levels", "5")
    rep = json.loads(out)
    assert code == 0 and rep["passed"] and len(rep["lhs"]) == 5


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "philap", "nfun-report", "--phi", "power:2"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and json.loads(res.stdout)["delta2_constant"] == pytest.approx(4.0)
