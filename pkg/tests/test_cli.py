import csv
import json

import numpy as np
import pytest

from eavf import checks, cli
from eavf.matfun import mat_phi


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_list_problems_sorted(capsys):
    code, out, _ = run(capsys, "list")
    assert code == 0
    names = [line.split(":")[0] for line in out.splitlines() if not line.startswith(" ")]
    assert names == sorted(names) == ["allen-cahn", "fpu", "nls", "triatomic", "wind"]
    assert "--theta" in out


def test_list_methods_and_json(capsys):
    code, out, _ = run(capsys, "list", "--methods")
    assert code == 0 and out.splitlines()[0].startswith("avf [--gl S]")
    code, out, _ = run(capsys, "list", "--json")
    schema = json.loads(out)
    assert schema["problems"]["fpu"]["params"]["beta"]["default"] == 0.0
    assert schema["methods"]["mid"]["quadrature"] is False


def test_run_writes_trajectory(capsys, tmp_path):
    out_csv = tmp_path / "wind.csv"
    code, out, _ = run(capsys, "run", "--problem", "wind", "--r", "20", "--method", "eavf", "--gl", "2",
                       "--h", "0.1", "--t-end", "2", "--out", str(out_csv))
    assert code == 0
    assert "GE=—" in out and "FE=" in out and "method=EAVFGL2" in out
    drift = float(out.split("H_drift=")[1].split()[0])
    assert drift <= 1e-10
    rows = list(csv.reader(out_csv.open()))
    assert rows[0] == ["t", "y_1", "y_2", "H"] and len(rows) == 22
    assert float(rows[1][-1]) == pytest.approx(10.0, abs=1e-14)


def test_run_divergence_exit_code(capsys):
    code, out, err = run(capsys, "run", "--problem", "wind", "--method", "mid", "--h", "0.1", "--t-end", "1")
    assert code == 3 and "diverged at step 1" in err


def test_run_second_order_problem(capsys):
    code, out, _ = run(capsys, "run", "--problem", "fpu", "--n-cells", "16", "--beta", "2",
                       "--method", "eavf:2", "--h", "0.5", "--t-end", "2")
    assert code == 0 and "EAVF_BLOCKGL2" in out


@pytest.mark.parametrize("argv", [
    ["run", "--problem", "wind", "--method", "rk4", "--h", "0.1", "--t-end", "1"],
    ["run", "--problem", "nope", "--method", "eavf", "--h", "0.1", "--t-end", "1"],
    ["run", "--problem", "wind", "--omega", "3", "--method", "eavf", "--h", "0.1", "--t-end", "1"],
    ["run", "--problem", "wind", "--method", "eavf", "--h", "0.3", "--t-end", "1"],
    ["run", "--problem", "wind", "--method", "eavf", "--gl", "12", "--h", "0.1", "--t-end", "1"],
    ["run", "--problem", "wind", "--method", "eavf", "--h", "abc", "--t-end", "1"],
    ["sweep"],
    ["sweep", "--preset", "exp7"],
    ["frobnicate"],
])
def test_bad_arguments_exit_2(capsys, argv):
    with pytest.raises(SystemExit) as exc:
        raise SystemExit(cli.main(argv))
    assert exc.value.code == 2


def test_sweep_from_config(capsys, tmp_path):
    cfg = tmp_path / "s.ini"
    cfg.write_text("[experiment]\nname = s\nproblem = wind\nmethods = eavf:2, mid\n"
                   "stepsizes = 0.05, 0.025\nt_end = 1\n")
    code, out, _ = run(capsys, "sweep", "--config", str(cfg), "--out-dir", str(tmp_path / "o"))
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "o" / "s.csv").open()))
    assert [r["method"] for r in rows] == ["EAVFGL2", "EAVFGL2", "MID", "MID"]


def test_sweep_bad_config_exit_2(capsys, tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[experiment]\nproblem = wind\nbogus = 1\n")
    code, _, err = run(capsys, "sweep", "--config", str(cfg))
    assert code == 2 and "bogus" in err


def test_verify_passes(capsys):
    code, out, _ = run(capsys, "verify", "--only", "matfun", "--only", "quadrature")
    assert code == 0
    lines = [line for line in out.splitlines() if line.startswith(("PASS", "FAIL"))]
    assert len(lines) == 4 and all(line.startswith("PASS") for line in lines)
    assert "s):" in lines[0]


def test_verify_catches_broken_phi(capsys, monkeypatch):
    # replacing phi(V) by phi(-V) must break the symmetry and phi-identity checks
    def broken(only=None, overrides=None):
        return checks.run_checks(only, {"phi": lambda v: mat_phi(-v)})

    monkeypatch.setattr(cli, "run_checks", broken)
    code, out, _ = run(capsys, "verify")
    assert code == 1
    failed = {line.split()[1] for line in out.splitlines() if line.startswith("FAIL")}
    assert {"integrators/symmetry", "matfun/phi-identity"} <= failed


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "eavf", "list", "--methods"], capture_output=True, text=True)
    assert res.returncode == 0 and "eavf_block" in res.stdout


def test_run_wind_long_conserves_energy(capsys, tmp_path):
    code, out, _ = run(capsys, "run", "--problem", "wind", "--theta", "1.5707963267948966", "--r", "20",
                       "--method", "eavf", "--gl", "2", "--h", "0.05", "--t-end", "200",
                       "--out", str(tmp_path / "w.csv"))
    assert code == 0
    assert float(out.split("H_drift=")[1].split()[0]) <= 1e-10


def test_run_fpu_mid_diverges(capsys):
    code, _, err = run(capsys, "run", "--problem", "fpu", "--beta", "2", "--method", "mid",
                       "--h", "0.5", "--t-end", "100")
    assert code == 3 and "diverged" in err


def test_sweep_empty_config_exit_2(capsys, tmp_path):
    cfg = tmp_path / "empty.ini"
    cfg.write_text("")
    code, _, _ = run(capsys, "sweep", "--config", str(cfg))
    assert code == 2


def test_identical_invocations_give_identical_csv(capsys, tmp_path):
    cfg = tmp_path / "d.ini"
    cfg.write_text("[experiment]\nname = d\nproblem = triatomic\nmethods = eavf:3, crk:3\n"
                   "stepsizes = 0.015625\nt_end = 0.25\n")
    blobs = []
    for sub in ("a", "b"):
        assert run(capsys, "sweep", "--config", str(cfg), "--out-dir", str(tmp_path / sub))[0] == 0
        blobs.append((tmp_path / sub / "d.csv").read_bytes())
    assert blobs[0] == blobs[1]
    traj = []
    for sub in ("a", "b"):
        path = tmp_path / f"{sub}.csv"
        run(capsys, "run", "--problem", "nls", "--method", "eavf", "--h", "0.01", "--t-end", "0.1",
            "--out", str(path))
        traj.append(path.read_bytes())
    assert traj[0] == traj[1]
