import subprocess
import sys

import pytest

from ncstokes import cli
from ncstokes.errors import SolverError


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_constants_square(capsys):
    code, out, _ = run_cli(capsys, "constants", "--domain", "square", "--nu", "1")
    assert code == 0
    values = dict(line.split(" = ") for line in out.strip().splitlines())
    values = {k.strip(): float(v) for k, v in values.items()}
    assert values["beta_lower_bound"] == pytest.approx(0.35355, abs=1e-5)
    assert values["c_div"] == pytest.approx(2.828, abs=1e-3)
    assert values["c_stab"] == pytest.approx(0.02310, abs=5e-5)


def test_constants_cdiv_csv(capsys):
    code, out, _ = run_cli(capsys, "constants", "--cdiv", "1", "--nu", "1", "--format", "csv")
    assert code == 0
    rows = dict(line.split(",") for line in out.strip().splitlines()[1:])
    assert float(rows["c_stab"]) == 0.125


def test_constants_costabel_dauge(capsys):
    code, out, _ = run_cli(capsys, "constants", "--cdiv", "2", "--rho", "1", "--radius", "2",
                           "--format", "csv")
    assert code == 0
    rows = dict(line.split(",") for line in out.strip().splitlines()[1:])
    assert float(rows["costabel_dauge"]) >= float(rows["costabel_dauge_simplified"]) == 0.25


def test_infsup_cr_n4(capsys):
    code, out, _ = run_cli(capsys, "infsup", "--element", "cr", "--n", "4")
    assert code == 0
    assert out.strip() == "CR  n=4    beta_T = 0.669837"


def test_gradient_test_csv(capsys, tmp_path):
    path = tmp_path / "g.csv"
    code, out, _ = run_cli(capsys, "gradient-test", "--element", "cr", "--n", "4",
                           "--nu", "1", "1e-3", "--format", "csv", "--output", str(path))
    assert code == 0
    text = path.read_bytes().decode("utf-8")
    assert text == out and "\r" not in text
    lines = text.splitlines()
    assert lines[0] == "element,projection,nu,n,h,eps0"
    rows = [l.split(",") for l in lines[1:] if not l.startswith("#")]
    assert len(rows) == 4 and all(r[0] == "cr" and r[3] == "4" for r in rows)
    none = {float(r[2]): float(r[5]) for r in rows if r[1] == "none"}
    rt = [float(r[5]) for r in rows if r[1] == "rt"]
    assert none[1e-3] * 1e-3 == pytest.approx(none[1.0], rel=1e-2)
    assert max(rt) <= 1e-12
    # one level per series: no rate line
    assert not any(l.startswith("# rate=") for l in lines)


def test_trig_test_rate_lines_and_determinism(capsys, tmp_path):
    args = ["trig-test", "--element", "cr", "--n", "4", "8", "--projection", "rt", "--format", "csv"]
    code, first, _ = run_cli(capsys, *args)
    assert code == 0
    code, second, _ = run_cli(capsys, *args)
    assert first.encode() == second.encode()
    lines = first.splitlines()
    assert lines[-1].startswith("# rate=")
    assert float(lines[-1].split("=")[1]) > 1.0
    # 17 significant digits round-trip
    eps = lines[1].split(",")[5]
    assert float(eps) == float(repr(float(eps)))


def test_table_output(capsys):
    code, out, _ = run_cli(capsys, "gradient-test", "--element", "fs", "--n", "2", "--nu", "1")
    assert code == 0
    assert out.splitlines()[0].split() == ["element", "projection", "nu", "n", "h", "eps0"]
    assert "FS" in out


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# gradient sweep\nelement = fs\nlevels = 2\nnu = 1, 0.1\nprojection = rt\nformat = csv\n")
    code, out, _ = run_cli(capsys, "gradient-test", "--config", str(cfg))
    assert code == 0
    rows = [l for l in out.splitlines()[1:] if not l.startswith("#")]
    assert len(rows) == 2 and all(r.startswith("fs,rt,") for r in rows)
    code, out, _ = run_cli(capsys, "gradient-test", "--config", str(cfg), "--nu", "0.5")
    rows = [l for l in out.splitlines()[1:] if not l.startswith("#")]
    assert len(rows) == 1 and rows[0].split(",")[2] == "0.5"


@pytest.mark.parametrize("argv", [
    ["gradient-test", "--nu", "-1"],
    ["trig-test", "--n", "0"],
    ["constants"],
    ["constants", "--domain", "torus"],
    ["constants", "--cdiv", "1", "--rho", "1"],
    ["bogus"],
    ["gradient-test", "--element", "q2"],
])
def test_invalid_config_exit_2(capsys, argv):
    code, _, err = run_cli(capsys, *argv)
    assert code == 2
    assert err


def test_bad_config_file(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    assert run_cli(capsys, "infsup", "--config", str(cfg))[0] == 2
    assert run_cli(capsys, "infsup", "--config", str(tmp_path / "missing.cfg"))[0] == 2


def test_solver_failure_exit_1(capsys, monkeypatch):
    def broken(system):
        raise SolverError("zero pivot", 3)
    monkeypatch.setattr(cli, "factorize", broken)
    code, _, err = run_cli(capsys, "gradient-test", "--element", "cr", "--n", "2", "--nu", "1")
    assert code == 1
    assert "n=2" in err and "zero pivot" in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ncstokes", "constants", "--cdiv", "1"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "c_stab" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "ncstokes", "infsup", "--nu", "0"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 2
