import csv
import json
import os
from pathlib import Path

import pytest

from loggrad import cli

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = """
[metric]
kind = "euclidean"
n = 2

[domain]
x0 = [0.0, 0.0]
R = 1.0
t0 = 2.0
T = 1.0
rho = {rho}
delta = 0.5

[[solution]]
id = "gauss"
analytic = "gauss"
h = 0.1

[[checks]]
estimate = "SZ_heat"
C = {C}
"""


def _write(tmp_path, rho=0.5, C='"calibrate"'):
    path = tmp_path / "cfg.toml"
    path.write_text(BASE.format(rho=rho, C=C))
    return path


def _read(path):
    return json.loads(Path(path).read_text())


def test_run_gauss_config(tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(CONFIGS / "gauss_sz.toml"), "--out", str(out)]) == 0
    summary = _read(out / "summary.json")
    assert summary["status"] == 0 and summary["schema"] == 1
    cal = [c for c in summary["checks"] if "C_star" in c]
    assert len(cal) == 2 and all(c["C_star"] > 0 for c in cal)
    assert "C*=" in capsys.readouterr().out
    meta = _read(out / "summary.meta.json")
    assert meta["backend"] in ("numba", "numpy")


def test_config_error_names_field(tmp_path, capsys):
    code = cli.main(["run", "--config", str(_write(tmp_path, rho=1.5)), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "domain.rho" in capsys.readouterr().err


def test_missing_config_is_io_error(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "absent.toml"),
                     "--out", str(tmp_path / "o")]) == 4


def test_violation_exit_code(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["verify", "--config", str(_write(tmp_path, C="1e-6")), "--out", str(out)]) == 1
    rep = _read(out / "check-01-SZ_heat.json")
    assert rep["passed"] is False
    assert _read(out / "summary.json")["status"] == 1


def test_compare_artifact(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["compare", "--config", str(CONFIGS / "exp_compare.toml"), "--out", str(out)]) == 0
    rep = _read(out / "check-01-compare.json")
    table = rep["comparisons"][0]["tables"][0]
    assert table["winner"] == "LAME"
    assert table["lame_vs_sz"] >= 5
    assert [r["estimate_id"] for r in table["rows"]] == ["LAME", "SZ_heat"]


def test_node_csv(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["calibrate", "--config", str(CONFIGS / "exp_compare.toml"), "--out", str(out)]) == 0
    with open(out / "check-02-LAME-exp.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x1", "x2", "t", "lhs", "rhs", "region"]
    assert all(float(r[3]) <= float(r[4]) for r in rows[1:])


def _payloads(out):
    return {name: (out / name).read_bytes() for name in sorted(os.listdir(out))
            if name != "summary.meta.json"}


def test_reruns_are_byte_identical(tmp_path):
    cfg = str(CONFIGS / "gauss_sz.toml")
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--config", cfg, "--out", str(a)]) == 0
    assert cli.main(["run", "--config", cfg, "--out", str(b)]) == 0
    assert _payloads(a) == _payloads(b)


def test_rerun_from_summary(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--config", str(_write(tmp_path)), "--out", str(a)]) == 0
    assert cli.main(["run", "--config", str(a / "summary.json"), "--out", str(b)]) == 0
    assert _payloads(a) == _payloads(b)


def test_solve_and_reuse_field(tmp_path):
    cfg = str(_write(tmp_path))
    a = tmp_path / "a"
    assert cli.main(["solve", "--config", cfg, "--out", str(a)]) == 0
    saved = a / "fields" / "gauss.field"
    assert saved.exists()
    b = tmp_path / "b"
    assert cli.main(["calibrate", "--config", cfg, "--out", str(b), "--field", str(saved)]) == 0
    c = tmp_path / "c"
    assert cli.main(["calibrate", "--config", cfg, "--out", str(c)]) == 0
    assert (b / "check-01-SZ_heat.json").read_bytes() == (c / "check-01-SZ_heat.json").read_bytes()
    bad = tmp_path / "bad.field"
    bad.write_text("junk\n")
    assert cli.main(["calibrate", "--config", cfg, "--out", str(tmp_path / "d"),
                     "--field", str(bad)]) == 4


def test_refinement_study(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["verify", "--config", str(_write(tmp_path, C="10.0")), "--out", str(out),
                     "--refine", "2"]) == 0
    study = _read(out / "refinement.json")["study"]
    levels = study[0]["levels"]
    assert len(levels) == 3
    for a, b in zip(levels, levels[1:]):
        assert b["h"] == pytest.approx(a["h"] / 2)
        assert b["pde_order"] > 1.7


def test_cutoff_check_csv(tmp_path, capsys):
    path = tmp_path / "cut.csv"
    assert cli.main(["cutoff-check", "--a", "0.5", "--points", "400", "--out", str(path)]) == 0
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["r", "psi", "d1", "d2", "ratio"]
    assert len(rows) == 402
    assert float(rows[1][1]) == 1.0 and float(rows[-1][1]) == 0.0
    assert "C_space=" in capsys.readouterr().out
    assert cli.main(["cutoff-check", "--R", "1.0", "--rho", "1.0"]) == 2
