import json
import subprocess
import sys

import pytest

from bastion.cli import check_csv, compare, main
from bastion.config import preset_path


def write_config(tmp_path, name, base="case7_bas.json", **changes):
    raw = json.loads(preset_path(base).read_text())
    raw.update(changes)
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(raw))
    return path


@pytest.fixture(scope="module")
def short_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs") / "bas"
    assert main(["run", "case7_bas.json", "--out", str(out), "--duration", "0.5"]) == 0
    return out


def test_run_writes_exactly_three_files(short_run):
    assert sorted(p.name for p in short_run.iterdir()) == ["resolved-config.json", "summary.json", "trajectory.csv"]


def test_summary_contents(short_run):
    s = json.loads((short_run / "summary.json").read_text())
    for key in ("min_h", "argmin_t", "theta_err_final", "J_total", "sigmin_grid_inf", "theorem2_diagnostic",
                "config_hash"):
        assert key in s
    assert s["min_h"] > 0 and s["status"] == "ok"
    m = s["manifest"]
    assert m["config_hash"] == s["config_hash"] and m["scenario"] == "case7_bas"
    assert m["started"] <= m["finished"]


def test_resolved_config_reproduces_hash(short_run):
    from bastion import parse_config
    s = json.loads((short_run / "summary.json").read_text())
    assert parse_config(short_run / "resolved-config.json").digest() == s["config_hash"]


def test_check_accepts_produced_csv(short_run, capsys):
    assert check_csv(short_run / "trajectory.csv") == []
    assert main(["check", str(short_run / "trajectory.csv")]) == 0


def test_check_rejects_damaged_csv(short_run, tmp_path):
    lines = (short_run / "trajectory.csv").read_text().splitlines()
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join([lines[0], lines[2], lines[1]]) + "\n")
    assert any("strictly increasing" in p for p in check_csv(bad))
    bad.write_text(lines[0].replace("theta_err", "err") + "\n" + lines[1] + "\n")
    assert check_csv(bad)
    bad.write_text(lines[0] + "\n" + lines[1].replace(lines[1].split(",")[1], "inf", 1) + "\n")
    assert any("non-finite" in p for p in check_csv(bad))
    assert main(["check", str(tmp_path / "missing.csv")]) == 1


def test_compare_with_itself_has_zero_deltas(short_run, capsys):
    report = compare(short_run, short_run)
    assert all(r["delta"] == 0 for r in report["metrics"] if r["delta"] is not None)
    assert report["contrast"]["min_h_gap"] == 0
    assert main(["compare", str(short_run), str(short_run)]) == 0
    assert "min_h" in capsys.readouterr().out


def test_compare_missing_summary(tmp_path, short_run):
    assert main(["compare", str(short_run), str(tmp_path)]) == 1


def test_missing_config_exit_code(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 1
    assert "not found" in capsys.readouterr().err


def test_invalid_config_exit_code(tmp_path):
    path = write_config(tmp_path, "bad", R=0.0)
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 1


def test_safety_violation_exit_code(tmp_path):
    path = write_config(tmp_path, "hit", x0=[1.0, 2.6], dt=0.05, duration=1.0,
                        stack={"window": 0.5, "cadence": 0.1})
    out = tmp_path / "o"
    assert main(["run", str(path), "--out", str(out)]) == 2
    s = json.loads((out / "summary.json").read_text())
    assert s["status"] == "safety_violation" and s["error"]["type"] == "SafetyViolation"


def test_blowup_exit_code(tmp_path):
    path = write_config(tmp_path, "boom", base="lqr_oracle.json", dt=0.1, duration=5.0,
                        stack={"window": 0.5, "cadence": 0.1}, gains={"k_a1": 1e4})
    out = tmp_path / "o"
    assert main(["run", str(path), "--out", str(out)]) == 3
    assert json.loads((out / "summary.json").read_text())["error"]["type"] == "IntegrationBlowup"


def test_several_configs_run_in_parallel(tmp_path):
    a = write_config(tmp_path, "a", duration=0.5)
    b = write_config(tmp_path, "b", base="case7_nosafety.json", duration=0.5)
    out = tmp_path / "many"
    assert main(["run", str(a), str(b), "--out", str(out), "--jobs", "2"]) == 0
    assert (out / "a" / "trajectory.csv").is_file() and (out / "b" / "trajectory.csv").is_file()


@pytest.mark.slow
def test_unprotected_figure_run_flags_incursions(tmp_path):
    out = tmp_path / "ns"
    assert main(["run", "case7_nosafety_figure.json", "--out", str(out)]) == 0
    assert json.loads((out / "summary.json").read_text())["incursions"]["count"] >= 1


def test_oracle_command(tmp_path, capsys):
    rec = tmp_path / "oracle.json"
    assert main(["oracle-lqr", "--json", str(rec)]) == 0
    assert "converged" in capsys.readouterr().out
    assert json.loads(rec.read_text())["converged"]


def test_oracle_reports_nonconvergence(capsys):
    assert main(["oracle-lqr", "--duration", "1.0"]) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "bastion", "check", str(tmp_path / "x.csv")],
                          capture_output=True, text=True)
    assert proc.returncode == 1 and "file not found" in proc.stderr
