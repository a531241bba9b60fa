import json
import subprocess
import sys

import pytest

from brakeorb.cli import EXIT_ASSERTION, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_OK, main
from brakeorb.runner import RunConfig


def _write(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc) if isinstance(doc, dict) else doc)
    return str(path)


def test_connection_mode(tmp_path):
    cfg = _write(tmp_path, {"mode": "connection", "potential": {"kind": "ScalarQuartic"}})
    out = tmp_path / "out"
    assert main(["--threads", "1", "--out", str(out), "run", cfg]) == EXIT_OK
    man = json.loads((out / "manifest.json").read_text())
    assert man["residuals"]["c0"] == pytest.approx(0.942809, abs=1e-3)
    assert man["status"] == "pass" and man["checks"]["gradient_J_R"]["passed"]
    assert man["config"]["params"]["h"] == 0.01  # defaults are materialized
    assert (out / "connection_plus.bin").exists()


def test_manifest_is_deterministic(tmp_path):
    cfg = _write(tmp_path, {"mode": "brake", "potential": {"kind": "ScalarQuartic"},
                            "params": {"T": 12.0, "h": 0.02}})
    for name in ("a", "b"):
        assert main(["--threads", "1", "--seed", "7", "--out", str(tmp_path / name), "run", cfg]) == EXIT_OK
    assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()


def test_verify_a_stored_brake_orbit(tmp_path):
    cfg = _write(tmp_path, {"mode": "brake", "potential": {"kind": "ScalarQuartic"},
                            "params": {"T": 12.0, "h": 0.02}})
    assert main(["--out", str(tmp_path / "run"), "run", cfg]) == EXIT_OK
    field = str(tmp_path / "run" / "brake_quarter.bin")
    assert main(["--out", str(tmp_path / "verify"), "verify", field]) == EXIT_OK
    man = json.loads((tmp_path / "verify" / "manifest.json").read_text())
    assert man["residuals"]["source_mode"] == "brake"


def test_malformed_json_exits_2(tmp_path):
    assert main(["run", _write(tmp_path, "{not json")]) == EXIT_CONFIG


@pytest.mark.parametrize("doc", [
    {"mode": "nope"},
    {"mode": "brake", "potential": {"kind": "ScalarQuartic"}},  # T missing
    {"mode": "brake", "potential": {"kind": "ScalarQuartic"}, "params": {"T": 10, "bogus": 1}},
    {"mode": "connection", "potential": {"kind": "Unknown"}},
    {"mode": "connection", "minimize": {"grad_tol": -1}},
])
def test_config_errors_exit_2(tmp_path, doc):
    assert main(["--out", str(tmp_path / "o"), "run", _write(tmp_path, doc)]) == EXIT_CONFIG


def test_short_strip_exits_3(tmp_path):
    cfg = _write(tmp_path, {"mode": "strip", "potential": {"kind": "TwoChannel"}, "params": {"L": 2.0}})
    assert main(["--out", str(tmp_path / "o"), "run", cfg]) == EXIT_CONVERGENCE


def test_failed_check_exits_4(tmp_path, capsys):
    cfg = _write(tmp_path, {"mode": "brake", "potential": {"kind": "ScalarQuartic"},
                            "params": {"T": 12.0, "h": 0.02, "energy_tol": 1e-12}})
    assert main(["--out", str(tmp_path / "o"), "run", cfg]) == EXIT_ASSERTION
    assert "energy_residual" in capsys.readouterr().err
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["failed_checks"] == ["energy_residual"]


def test_verify_missing_file_exits_2(tmp_path):
    assert main(["verify", str(tmp_path / "missing.bin")]) == EXIT_CONFIG


def test_module_entry_point(tmp_path):
    cfg = _write(tmp_path, "[1, 2")
    proc = subprocess.run([sys.executable, "-m", "brakeorb", "run", cfg], capture_output=True, text=True)
    assert proc.returncode == EXIT_CONFIG and "malformed JSON" in proc.stderr


def test_run_config_echo():
    cfg = RunConfig.from_json({"mode": "sweepL", "potential": {"kind": "TwoChannel"},
                               "params": {"L_list": [20, 40, 80]}})
    doc = cfg.to_json()
    assert doc["params"]["Y"] == 10.0 and doc["minimize"]["grad_tol"] == 1e-11
