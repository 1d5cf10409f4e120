import csv
import io
import json
import re
import subprocess
import sys

import pytest

from opekit import cli
from opekit.cli import RunConfig
from opekit.recursion import NumericDiagnostic

PTS = "[[0.2,0,0,0],[0,0,0,0],[1,0,0,0]]"
REMAINDER = ["remainder", "--ops", "phi,phi,phi", "--target", "phi", "--points", PTS,
             "--split", "2", "--dmax", "4"]


def run(argv, capsys):
    code = cli.run(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def parse_csv(text):
    lines = text.splitlines()
    assert lines[0].startswith("# ope-kit ")
    assert lines[1].startswith("# config ")
    rows = list(csv.reader(io.StringIO("\n".join(lines[2:]))))
    return json.loads(lines[1][len("# config "):]), rows[0], rows[1:]


def test_remainder_csv_schema(capsys):
    code, out, _ = run(REMAINDER, capsys)
    assert code == 0
    cfg, header, rows = parse_csv(out)
    assert header == ["D", "R", "abs_R", "bound"]
    assert [int(r[0]) for r in rows] == list(range(0, 5))
    for r in rows:
        assert float(r[2]) == abs(float(r[1]))
    # every quadrature setting is echoed, defaults included
    assert {"n_samples", "seed", "batch_size", "strict", "workers"} <= set(cfg["quad"])
    assert cfg["ops"] == ["phi", "phi", "phi"]


def test_output_is_deterministic(capsys, tmp_path):
    a = run(REMAINDER + ["--seed", "5"], capsys)[1]
    b = run(REMAINDER + ["--seed", "5"], capsys)[1]
    assert a == b
    path = tmp_path / "out.csv"
    assert run(REMAINDER + ["-o", str(path)], capsys)[0] == 0
    # the config line records the output path; the data rows are identical
    assert path.read_text().splitlines()[2:] == run(REMAINDER, capsys)[1].splitlines()[2:]


def test_config_line_reproduces_the_run(capsys, tmp_path):
    out = run(REMAINDER, capsys)[1]
    cfg_line = out.splitlines()[1][len("# config "):]
    path = tmp_path / "cfg.json"
    path.write_text(cfg_line)
    again = run(["remainder", "--config", str(path)], capsys)[1]
    assert again == out


def test_run_config_round_trip():
    cfg = RunConfig(command="coeff", ops=["phi", "phi^2"], target="phi", points=[[0, 0, 0, 0], [1, 0, 0, 0]],
                    seed=9, extra={"reference": 0})
    assert RunConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises((ValueError, TypeError)):
        RunConfig.from_dict({"command": "coeff", "bogus": 1})


def test_parse_error_reports_byte_offset(capsys):
    code, _, err = run(["coeff", "--ops", "phi,d[1,2]phi", "--points", "[[0,0,0,0],[1,0,0,0]]"], capsys)
    assert code == 2
    assert "byte" in err


def test_unknown_flag_and_missing_arguments(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.run(["remainder", "--no-such-flag"])
    assert exc.value.code == 2
    code, _, err = run(["remainder", "--ops", "phi,phi,phi", "--points", PTS], capsys)
    assert code == 2 and "split" in err


def test_numeric_diagnostic_exit_code(capsys, monkeypatch):
    def boom(cfg):
        raise NumericDiagnostic("variance estimate unstable")

    monkeypatch.setitem(cli.HANDLERS, "first-order", boom)
    code, _, err = run(["first-order", "--ops", "phi,phi,phi,phi", "--points", PTS], capsys)
    assert code == 3 and "numerical diagnostic" in err


def test_json_format_and_other_commands(capsys):
    code, out, _ = run(["bounds", "--ops", "phi,phi,phi", "--target", "phi", "--points", PTS,
                        "--split", "2", "--dmax", "3", "--format", "json"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["columns"] == ["D", "xi", "bound"] and len(doc["rows"]) == 4
    code, out, _ = run(["gamma", "--masses", "0.01,0.001", "--L", "1"], capsys)
    assert code == 0
    _, header, rows = parse_csv(out)
    assert header == ["m", "log_L2m2", "gamma"] and len(rows) == 2
    code, out, _ = run(["coeff", "--ops", "phi,phi", "--target", "phi^2",
                        "--points", "[[0,0,0,0],[1,0,0,0]]"], capsys)
    assert code == 0


def test_verify_subcommand_json():
    proc = subprocess.run([sys.executable, "-m", "opekit.cli", "verify", "--suite", "3"],
                          capture_output=True, text=True, timeout=600)
    assert proc.returncode == 0
    doc = json.loads(proc.stdout)
    assert doc["results"][0]["number"] == 3
    assert re.match(r"\[(PASS|FAIL)\]\s+3 ", proc.stderr)
