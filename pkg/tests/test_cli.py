import csv
import io
import json

from compactcoding.cli import EXIT_ABORT, EXIT_CONFIG, EXIT_OK, main


def _write(tmp_path, text):
    p = tmp_path / "cfg.yaml"
    p.write_text(text)
    return str(p)


def test_simulate_to_file(tmp_path):
    cfg = _write(tmp_path, "trials: 2\nsymbols_per_trial: 8\n")
    out = tmp_path / "r.csv"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == EXIT_OK
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 2 and rows[0]["ber_total"] == "0"


def test_simulate_stdout_json(tmp_path, capsys):
    cfg = _write(tmp_path, "trials: 1\nsymbols_per_trial: 8\n")
    assert main(["simulate", "--config", cfg, "--format", "json", "--seed", "4"]) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data[0]["seed"] == 4


def test_sweep_command(capsys):
    code = main(["sweep", "--trials", "1", "--param", "channel.eta", "--values", "1,0.5"])
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [r["param_value"] for r in rows] == ["1", "0.5"]


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, "trials: 1\nwhatever: 3\n")
    assert main(["simulate", "--config", cfg]) == EXIT_CONFIG
    assert "whatever: unknown key" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG
    assert main(["sweep", "--param", "channel.nope", "--values", "1"]) == EXIT_CONFIG


def test_fail_on_abort(tmp_path):
    cfg = _write(tmp_path, "trials: 1\nsymbols_per_trial: 8\neve:\n  model: intercept_resend\noptions:\n  iv_length: 16\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o.csv")]) == EXIT_OK
    assert main(["simulate", "--config", cfg, "--fail-on-abort", "--out", str(tmp_path / "o.csv")]) == EXIT_ABORT


def test_validate_config(capsys):
    assert main(["validate-config"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["protocol"] == "three_stage"
