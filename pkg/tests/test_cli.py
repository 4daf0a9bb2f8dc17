import csv
import json
import subprocess
import sys

import pytest

from srl import cli


def test_empty_config_gives_defaults(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("")
    cfg = cli.load_config(p)
    assert cfg == cli.RunConfig()
    assert cfg.N == 3 and cfg.eps_cap == 0.3 and len(cfg.eps_list) == 4


@pytest.mark.parametrize("data", [
    {"N": 5},
    {"eps_list": [0.0, 0.1, 0.2, 0.3]},
    {"eps_list": [0.1, 0.2, 0.3]},
    {"eps_list": [0.1, 0.1, 0.2, 0.3]},
    {"eps_list": [0.1, 0.2, 0.3, 0.5]},
    {"sphere_resolution": 4},
    {"eps_cap": 1.5},
    {"n_starts": 0},
    {"tolerances": {"c_q": -1}},
    {"colour": "blue"},
])
def test_invalid_configs_are_rejected(tmp_path, data):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(data))
    with pytest.raises(cli.ConfigError):
        cli.load_config(p)


@pytest.mark.parametrize("text", ["[1, 2]", "{not json"])
def test_malformed_files_are_rejected(tmp_path, text):
    p = tmp_path / "c.json"
    p.write_text(text)
    with pytest.raises(cli.ConfigError):
        cli.load_config(p)


def test_missing_config_file_exits_3(tmp_path, capsys):
    assert cli.main(["--command", "constants", "--config", str(tmp_path / "nope.json")]) == 3
    assert "config error" in capsys.readouterr().err


def test_config_hash_ignores_output_dir():
    a = cli.RunConfig(out_dir="x")
    b = cli.RunConfig(out_dir="y")
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != cli.RunConfig(seed=1).config_hash()
    assert cli.RunConfig.from_dict(json.loads(a.to_json())) == a


def test_constants_command(tmp_path, capsys):
    status = cli.main(["--command", "constants", "--out", str(tmp_path)])
    assert status == 0
    report = json.loads((tmp_path / "constants.json").read_text())
    assert report["pass"] and report["trusted"]
    assert report["config_hash"] == cli.RunConfig().config_hash()
    rows = {r["name"]: r for r in report["results"]}
    assert rows["c(2) closed form"]["value"] == pytest.approx(1.0, abs=1e-12)
    assert rows["c(4) theta-average vs closed form"]["expected"] == pytest.approx(1.5, abs=1e-12)
    assert rows["c(6) theta-average vs closed form"]["expected"] == pytest.approx(2.5, abs=1e-12)
    assert {"S_2^G space-time quadrature", "S_1^G space-time quadrature"} <= set(rows)
    assert all(r["pass"] for r in report["results"])
    out = capsys.readouterr().out
    assert out.count("PASS") == len(rows) and "FAIL" not in out


def test_failing_tolerance_gives_exit_1(tmp_path):
    p = tmp_path / "c.json"
    # the sphere quadrature of the benchmark is accurate to about 6e-4
    p.write_text(json.dumps({"tolerances": {"stein_tomas_benchmark": 1e-6}}))
    out = tmp_path / "out"
    assert cli.main(["--command", "strichartz", "--config", str(p), "--out", str(out)]) == 1
    report = json.loads((out / "strichartz.json").read_text())
    assert report["pass"] is False
    failed = [r["name"] for r in report["results"] if not r["pass"]]
    assert failed == ["constant function quotient on S^2"]
    assert report["config"]["tolerances"] == {"stein_tomas_benchmark": 1e-6}


def test_unwritable_output_exits_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["--command", "constants", "--out", str(blocker / "sub")]) == 3


def test_bad_dimension_flag_exits_3(tmp_path):
    assert cli.main(["--command", "constants", "--n", "4", "--out", str(tmp_path)]) == 3


def test_unknown_command_is_an_argparse_error():
    with pytest.raises(SystemExit):
        cli.main(["--command", "everything"])


def test_run_rejects_unknown_command():
    with pytest.raises(cli.ConfigError):
        cli.run("nope", cli.RunConfig())


def test_optimize_writes_figure(tmp_path):
    status = cli.main(["--command", "optimize", "--n", "2", "--quick", "--out", str(tmp_path)])
    assert status == 0
    pngs = sorted(tmp_path.glob("*.png"))
    assert pngs and all(p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n" for p in pngs)
    report = json.loads((tmp_path / "optimize.json").read_text())
    assert report["config"]["N"] == 2 and report["config"]["quick"] is True


def test_expansion_writes_csv_and_figure(tmp_path):
    status = cli.main(["--command", "expansion", "--n", "2", "--quick", "--out", str(tmp_path)])
    assert status == 0
    csvs = sorted(tmp_path.glob("*.csv"))
    assert len(csvs) == 2
    for p in csvs:
        with p.open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0][:2] == ["eps2", "log_quotient"]
        assert len(rows) - 1 == len(cli.DEFAULT_EPS)
    assert list(tmp_path.glob("*.png"))


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "srl", "--command", "constants", "--out", str(tmp_path)],
                          capture_output=True, text=True, timeout=600)
    assert proc.returncode == 0, proc.stderr
    assert "exit 0" in proc.stdout
