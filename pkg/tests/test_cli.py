import json

import pytest

from ppalab import cli


def test_run_writes_report(tmp_path, capsys):
    assert cli.main(["run", "--suite", "propagators", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report-propagators.json").read_text())
    assert report["suite"] == "propagators" and report["passed"]
    row = report["checks"][0]
    assert set(row) == {"check_id", "paper_anchor", "residual", "tolerance", "pass"}
    assert "PASS" in capsys.readouterr().out


def test_failing_check_exit_status(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"tolerances": {"propagators": 0.0}}))
    assert cli.main(["run", "--suite", "propagators", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    report = json.loads((tmp_path / "report-propagators.json").read_text())
    assert not report["passed"]


@pytest.mark.parametrize("content", ['{"beta": -1.0}', '{"beta": 0}', "{not json", '{"lattice": {"n_t": 2}}'])
def test_config_errors(tmp_path, content, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(content)
    assert cli.main(["run", "--suite", "propagators", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert cli.main(["run", "--suite", "propagators", "--config", str(tmp_path / "nope.json")]) == 2


def test_unknown_suite():
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", "--suite", "nonsense"])
    assert exc.value.code == 2


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["run", "--suite", "propagators", "--out", str(blocker / "sub")]) == 2


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("PPALAB_OUT", str(tmp_path / "env"))
    assert cli.main(["run", "--suite", "propagators"]) == 0
    assert (tmp_path / "env" / "report-propagators.json").exists()


def test_plot_thermal_mass(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("PPALAB_OUT", str(tmp_path))
    assert cli.main(["plot", "--target", "thermal-mass-vs-beta"]) == 0
    lines = (tmp_path / "thermal-mass-vs-beta.csv").read_text().splitlines()
    assert lines[0] == "beta,d_coincidence,m2_beta,m2_beta_times_beta2"
    assert len(lines) == 5
    assert all(abs(float(l.split(",")[3]) - 1.0) < 1e-3 for l in lines[1:])


def test_same_seed_same_bytes(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["run", "--suite", "moller", "--seed", "7", "--out", str(tmp_path / d)]) == 0
    for name in ("report-moller.json", "neumann-decay.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
