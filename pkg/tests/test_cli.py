from __future__ import annotations

import json
import subprocess
import sys

import pytest

from conftest import small_spec

from ionthresh import cli
from ionthresh.config import ConfigError, validate
from ionthresh.experiments import csv_schema


def small_config(experiment="spectrum", **extra):
    cfg = {"config_version": 1, "experiment": experiment, "seed": 3, "model": small_spec().to_dict()}
    if experiment == "thresholds":
        cfg["schedules"] = {"R": [1.0, 2.0, 3.0, 4.0]}
    if experiment == "spectrum":
        cfg["schedules"] = {"L": [1, 2]}
    cfg.update(extra)
    return cfg


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


@pytest.mark.parametrize("mutate, path", [
    (lambda c: c.update(bogus=1), "bogus"),
    (lambda c: c["model"]["grid"].update(spacing=1.0), "model.grid.spacing"),
    (lambda c: c["model"]["potentials"]["v"].update(depth=1.0), "model.potentials.v.depth"),
    (lambda c: c.update(options={"nope": 1}), "options.nope"),
    (lambda c: c.update(config_version=2), "config_version"),
    (lambda c: c.update(experiment="other"), "experiment"),
    (lambda c: c["schedules"].update(R=[]), "schedules.R"),
    (lambda c: c.update(seed=-1), "seed"),
])
def test_config_errors_name_the_field(mutate, path):
    cfg = small_config("thresholds")
    mutate(cfg)
    with pytest.raises(ConfigError) as exc:
        validate(cfg)
    assert exc.value.path == path


def test_required_schedule():
    cfg = small_config("thresholds")
    del cfg["schedules"]
    with pytest.raises(ConfigError, match="schedules.R"):
        validate(cfg)


def test_config_error_exit_code(tmp_path, capsys):
    cfg = small_config(bogus=True)
    assert cli.main(["run", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2
    assert "bogus" in capsys.readouterr().err
    assert cli.main(["run", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["run", "--out", str(tmp_path / "o")]) == 2


def test_bad_axis_and_jobs(tmp_path, monkeypatch):
    p = write(tmp_path, small_config())
    assert cli.main(["sweep", "--config", p, "--out", str(tmp_path / "o"), "--axis", "mu"]) == 2
    selftest = write(tmp_path, {"config_version": 1, "experiment": "fock-selftest"}, "f.json")
    assert cli.main(["sweep", "--config", selftest, "--out", str(tmp_path / "o"), "--axis", "L"]) == 2
    monkeypatch.setenv("IONTHRESH_JOBS", "zero")
    assert cli.main(["run", "--config", p, "--out", str(tmp_path / "o")]) == 2
    monkeypatch.setenv("IONTHRESH_JOBS", "1")
    assert cli.main(["run", "--config", p, "--out", str(tmp_path / "o"), "--jobs", "0"]) == 2


def test_run_writes_manifest_and_csv(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["run", "--config", write(tmp_path, small_config()), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "complete" and man["seed"] == 3 and man["seed_source"] == "config"
    assert set(man["files"]) == {"spectrum.csv", "report.json"}
    header = (out / "spectrum.csv").read_text().splitlines()[0]
    assert header.split(",") == csv_schema()["tables"]["spectrum"]["columns"]
    assert all(r["status"] == "done" and r["sha256"] for r in man["jobs"].values())


def test_seed_override_recorded(tmp_path):
    out = tmp_path / "o"
    p = write(tmp_path, small_config())
    assert cli.main(["run", "--config", p, "--out", str(out), "--seed-override", "99"]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 99 and man["seed_source"] == "override"


def test_csv_identical_across_worker_counts(tmp_path):
    p = write(tmp_path, small_config())
    assert cli.main(["run", "--config", p, "--out", str(tmp_path / "a"), "--jobs", "1"]) == 0
    assert cli.main(["sweep", "--config", p, "--out", str(tmp_path / "b"), "--jobs", "2", "--axis", "L"]) == 0
    assert (tmp_path / "a" / "spectrum.csv").read_bytes() == (tmp_path / "b" / "spectrum.csv").read_bytes()


def test_sweep_resumes(tmp_path, capsys):
    p = write(tmp_path, small_config())
    out = tmp_path / "o"
    assert cli.main(["sweep", "--config", p, "--out", str(out)]) == 0
    first = (out / "spectrum.csv").read_bytes()
    man = json.loads((out / "manifest.json").read_text())
    victim = out / man["jobs"]["spectrum_L=2"]["file"]
    victim.unlink()
    capsys.readouterr()
    assert cli.main(["sweep", "--config", p, "--out", str(out)]) == 0
    err = capsys.readouterr().err
    assert "resuming" in err
    assert err.count("done   ") == 1 and "spectrum_L=2" in err
    assert (out / "spectrum.csv").read_bytes() == first


def test_sweep_refuses_other_config(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["sweep", "--config", write(tmp_path, small_config()), "--out", str(out)]) == 0
    other = write(tmp_path, small_config(seed=4), "other.json")
    assert cli.main(["sweep", "--config", other, "--out", str(out)]) == 2


def failing_decay():
    # the Combes-Thomas precondition fails for a cut far above the spectrum
    return small_config("decay", schedules={"L": [1], "beta": [0.1], "lambda": [5.0]},
                        options={"ct_R": 2.0, "expect": "delocalized"})


def test_partial_failure_exit_codes(tmp_path):
    p = write(tmp_path, failing_decay())
    assert cli.main(["sweep", "--config", p, "--out", str(tmp_path / "s")]) == 5
    man = json.loads((tmp_path / "s" / "manifest.json").read_text())
    assert man["status"] == "partial"
    failed = [k for k, r in man["jobs"].items() if r["status"] == "failed"]
    assert failed == ["ct_R=2.0_beta=0.1_cut=5.0"]
    assert "precondition" in man["jobs"][failed[0]]["error"]
    assert cli.main(["run", "--config", p, "--out", str(tmp_path / "r")]) == 3


def test_check_failure_exit_code(tmp_path):
    # the small box is far too tight for Sigma = tau, so the comparison fails
    cfg = small_config("thresholds", options={"relative_tolerance": 1e-12})
    assert cli.main(["run", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 4
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["status"] == "check-failed"
    assert not man["checks"]["relative_discrepancy"]["passed"]
    assert (tmp_path / "o" / "thresholds.csv").exists()


def test_report_stable_and_verified(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["run", "--config", write(tmp_path, small_config()), "--out", str(out)]) == 0
    capsys.readouterr()
    assert cli.main(["report", str(out)]) == 0
    first = capsys.readouterr().out
    assert cli.main(["report", str(out), "--write"]) == 0
    assert capsys.readouterr().out == first == (out / "report.txt").read_text()
    assert "checks:" in first and "residuals" in first
    csv_path = out / "spectrum.csv"
    csv_path.write_text(csv_path.read_text() + "tampered\n")
    assert cli.main(["report", str(out)]) == 2


def test_fock_selftest_experiment(tmp_path):
    cfg = {"config_version": 1, "experiment": "fock-selftest", "options": {"n_modes": [2], "n_max": [2]}}
    out = tmp_path / "o"
    assert cli.main(["run", "--config", write(tmp_path, cfg), "--out", str(out)]) == 0
    rows = (out / "fock-selftest.csv").read_text().splitlines()
    assert rows[0] == "check,n_modes,n_max,value,tolerance,passed"
    assert all(r.endswith(",true") for r in rows[1:])


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "ionthresh", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "ionthresh" in r.stdout
