import json
import os

import pytest

from marcusflow import cli, io
from marcusflow.errors import ConfigError


def _write(path, text):
    path.write_text(text)
    return str(path)


def test_empty_seed_list_is_config_error(tmp_path, capsys):
    p = _write(tmp_path / "s.yaml", "name: s\nexperiment: trivial_bundle\nseeds: []\n")
    with pytest.raises(ConfigError) as ei:
        cli.load_scenario(p)
    assert ei.value.field == "seeds" and ei.value.line == 3
    assert cli.main(["run", p, "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "line 3" in err and "seeds" in err


def test_unknown_param_is_config_error(tmp_path):
    p = _write(tmp_path / "s.yaml",
               "name: s\nexperiment: trivial_bundle\nseeds: [1]\nparams:\n  bogus: 2\n")
    with pytest.raises(ConfigError) as ei:
        cli.load_scenario(p)
    assert ei.value.field == "params.bogus" and ei.value.line == 5


def test_unknown_experiment_and_bad_type(tmp_path):
    p = _write(tmp_path / "a.yaml", "name: a\nexperiment: nothing\nseeds: [1]\n")
    with pytest.raises(ConfigError):
        cli.load_scenario(p)
    p = _write(tmp_path / "b.yaml",
               "name: b\nexperiment: trivial_bundle\nseeds: [1]\nparams:\n  tol: abc\n")
    with pytest.raises(ConfigError) as ei:
        cli.load_scenario(p)
    assert ei.value.field == "params.tol"


def test_empty_suite_directory_succeeds(tmp_path):
    d = tmp_path / "empty"
    d.mkdir()
    out = tmp_path / "o"
    assert cli.main(["suite", str(d), "--out", str(out)]) == 0
    summary = io.read_json(str(out / "suite_summary.json"))
    assert summary["count"] == 0 and summary["passed"] is True


def test_missing_suite_directory_is_config_error(tmp_path):
    assert cli.main(["suite", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 2


def test_failing_scenario_does_not_stop_suite(tmp_path):
    d = tmp_path / "sc"
    d.mkdir()
    _write(d / "a_fail.yaml",
           "name: strict\nexperiment: trivial_bundle\nseeds: [4]\nparams:\n  tol: 1.0e-20\n")
    _write(d / "b_bad.yaml", "name: broken\nexperiment: trivial_bundle\nseeds: []\n")
    _write(d / "c_ok.yaml", "name: ok\nexperiment: trivial_bundle\nseeds: [4]\n")
    out = tmp_path / "o"
    assert cli.main(["suite", str(d), "--out", str(out)]) == 1
    summary = io.read_json(str(out / "suite_summary.json"))
    assert summary["count"] == 3
    by_file = {e["file"]: e for e in summary["scenarios"]}
    assert by_file["a_fail.yaml"]["passed"] is False
    assert "config error" in by_file["b_bad.yaml"]["error"]
    assert by_file["c_ok.yaml"]["passed"] is True


def test_run_writes_report_and_manifest(tmp_path):
    p = _write(tmp_path / "s.yaml", "name: tb\nexperiment: trivial_bundle\nseeds: [4]\n")
    out = tmp_path / "o"
    assert cli.main(["run", p, "--out", str(out)]) == 0
    rdir = out / "tb"
    manifest = io.read_json(str(rdir / "manifest.json"))["files"]
    assert "report.json" in manifest
    for name, dig in manifest.items():
        assert io.file_digest(str(rdir / name)) == dig
    report = io.read_json(str(rdir / "report.json"))
    assert report["passed"] is True


def test_multiple_seeds_get_subdirectories(tmp_path):
    p = _write(tmp_path / "s.yaml", "name: tb\nexperiment: trivial_bundle\nseeds: [1, 2]\n")
    rep = cli.run_scenario(cli.load_scenario(p), str(tmp_path / "o"))
    assert len(rep["runs"]) == 2
    assert (tmp_path / "o" / "tb" / "seed_1").is_dir()
    assert (tmp_path / "o" / "tb" / "seed_2").is_dir()


def test_digest_stable_across_runs(tmp_path):
    p = _write(tmp_path / "s.yaml", "name: rot\nexperiment: rotation_decomposition\nseeds: [0]\n")
    sc = cli.load_scenario(p)
    r1 = cli.run_scenario(sc, str(tmp_path / "o1"))
    r2 = cli.run_scenario(sc, str(tmp_path / "o2"))
    assert r1["digest"] == r2["digest"]


def test_seed_override_changes_digest(tmp_path):
    p = _write(tmp_path / "s.yaml", "name: tb\nexperiment: trivial_bundle\nseeds: [4]\n")
    sc = cli.load_scenario(p)
    r1 = cli.run_scenario(sc, str(tmp_path / "o1"))
    r2 = cli.run_scenario(sc, str(tmp_path / "o2"), seed_override=5)
    assert r1["digest"] != r2["digest"]
    assert r2["overrides"]["seed"] == 5


def test_timing_fields_do_not_enter_digest():
    rep = {"runs": [{"wall_time": 1.0, "checks": [
        {"name": "t", "kind": "timing", "value": 3.0, "passed": True}]}]}
    other = json.loads(json.dumps(rep))
    other["runs"][0]["wall_time"] = 9.0
    other["runs"][0]["checks"][0]["value"] = 99.0
    assert cli.report_digest(rep) == cli.report_digest(other)


def test_list_catalog_and_schema(capsys):
    assert cli.main(["list-catalog", "experiments"]) == 0
    listing = json.loads(capsys.readouterr().out)
    assert "rotation_decomposition" in listing
    assert cli.main(["emit-schema"]) == 0
    schema = json.loads(capsys.readouterr().out)
    assert "seeds" in schema["required"]


def test_shipped_scenarios_validate():
    here = os.path.join(os.path.dirname(__file__), "..", "scenarios")
    files = sorted(f for f in os.listdir(here) if f.endswith(".yaml"))
    assert len(files) == 11
    for f in files:
        cli.load_scenario(os.path.join(here, f))
