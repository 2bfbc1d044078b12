import copy
import csv
import hashlib
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from logconcave import __version__
from logconcave.cli import EXIT_FAIL, EXIT_INPUT, EXIT_OK, main
from logconcave.grid import BoxDomain, GridFunction
from logconcave.scenario import ScenarioError, bundled_scenarios, emit, load_scenario, run

GAUSS = {"label": "g", "potential": "x1^2/2", "domain": [[-8, 8]], "resolution": 161}


def _write(tmp_path, obj, name="sc.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def _scenario(checks, measures=(GAUSS,)):
    return {"version": "1", "measures": copy.deepcopy(list(measures)), "checks": checks}


def _cli(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


# --- loading -------------------------------------------------------------

def test_minimal_scenario_loads_runs_passes(tmp_path, capsys):
    path = _write(tmp_path, _scenario([{"kind": "logconcave", "params": {"measure": "g"}, "seed": 1}]))
    code, out, _ = _cli(["check", "--scenario", path], capsys)
    assert code == EXIT_OK
    assert "overall: PASS" in out


def test_undefined_label_is_named(tmp_path):
    path = _write(tmp_path, _scenario([{"kind": "logconcave", "params": {"measure": "nope"}, "seed": 1}]))
    with pytest.raises(ScenarioError) as e:
        load_scenario(path)
    assert "'nope'" in str(e.value)
    assert e.value.pointer == "/checks/0/params/measure"


def test_seed_required_for_sampled_check(tmp_path):
    path = _write(tmp_path, _scenario([{"kind": "logconcave", "params": {"measure": "g"}}]))
    with pytest.raises(ScenarioError) as e:
        load_scenario(path)
    assert "seed required" in str(e.value)
    assert e.value.pointer == "/checks/0"


@pytest.mark.parametrize("mutate, pointer", [
    (lambda s: s["measures"][0].update(resolution=4), "/measures/0/resolution"),
    (lambda s: s["measures"][0].update(domain=[[1, -1]]), "/measures/0/domain/0"),
    (lambda s: s["measures"][0].update(potential="x1^"), "/measures/0/potential"),
    (lambda s: s["measures"].append(copy.deepcopy(GAUSS)), "/measures/1/label"),
    (lambda s: s["checks"][0].update(kind="unknown"), "/checks/0/kind"),
    (lambda s: s["checks"][0]["params"].update(pairs=0), "/checks/0/params/pairs"),
    (lambda s: s.update(version="2"), "/version"),
])
def test_first_error_json_pointer(tmp_path, mutate, pointer):
    sc = _scenario([{"kind": "logconcave", "params": {"measure": "g"}, "seed": 1}])
    mutate(sc)
    with pytest.raises(ScenarioError) as e:
        load_scenario(_write(tmp_path, sc))
    assert e.value.pointer == pointer


def test_invalid_json_and_missing_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, out, err = _cli(["check", "--scenario", str(bad)], capsys)
    assert code == EXIT_INPUT and out == "" and "invalid JSON" in err
    code, _, err = _cli(["check", "--scenario", str(tmp_path / "missing.json")], capsys)
    assert code == EXIT_INPUT and "not found" in err


def test_grid_file_with_hash(tmp_path, capsys):
    x = np.linspace(-6, 6, 121)
    g = GridFunction(BoxDomain((-6.0,), (6.0,)), np.exp(-x * x / 2))
    blob = g.to_bytes()
    (tmp_path / "g.bin").write_bytes(blob)
    m = {"label": "file", "grid_file": "g.bin", "sha256": hashlib.sha256(blob).hexdigest(),
         "domain": [[-6, 6]], "resolution": 121}
    sc = _scenario([{"kind": "logconcave", "params": {"measure": "file"}, "seed": 1}], [m])
    code, _, _ = _cli(["check", "--scenario", _write(tmp_path, sc)], capsys)
    assert code == EXIT_OK
    sc["measures"][0]["sha256"] = "0" * 64
    code, _, err = _cli(["check", "--scenario", _write(tmp_path, sc)], capsys)
    assert code == EXIT_INPUT and "hash mismatch" in err


# --- running -------------------------------------------------------------

def test_empty_check_list_passes_with_warning(tmp_path, capsys):
    code, out, err = _cli(["check", "--scenario", _write(tmp_path, _scenario([]))], capsys)
    assert code == EXIT_OK
    assert "overall: PASS (0 checks" in out
    assert "no checks" in err


def test_check_errors_are_captured(tmp_path):
    # marginal over an axis the 1D measure lacks: error is local to the check
    sc = _scenario([
        {"kind": "marginal", "params": {"measure": "g", "keep": [3]}, "seed": 1},
        {"kind": "logconcave", "params": {"measure": "g"}, "seed": 2},
    ])
    rep = run(load_scenario(_write(tmp_path, sc))).to_dict(timings=False)
    first, second = rep["checks"]
    assert first["verdict"] == "inconclusive"
    assert any(n.startswith("error:") for n in first["notes"])
    assert second["verdict"] == "pass"
    assert rep["overall"] == "inconclusive"


def test_bundled_scenarios_are_listed():
    assert {"prekopa_gaussian.json", "bimodal_counterexample.json", "gaussian_calculus.json",
            "closure_transport.json"} <= set(bundled_scenarios())


@pytest.mark.parametrize("name, code", [
    ("prekopa_gaussian", EXIT_OK), ("gaussian_calculus", EXIT_OK), ("closure_transport", EXIT_OK),
    ("bimodal_counterexample", EXIT_FAIL),
])
def test_bundled_scenario_verdicts(name, code, capsys):
    got, out, _ = _cli(["check", "--scenario", name, "--format", "json"], capsys)
    assert got == code
    rep = json.loads(out)
    if code == EXIT_FAIL:
        assert rep["overall"] == "fail"
        failed = [c for c in rep["checks"] if c["verdict"] == "fail"]
        assert failed and all(c["witness"] for c in failed)
    else:
        assert all(c["verdict"] == "pass" for c in rep["checks"])


def test_report_fields_carry_provenance():
    rep = run(load_scenario("prekopa_gaussian")).to_dict()
    assert rep["toolkit_version"] == __version__
    assert len(rep["scenario_digest"]) == 64
    assert set(rep["timings"]) == {"setup_seconds", "checks_seconds", "total_seconds"}
    for i, c in enumerate(rep["checks"]):
        assert c["index"] == i
        for key in ("verdict", "worst_margin", "tolerance", "samples", "witness", "notes", "details"):
            assert key in c


def _strip_timings(text):
    obj = json.loads(text)
    obj.pop("timings", None)
    return json.dumps(obj, sort_keys=True)


@pytest.mark.parametrize("name", ["prekopa_gaussian", "bimodal_counterexample"])
def test_determinism_across_runs_and_jobs(name, tmp_path, capsys):
    outs = []
    for jobs in ("1", "1", "4"):
        path = tmp_path / f"r{len(outs)}.json"
        assert main(["check", "--scenario", name, "--format", "json", "--jobs", jobs, "--out", str(path)]) in (0, 1)
        outs.append(_strip_timings(path.read_text()))
    assert outs[0] == outs[1] == outs[2]
    capsys.readouterr()


def test_seed_override_changes_only_seeds(capsys):
    code, out, _ = _cli(["check", "--scenario", "prekopa_gaussian", "--format", "json", "--seed-override", "99"],
                        capsys)
    assert code == EXIT_OK
    seeds = {c["seed"] for c in json.loads(out)["checks"] if c["seed"] is not None}
    assert seeds == {99}


# --- emission and verbs --------------------------------------------------

def test_csv_and_summary_formats(capsys):
    code, out, _ = _cli(["check", "--scenario", "bimodal_counterexample", "--format", "csv"], capsys)
    assert code == EXIT_FAIL
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["verdict"] for r in rows] == ["fail", "fail"]
    assert all(json.loads(r["witness"]) for r in rows)
    code, out, _ = _cli(["check", "--scenario", "bimodal_counterexample"], capsys)
    assert "overall: FAIL" in out and "FAIL" in out.splitlines()[1]


def test_emit_rejects_unknown_format():
    rep = run(load_scenario(_scenario_path_prekopa()))
    with pytest.raises(ValueError):
        emit(rep, "xml")


def _scenario_path_prekopa():
    return "prekopa_gaussian"


def test_sweep_over_delta(capsys):
    code, out, _ = _cli(["sweep", "--scenario", "prekopa_gaussian", "--check", "smoothed gaussian at delta 0.49",
                         "--param", "delta", "--values", "0.3,0.49,0.51"], capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["verdict"] for r in rows] == ["pass", "pass", "fail"]
    assert code == EXIT_FAIL
    code, out, _ = _cli(["sweep", "--scenario", "prekopa_gaussian", "--check", "6", "--param", "delta",
                         "--range", "0.1:0.4:4"], capsys)
    assert code == EXIT_OK and len(out.strip().splitlines()) == 5


def test_sweep_unknown_check(capsys):
    code, _, err = _cli(["sweep", "--scenario", "prekopa_gaussian", "--check", "zz", "--param", "delta",
                         "--values", "0.3"], capsys)
    assert code == EXIT_INPUT and "no check" in err


def test_fmt_normalises(tmp_path, capsys):
    path = _write(tmp_path, _scenario([{"seed": 1, "params": {"measure": "g"}, "kind": "logconcave"}]))
    code, out, _ = _cli(["fmt", "--scenario", path], capsys)
    assert code == EXIT_OK
    assert json.loads(out) == json.loads(open(path).read())
    assert out == json.dumps(json.loads(out), indent=2, sort_keys=True) + "\n"


def test_version_and_usage_errors(capsys):
    code, out, _ = _cli(["version"], capsys)
    assert code == EXIT_OK and out.strip() == __version__
    for argv in ([], ["frobnicate"], ["check"], ["check", "--scenario", "x", "--format", "xml"],
                 ["check", "--scenario", "prekopa_gaussian", "--jobs", "0"]):
        code, _, err = _cli(argv, capsys)
        assert code == EXIT_INPUT, argv
        assert err


def test_module_entry_point_exit_codes():
    def call(*args):
        return subprocess.run([sys.executable, "-m", "logconcave", *args], capture_output=True, text=True)
    assert call("version").returncode == 0
    r = call("check", "--scenario", "bimodal_counterexample")
    assert r.returncode == 1 and "overall: FAIL" in r.stdout
    r = call("check", "--scenario", "does-not-exist")
    assert r.returncode == 2 and r.stdout == "" and "error" in r.stderr
