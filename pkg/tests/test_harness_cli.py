import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from zo_residual import harness
from zo_residual.cli import main
from zo_residual.errors import ConfigError, IncompatibleComparisonError

BASE = {
    "schema_version": 1,
    "name": "tiny",
    "problem": {"kind": "qp", "d": 6, "seed": 1},
    "estimator": "residual",
    "schedule": {"regime": "manual", "eta": 1e-3, "delta": 0.1},
    "T": 200,
    "n_trials": 3,
    "seed": 4,
    "threshold": {"relative": 0.5},
}


def cfg(**over):
    doc = json.loads(json.dumps(BASE))
    doc.update(over)
    return {k: v for k, v in doc.items() if v is not None}


def write(tmp_path, doc, name="c.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(doc))
    return str(p)


def test_query_grid_and_alignment():
    g = harness.query_grid(1000)
    assert g[0] == 1 and g[-1] == 1000 and np.all(np.diff(g) > 0)
    cum = np.array([2, 3, 4, 5])
    metric = np.array([np.nan, 7.0, np.nan, 5.0])
    assert harness.align_curve(cum, metric, 9.0, np.array([1, 2, 3, 4, 5, 6])) == [9.0, 9.0, 7.0, 7.0, 5.0, None]


def test_run_experiment_outputs(tmp_path):
    s = harness.run_experiment(harness.ExperimentConfig.from_dict(cfg()), output_dir=tmp_path)
    out = tmp_path / "tiny"
    for f in ("summary.json", "curve.csv", "problem.json", "config.yaml", "traces/trial_0002.csv"):
        assert (out / f).exists()
    summary = json.loads((out / "summary.json").read_text())
    assert "wall_time" not in json.dumps(summary)
    assert [t["seed"] for t in summary["trials"]] == [4, 5, 6]
    assert s.status == "ok" and s.query_budget == 201
    assert (out / "traces/trial_0000.csv").read_text().splitlines()[0] == "t,f_obs,grad_sq_norm,cum_queries"
    side = json.loads((out / "traces/trial_0000.json").read_text())
    assert side["seed"] == 4 and side["records"] == 200
    # the problem document rebuilds the same instance
    reb = harness.build_problem({"kind": "file", "path": str(out / "problem.json")})
    assert harness.problem_digest(reb) == s.problem_sha256


def test_parallel_trials_identical(tmp_path):
    c = harness.ExperimentConfig.from_dict(cfg())
    a = harness.run_experiment(c, write=False, jobs=1).to_dict()
    b = harness.run_experiment(c, write=False, jobs=2).to_dict()
    assert a == b


def test_eta_sweep_picks_best(tmp_path):
    c = harness.ExperimentConfig.from_dict(cfg(schedule={"regime": "manual", "eta": [1e-6, 1e-3], "delta": 0.1}))
    s = harness.run_experiment(c, write=False)
    assert s.eta == 1e-3 and len(s.sweep) == 2


def test_failed_trials_excluded(tmp_path):
    c = harness.ExperimentConfig.from_dict(cfg(schedule={"regime": "manual", "eta": 10.0, "delta": 0.1}))
    s = harness.run_experiment(c, write=False)
    assert s.status == "failed" and s.n_failed == 3
    assert s.median_final_metric is None


def test_theorem_regime_estimates_constants():
    c = harness.ExperimentConfig.from_dict(cfg(schedule={"regime": "det-convex-C00"}, T=50, n_trials=1))
    s = harness.run_experiment(c, write=False)
    assert s.trials[0].constants_estimated
    assert s.trials[0].total_queries == 51  # probing queries are not charged to the run


@pytest.mark.parametrize("bad", [
    {"colour": "blue"},
    {"schema_version": 2},
    {"estimator": "three_point"},
    {"schedule": {"regime": "manual", "eta": 0.1}},
    {"schedule": {"regime": "fastest"}},
    {"T": 0},
    {"budget": 100},
    {"threshold": {"relative": 0.1, "absolute": 1.0}},
    {"selection": "best_iterate"},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        harness.ExperimentConfig.from_dict(cfg(**bad))


def test_problem_spec_errors():
    with pytest.raises(ConfigError):
        harness.build_problem({"kind": "qp", "d": 5, "sede": 1})
    with pytest.raises(ConfigError):
        harness.build_problem({"kind": "qp", "d": 1})
    with pytest.raises(ConfigError):
        harness.build_problem({"kind": "file", "path": "/nonexistent.json"})


def test_compare_rejects_different_problems():
    a = harness.ExperimentConfig.from_dict(cfg(name="a"))
    b = harness.ExperimentConfig.from_dict(cfg(name="b", problem={"kind": "qp", "d": 6, "seed": 2}))
    with pytest.raises(IncompatibleComparisonError):
        harness.compare_estimators([a, b], write=False)


def test_compare_ranks(tmp_path):
    a = harness.ExperimentConfig.from_dict(cfg(name="res"))
    b = harness.ExperimentConfig.from_dict(cfg(name="one", estimator="one_point",
                                               schedule={"regime": "manual", "eta": 1e-6, "delta": 0.1}))
    cmp = harness.compare_estimators([b, a], output_dir=tmp_path)
    assert [r["name"] for r in cmp.rows] == ["res", "one"]
    assert (tmp_path / "comparison.json").exists()
    assert cmp.combined_csv().splitlines()[0] == "queries,one_median,res_median"


def test_output_dir_priority(tmp_path, monkeypatch):
    c = harness.ExperimentConfig.from_dict(cfg())
    monkeypatch.setenv(harness.OUTPUT_ENV, str(tmp_path / "env"))
    assert harness.resolve_output_dir(c) == tmp_path / "env" / "tiny"
    c2 = harness.ExperimentConfig.from_dict(cfg(output_dir=str(tmp_path / "cfg")))
    assert harness.resolve_output_dir(c2) == tmp_path / "cfg" / "tiny"
    assert harness.resolve_output_dir(c2, tmp_path / "cli") == tmp_path / "cli" / "tiny"
    monkeypatch.delenv(harness.OUTPUT_ENV)
    assert str(harness.resolve_output_dir(c)) == "zo_runs/tiny"


# ---- CLI ------------------------------------------------------------------

def test_cli_run_ok(tmp_path):
    assert main(["run", write(tmp_path, cfg()), "--output-dir", str(tmp_path / "o")]) == 0


def test_cli_run_uses_env(tmp_path, monkeypatch):
    monkeypatch.setenv("ZO_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["run", write(tmp_path, cfg())]) == 0
    assert (tmp_path / "env" / "tiny" / "summary.json").exists()


def test_cli_exit_codes(tmp_path):
    assert main(["run", write(tmp_path, cfg(colour=1))]) == 2
    assert main(["run", str(tmp_path / "missing.yaml")]) == 2
    (tmp_path / "bad.yaml").write_text("name: [unclosed")
    assert main(["run", str(tmp_path / "bad.yaml")]) == 2
    diverging = cfg(schedule={"regime": "manual", "eta": 10.0, "delta": 0.1})
    assert main(["run", write(tmp_path, diverging), "--output-dir", str(tmp_path / "o")]) == 3
    a = write(tmp_path, cfg(name="a"), "a.yaml")
    b = write(tmp_path, cfg(name="b", problem={"kind": "qp", "d": 7, "seed": 1}), "b.yaml")
    assert main(["compare", a, b, "--output-dir", str(tmp_path / "o")]) == 2


def test_cli_schedule(capsys):
    assert main(["schedule", "det-convex-C00", "--L0", "2", "--d", "10", "--T", "100"]) == 0
    out = capsys.readouterr().out
    assert "eta=0.0025" in out and "delta=0.1" in out
    assert main(["schedule", "det-nonconvex-C11", "--L0", "2", "--d", "10", "--T", "100"]) == 2
    assert main(["schedule", "det-nonconvex-C00", "--L0", "2", "--d", "10", "--T", "5", "--epsf", "0.1"]) == 2
    assert main(["schedule", "det-convex-C00", "--L0", "0", "--d", "10", "--T", "100"]) == 2


def test_cli_verify_subset(capsys):
    assert main(["verify", "--samples", "20000", "--only", "directions", "central_difference_exactness"]) == 0
    assert "2/2 checks passed" in capsys.readouterr().out


def test_console_script_entry():
    proc = subprocess.run([sys.executable, "-m", "zo_residual.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "schedule" in proc.stdout


def test_compare_without_threshold_ranks_by_final_metric():
    a = harness.ExperimentConfig.from_dict(cfg(name="slow", threshold=None,
                                               schedule={"regime": "manual", "eta": 1e-7, "delta": 0.1}))
    b = harness.ExperimentConfig.from_dict(cfg(name="fast", threshold=None))
    cmp = harness.compare_estimators([a, b], write=False)
    assert [r["name"] for r in cmp.rows] == ["fast", "slow"]
