import json
import os

import numpy as np
import pytest

from carbonclear.clearing import clear_flexible_demand
from carbonclear.harness import (WORKERS_ENV, ExperimentConfig, Task, aggregate, build_tasks, default_workers,
                                 run_experiment, run_tasks, sweep_costs, sweep_fraction, trial_seed,
                                 trial_spawn_key)
from carbonclear.metrics import compute_metrics
from carbonclear.scenario import generate_carbon_costs

RESULT_FILES = ("result.json", "trials.csv", "aggregate.csv", "manifest.json")


def _read(d):
    return {name: open(os.path.join(d, name), "rb").read() for name in RESULT_FILES}


def test_results_identical_across_worker_counts(tmp_path, three_bus):
    outs = []
    for workers in (1, 4, 1):
        d = tmp_path / f"w{workers}-{len(outs)}"
        sweep_costs(three_bus, "builtin:3bus", ranges=[(10, 20), (30, 60)], seed=11, trials=3,
                    models=("carbon-cost", "carbon-flow"), out_dir=str(d), workers=workers)
        outs.append(_read(d))
    assert outs[0] == outs[1] == outs[2]


def test_seeds_do_not_depend_on_other_cells(three_bus):
    small = ExperimentConfig("sweep-costs", "x", 5, 2, ["carbon-cost"], [[30, 60]], [100])
    big = ExperimentConfig("sweep-costs", "x", 5, 4, ["carbon-cost"], [[10, 20], [30, 60]], [100])
    pick = lambda tasks: {(tuple(t.group["range"]), t.trial): t.carbon_costs for t in tasks if "range" in t.group}
    a, b = pick(build_tasks(small, 3)), pick(build_tasks(big, 3))
    for key, costs in a.items():
        assert b[key] == costs


def test_seed_rule():
    assert trial_spawn_key("sweep-fraction", (30, 60), 40, 2) == (2, 30000, 60000, 40000, 2)
    ss = trial_seed(7, "sweep-costs", (10, 20), 100, 0)
    assert ss.entropy == 7 and ss.spawn_key == (1, 10000, 20000, 100000, 0)
    assert np.array_equal(generate_carbon_costs(4, (10, 20), 100, ss),
                          generate_carbon_costs(4, (10, 20), 100, trial_seed(7, "sweep-costs", (10, 20), 100, 0)))


def test_empty_sweep_writes_manifest_only(tmp_path, three_bus):
    doc, results = sweep_costs(three_bus, "builtin:3bus", ranges=[], out_dir=str(tmp_path))
    assert results == [] and doc["trials"] == []
    assert sorted(os.listdir(tmp_path)) == ["manifest.json"]
    assert json.loads((tmp_path / "manifest.json").read_text())["artifacts"] == []


def test_failed_trial_is_isolated(three_bus):
    tasks = [Task(0, {"benchmark": "flexible"}, 0, "flexible", None, None),
             Task(1, {"range": [1.0, 2.0], "fraction": 100.0}, 0, "carbon-cost", [1.0], None),  # wrong length
             Task(2, {"range": [1.0, 2.0], "fraction": 100.0}, 1, "carbon-cost", [1.0, 1.5, 2.0], None)]
    res = run_tasks(tasks, three_bus, workers=1)
    assert [r.status for r in res] == ["ok", "error", "ok"]
    assert res[1].metrics is None and res[1].error
    agg = [a for a in aggregate(res) if a["model"] == "carbon-cost" and a["metric"] == "total_carbon"]
    assert agg[0]["n"] == 2 and agg[0]["n_ok"] == 1


def test_infeasible_trial_is_recorded(tmp_path, three_bus):
    # demand floors above all capacity: every model is infeasible
    from carbonclear.model import Consumer, Network
    tight = Network(three_bus.buses, three_bus.lines, three_bus.generators,
                    [Consumer(c.id, c.bus, c.utility, c.p_max * 3, c.p_max * 3) for c in three_bus.consumers])
    doc, results = sweep_costs(tight, "inline", ranges=[(10, 20)], trials=2, out_dir=str(tmp_path), workers=1)
    assert {r.status for r in results} == {"infeasible"}
    assert doc["partial"] is True
    assert json.loads((tmp_path / "manifest.json").read_text())["partial"] is True


def test_benchmarks_and_task_layout(three_bus):
    cfg = ExperimentConfig("sweep-costs", "x", 0, 5, ["carbon-cost", "carbon-flow"], [[10, 20], [10, 40]], [100])
    tasks = build_tasks(cfg, 3)
    assert [t.model for t in tasks[:2]] == ["fixed", "flexible"]
    assert len(tasks) == 2 + 2 * 5 * 2
    # matched scenarios: both models of a trial see the same carbon costs
    for a, b in zip(tasks[2::2], tasks[3::2]):
        assert (a.model, b.model) == ("carbon-cost", "carbon-flow") and a.carbon_costs == b.carbon_costs
    with pytest.raises(ValueError):
        build_tasks(ExperimentConfig("sweep-costs", "x", 0, 1, ["fixed"], [[1, 2]], [100]), 3)
    with pytest.raises(ValueError):
        build_tasks(ExperimentConfig("sweep-costs", "x", 0, 1, ["carbon-cost"], [[3, 2]], [100]), 3)


def test_fraction_zero_matches_flexible(three_bus):
    doc, results = sweep_fraction(three_bus, "builtin:3bus", fractions=[0], trials=2, workers=1)
    flex = compute_metrics(three_bus, clear_flexible_demand(three_bus))
    for r in results:
        if r.model == "carbon-cost":
            assert r.metrics["objective"] == pytest.approx(flex.objective, rel=1e-8)
            assert r.metrics["total_carbon"] == pytest.approx(flex.total_carbon, rel=1e-8)


def test_worker_env(monkeypatch):
    monkeypatch.delenv(WORKERS_ENV, raising=False)
    assert default_workers() == 1
    monkeypatch.setenv(WORKERS_ENV, "3")
    assert default_workers() == 3
    for bad in ("0", "many"):
        monkeypatch.setenv(WORKERS_ENV, bad)
        with pytest.raises(ValueError):
            default_workers()


def test_run_experiment_without_output(three_bus):
    cfg = ExperimentConfig("sweep-costs", "x", 0, 1, ["carbon-cost"], [[10, 20]], [100], benchmarks=False)
    doc, results = run_experiment(cfg, three_bus, workers=1)
    assert len(results) == 1 and doc["trials"][0]["status"] == "ok"
