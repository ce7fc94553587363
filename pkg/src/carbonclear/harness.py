"""Seeded experiment sweeps over carbon-cost ranges and carbon-sensitive fractions.

Each experiment writes one directory::

    result.json     scenario echo, per-trial metrics per model, aggregates
    trials.csv      one row per (group, trial, model)
    aggregate.csv   mean and quartiles per (group, model, metric)
    manifest.json   artifacts with sha256, per-trial seeds, config hash
    timings.json    wall-clock per solve (not deterministic)

Per-trial carbon costs come from ``SeedSequence(master_seed, spawn_key=...)``
where the spawn key folds in the experiment family, the cost range and the
fraction (in thousandths) and the trial index.  Seeds therefore do not depend
on which other ranges or fractions are part of a run, and every model in a
(range, fraction, trial) cell sees the same carbon costs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .carbonflow import CarbonFlowConfig, clear_carbon_flow
from .clearing import ClearingInfeasible, clear_carbon_cost, clear_fixed_demand, clear_flexible_demand
from .metrics import COMPARE_FIELDS, compute_metrics
from .model import Network
from .scenario import generate_carbon_costs

log = logging.getLogger(__name__)

RESULT_SCHEMA_VERSION = 1
WORKERS_ENV = "CARBONCLEAR_WORKERS"

MODEL_NAMES = ("fixed", "flexible", "carbon-cost", "carbon-flow")
BENCHMARK_MODELS = ("fixed", "flexible")
CARBON_MODELS = ("carbon-cost", "carbon-flow")

# experiment family codes folded into the seed spawn key
FAMILY_CODES = {"sweep-costs": 1, "sweep-fraction": 2}

DEFAULT_RANGES = ((10.0, 20.0), (10.0, 40.0), (30.0, 60.0), (50.0, 80.0))
DEFAULT_FRACTIONS = tuple(float(f) for f in range(10, 101, 10))


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
        if n < 1:
            raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
        return n
    return 1


def _milli(v: float) -> int:
    return int(round(float(v) * 1000))


def trial_spawn_key(family: str, cost_range, fraction: float, trial: int) -> tuple[int, ...]:
    lo, hi = cost_range
    return (FAMILY_CODES[family], _milli(lo), _milli(hi), _milli(fraction), int(trial))


def trial_seed(master_seed: int, family: str, cost_range, fraction: float, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master_seed), spawn_key=trial_spawn_key(family, cost_range, fraction, trial))


def solve_model(model: str, net: Network, flow_cfg: Optional[CarbonFlowConfig] = None):
    if model == "fixed":
        return clear_fixed_demand(net)
    if model == "flexible":
        return clear_flexible_demand(net)
    if model == "carbon-cost":
        return clear_carbon_cost(net)
    if model == "carbon-flow":
        return clear_carbon_flow(net, flow_cfg or CarbonFlowConfig())
    raise ValueError(f"unknown model {model!r}; expected one of {', '.join(MODEL_NAMES)}")


@dataclass
class Task:
    index: int
    group: dict  # {"range": [lo, hi], "fraction": f} or {"benchmark": model}
    trial: int
    model: str
    carbon_costs: Optional[list]  # None for carbon-agnostic benchmarks
    spawn_key: Optional[list]


@dataclass
class TrialResult:
    index: int
    group: dict
    trial: int
    model: str
    status: str  # "ok", "not-converged", "infeasible", "error"
    error: str = ""
    metrics: Optional[dict] = None
    iterations: Optional[int] = None
    spawn_key: Optional[list] = None
    seconds: float = 0.0

    def record(self) -> dict:
        out = {"group": self.group, "trial": self.trial, "model": self.model, "status": self.status,
               "error": self.error, "spawn_key": self.spawn_key, "metrics": self.metrics}
        if self.iterations is not None:
            out["iterations"] = self.iterations
        return out


def _run_task(args) -> TrialResult:
    task, net = args
    t0 = time.perf_counter()
    res = TrialResult(task.index, task.group, task.trial, task.model, "ok", spawn_key=task.spawn_key)
    try:
        run_net = net if task.carbon_costs is None else net.with_carbon_costs(task.carbon_costs)
        sol = solve_model(task.model, run_net)
        rep = compute_metrics(run_net, sol)
        res.metrics = rep.to_dict()
        if task.model == "carbon-flow":
            res.iterations = sol.iterations
            if not sol.converged:
                res.status = "not-converged"
    except ClearingInfeasible as exc:
        res.status, res.error = "infeasible", str(exc)
    except Exception as exc:  # one failed trial must not abort a sweep
        res.status, res.error = "error", f"{type(exc).__name__}: {exc}"
    res.seconds = time.perf_counter() - t0
    return res


def run_tasks(tasks: Sequence[Task], net: Network, workers: int = 1) -> list[TrialResult]:
    """Run tasks, possibly in worker processes; results come back in task order."""
    items = [(t, net) for t in tasks]
    if workers <= 1 or len(items) <= 1:
        return [_run_task(it) for it in items]
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(_run_task, items, chunksize=1))


# ---------------------------------------------------------------------------
# experiment construction


@dataclass
class ExperimentConfig:
    family: str
    network: str
    seed: int
    trials: int
    models: list
    ranges: list = field(default_factory=list)  # [[lo, hi], ...]
    fractions: list = field(default_factory=list)  # percents
    benchmarks: bool = True

    def to_dict(self) -> dict:
        return {"family": self.family, "network": self.network, "seed": int(self.seed), "trials": int(self.trials),
                "models": list(self.models), "ranges": [[float(a), float(b)] for a, b in self.ranges],
                "fractions": [float(f) for f in self.fractions], "benchmarks": bool(self.benchmarks)}

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def _validate_config(cfg: ExperimentConfig) -> None:
    if cfg.trials < 1:
        raise ValueError("trials must be >= 1")
    for m in cfg.models:
        if m not in CARBON_MODELS:
            raise ValueError(f"sweep models must be among {', '.join(CARBON_MODELS)}, got {m!r}")
    for lo, hi in cfg.ranges:
        if not 0 <= lo <= hi:
            raise ValueError(f"carbon cost range must satisfy 0 <= lo <= hi, got [{lo}, {hi}]")
    for f in cfg.fractions:
        if not 0 <= f <= 100:
            raise ValueError(f"fractions must be within [0, 100], got {f}")


def build_tasks(cfg: ExperimentConfig, n_consumers: int) -> list[Task]:
    _validate_config(cfg)
    tasks: list[Task] = []
    cells = [(tuple(r), f) for r in cfg.ranges for f in cfg.fractions]
    if not cells:
        return tasks
    if cfg.benchmarks:
        for m in BENCHMARK_MODELS:
            tasks.append(Task(len(tasks), {"benchmark": m}, 0, m, None, None))
    for (lo, hi), frac in cells:
        group = {"range": [float(lo), float(hi)], "fraction": float(frac)}
        for t in range(cfg.trials):
            ss = trial_seed(cfg.seed, cfg.family, (lo, hi), frac, t)
            costs = generate_carbon_costs(n_consumers, (lo, hi), frac, ss)
            for m in cfg.models:
                tasks.append(Task(len(tasks), group, t, m, [float(c) for c in costs], list(ss.spawn_key)))
    return tasks


def group_label(group: dict) -> str:
    if "benchmark" in group:
        return group["benchmark"]
    lo, hi = group["range"]
    return f"[{lo:g},{hi:g}]@{group['fraction']:g}%"


# ---------------------------------------------------------------------------
# aggregation


def _groups_in_order(results: Sequence[TrialResult]) -> list[tuple[str, dict, str]]:
    seen, out = set(), []
    for r in results:
        key = (json.dumps(r.group, sort_keys=True), r.model)
        if key not in seen:
            seen.add(key)
            out.append((key[0], r.group, r.model))
    return out


def aggregate(results: Sequence[TrialResult]) -> list[dict]:
    """Mean and quartiles per (group, model, metric) over trials with a solution."""
    rows = []
    for gkey, group, model in _groups_in_order(results):
        members = [r for r in results if json.dumps(r.group, sort_keys=True) == gkey and r.model == model]
        ok = [r for r in members if r.metrics is not None]
        for metric in COMPARE_FIELDS:
            vals = np.array([r.metrics[metric] for r in ok], float)
            row = {"group": group, "model": model, "metric": metric, "n": len(members), "n_ok": len(ok)}
            if len(vals):
                q1, med, q3 = np.percentile(vals, [25, 50, 75])
                row.update(mean=float(np.mean(vals)), q1=float(q1), median=float(med), q3=float(q3),
                           min=float(vals.min()), max=float(vals.max()))
            else:
                row.update(mean=None, q1=None, median=None, q3=None, min=None, max=None)
            rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# output


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def _group_cells(group: dict) -> list[str]:
    if "benchmark" in group:
        return [group["benchmark"], "", "", ""]
    lo, hi = group["range"]
    return ["", repr(float(lo)), repr(float(hi)), repr(float(group["fraction"]))]


GROUP_COLUMNS = ["benchmark", "range_lo", "range_hi", "fraction_percent"]


def write_experiment(out_dir: str, cfg: ExperimentConfig, results: Sequence[TrialResult]) -> dict:
    """Write every artifact of an experiment; returns the result document.

    An experiment without tasks (e.g. an empty range list) only gets a
    manifest with no artifacts.
    """
    os.makedirs(out_dir, exist_ok=True)
    if not results:
        manifest = {"schema_version": RESULT_SCHEMA_VERSION, "config_hash": cfg.digest(),
                    "master_seed": int(cfg.seed), "artifacts": [], "trials": [], "partial": False}
        with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
            fh.write("\n")
        return {"schema_version": RESULT_SCHEMA_VERSION, "config": cfg.to_dict(), "trials": [], "aggregates": []}
    aggregates = aggregate(results)
    failed = [r for r in results if r.status in ("infeasible", "error")]
    doc = {
        "schema_version": RESULT_SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "partial": bool(failed),
        "trials": [r.record() for r in results],
        "aggregates": aggregates,
    }
    paths = {}
    paths["result.json"] = os.path.join(out_dir, "result.json")
    with open(paths["result.json"], "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")

    paths["trials.csv"] = os.path.join(out_dir, "trials.csv")
    with open(paths["trials.csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GROUP_COLUMNS + ["trial", "model", "status"] + list(COMPARE_FIELDS) + ["error"])
        for r in results:
            vals = [_num(r.metrics[f]) if r.metrics else "" for f in COMPARE_FIELDS]
            w.writerow(_group_cells(r.group) + [r.trial, r.model, r.status] + vals + [r.error])

    paths["aggregate.csv"] = os.path.join(out_dir, "aggregate.csv")
    with open(paths["aggregate.csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        stats = ["mean", "q1", "median", "q3", "min", "max"]
        w.writerow(GROUP_COLUMNS + ["model", "metric", "n", "n_ok"] + stats)
        for a in aggregates:
            w.writerow(_group_cells(a["group"]) + [a["model"], a["metric"], a["n"], a["n_ok"]]
                       + [_num(a[s]) for s in stats])

    manifest = {
        "schema_version": RESULT_SCHEMA_VERSION,
        "config_hash": cfg.digest(),
        "master_seed": int(cfg.seed),
        "seed_rule": "numpy SeedSequence(master_seed, spawn_key=(family, lo*1000, hi*1000, fraction*1000, trial))",
        "artifacts": [{"path": name, "sha256": _sha256(p)} for name, p in sorted(paths.items())],
        "trials": [{"group": group_label(r.group), "trial": r.trial, "model": r.model, "status": r.status,
                    "spawn_key": r.spawn_key} for r in results],
        "partial": bool(failed),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "timings.json"), "w") as fh:
        json.dump([{"group": group_label(r.group), "trial": r.trial, "model": r.model, "seconds": r.seconds}
                   for r in results], fh, indent=1)
        fh.write("\n")
    return doc


def run_experiment(cfg: ExperimentConfig, net: Network, out_dir: Optional[str] = None,
                   workers: Optional[int] = None) -> tuple[dict, list[TrialResult]]:
    tasks = build_tasks(cfg, len(net.consumers))
    workers = default_workers() if workers is None else workers
    if workers < 1:
        raise ValueError("workers must be >= 1")
    results = run_tasks(tasks, net, workers)
    for r in results:
        if r.status != "ok":
            log.warning("%s trial %d %s: %s %s", group_label(r.group), r.trial, r.model, r.status, r.error)
    if out_dir is not None:
        doc = write_experiment(out_dir, cfg, results)
    else:
        doc = {"schema_version": RESULT_SCHEMA_VERSION, "config": cfg.to_dict(), "trials": [r.record() for r in results],
               "aggregates": aggregate(results)}
    return doc, results


def sweep_costs(net: Network, network_source: str, ranges=DEFAULT_RANGES, seed: int = 0, trials: int = 5,
                models=("carbon-cost",), fraction: float = 100.0, out_dir=None, workers=None):
    cfg = ExperimentConfig("sweep-costs", network_source, seed, trials, list(models),
                           [list(r) for r in ranges], [fraction])
    return run_experiment(cfg, net, out_dir, workers)


def sweep_fraction(net: Network, network_source: str, fractions=DEFAULT_FRACTIONS, cost_range=(30.0, 60.0),
                   seed: int = 0, trials: int = 5, models=("carbon-cost",), out_dir=None, workers=None):
    cfg = ExperimentConfig("sweep-fraction", network_source, seed, trials, list(models),
                           [list(cost_range)], list(fractions))
    return run_experiment(cfg, net, out_dir, workers)
