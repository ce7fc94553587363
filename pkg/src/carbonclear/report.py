"""Plot-data tables built from experiment result files.

Every table is written as CSV (or collected into one JSON document) with
full-precision numbers, so rendering the same inputs twice gives identical
bytes.  Column schemas:

``cost_sweep_table.csv``
    ``case`` plus seven value columns: total generation, generation cost,
    total carbon, average carbon, utility term, carbon term, objective.
    Rows: the fixed- and flexible-demand benchmarks, then one row per carbon
    cost range holding the carbon-cost model's mean over trials.
``cost_model_comparison.csv``
    ``range_lo, range_hi, model, metric, mean, q1, median, q3, min, max, n_ok``
    for the carbon-cost and carbon-flow models over the cost ranges.
``fraction_boxplot.csv``
    ``model, fraction_percent, metric, mean, q1, median, q3, min, max, n_ok,
    points`` for the carbon-cost model over carbon-sensitive fractions;
    ``points`` lists the per-trial values separated by ``;``.
``fraction_model_comparison.csv``
    same columns as ``fraction_boxplot.csv`` for both carbon-aware models.
"""

from __future__ import annotations

import csv
import io
import json
import os
from typing import Iterable, Sequence

import numpy as np

from .harness import RESULT_SCHEMA_VERSION
from .metrics import METRIC_FIELDS

TABLE_COLUMNS = ["case", "total_generation_mwh", "total_generation_cost_usd", "total_carbon_tons",
                 "average_carbon_tons_per_mwh", "utility_term_usd", "carbon_term_usd", "objective_usd"]
TABLE_FIELDS = ["total_generation", "total_generation_cost", "total_carbon", "average_carbon",
                "utility_term", "carbon_term", "objective"]
BENCHMARK_CASES = {"fixed": "fixed-demand", "flexible": "flexible-demand"}
STAT_COLUMNS = ["mean", "q1", "median", "q3", "min", "max", "n_ok"]


class ReportError(ValueError):
    pass


def load_results(paths: Iterable[str]) -> list[dict]:
    """Read ``result.json`` files (or experiment directories) and check schema versions."""
    docs, versions = [], {}
    for p in paths:
        path = os.path.join(p, "result.json") if os.path.isdir(p) else p
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ReportError(f"{path}: cannot read ({exc.strerror})") from None
        except json.JSONDecodeError as exc:
            raise ReportError(f"{path}: not a result file ({exc.msg})") from None
        if not isinstance(doc, dict) or "schema_version" not in doc:
            raise ReportError(f"{path}: not a result file (no schema_version)")
        versions[path] = doc["schema_version"]
        docs.append(doc)
    distinct = sorted(set(map(str, versions.values())))
    if len(distinct) > 1:
        detail = ", ".join(f"{p}: v{v}" for p, v in versions.items())
        raise ReportError(f"result files mix schema versions {', '.join(distinct)} ({detail})")
    if distinct and distinct[0] != str(RESULT_SCHEMA_VERSION):
        raise ReportError(f"result schema version {distinct[0]} is not supported "
                          f"(this build reads version {RESULT_SCHEMA_VERSION})")
    return docs


def _trials(docs: Sequence[dict], family: str) -> list[dict]:
    return [t for d in docs if d.get("config", {}).get("family") == family for t in d["trials"]]


def _ok(trials):
    return [t for t in trials if t.get("metrics") is not None]


def _stats(values: Sequence[float]) -> dict:
    v = np.asarray(values, float)
    if not len(v):
        return {k: None for k in STAT_COLUMNS[:-1]} | {"n_ok": 0}
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {"mean": float(v.mean()), "q1": float(q1), "median": float(med), "q3": float(q3),
            "min": float(v.min()), "max": float(v.max()), "n_ok": int(len(v))}


def _range_key(t):
    lo, hi = t["group"]["range"]
    return (float(lo), float(hi))


def cost_sweep_table(docs: Sequence[dict]) -> list[dict]:
    trials = _trials(docs, "sweep-costs")
    rows = []
    for model, case in BENCHMARK_CASES.items():
        bench = _ok([t for t in trials if t["group"].get("benchmark") == model])
        if bench:
            rows.append({"case": case} | {f: float(np.mean([t["metrics"][f] for t in bench])) for f in TABLE_FIELDS})
    cc = _ok([t for t in trials if "range" in t["group"] and t["model"] == "carbon-cost"])
    for rng in sorted({_range_key(t) for t in cc}):
        sel = [t for t in cc if _range_key(t) == rng]
        rows.append({"case": f"[{rng[0]:g},{rng[1]:g}]"}
                    | {f: float(np.mean([t["metrics"][f] for t in sel])) for f in TABLE_FIELDS})
    return rows


def cost_model_comparison(docs: Sequence[dict]) -> list[dict]:
    trials = [t for t in _trials(docs, "sweep-costs") if "range" in t["group"]]
    rows = []
    for rng in sorted({_range_key(t) for t in trials}):
        for model in ("carbon-cost", "carbon-flow"):
            sel = _ok([t for t in trials if _range_key(t) == rng and t["model"] == model])
            if not any(t["model"] == model for t in trials):
                continue
            for metric in METRIC_FIELDS:
                rows.append({"range_lo": rng[0], "range_hi": rng[1], "model": model, "metric": metric}
                            | _stats([t["metrics"][metric] for t in sel]))
    return rows


def fraction_boxplot(docs: Sequence[dict], models=("carbon-cost",)) -> list[dict]:
    trials = [t for t in _trials(docs, "sweep-fraction") if "range" in t["group"]]
    rows = []
    for frac in sorted({float(t["group"]["fraction"]) for t in trials}):
        for model in models:
            if not any(t["model"] == model for t in trials):
                continue
            sel = sorted(_ok([t for t in trials if float(t["group"]["fraction"]) == frac and t["model"] == model]),
                         key=lambda t: t["trial"])
            for metric in METRIC_FIELDS:
                vals = [t["metrics"][metric] for t in sel]
                rows.append({"model": model, "fraction_percent": frac, "metric": metric} | _stats(vals)
                            | {"points": vals})
    return rows


def build_tables(docs: Sequence[dict]) -> dict[str, list[dict]]:
    """Every table the inputs support, keyed by output file stem."""
    tables = {}
    if _trials(docs, "sweep-costs"):
        tables["cost_sweep_table"] = cost_sweep_table(docs)
        comp = cost_model_comparison(docs)
        if any(r["model"] == "carbon-flow" for r in comp):
            tables["cost_model_comparison"] = comp
    if _trials(docs, "sweep-fraction"):
        tables["fraction_boxplot"] = fraction_boxplot(docs)
        both = fraction_boxplot(docs, ("carbon-cost", "carbon-flow"))
        if any(r["model"] == "carbon-flow" for r in both):
            tables["fraction_model_comparison"] = both
    return tables


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, list):
        return ";".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def table_csv(name: str, rows: Sequence[dict]) -> str:
    if name == "cost_sweep_table":
        header = TABLE_COLUMNS
        body = [[r["case"]] + [r[f] for f in TABLE_FIELDS] for r in rows]
    else:
        header = list(rows[0].keys()) if rows else []
        body = [[r[h] for h in header] for r in rows]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for line in body:
        w.writerow([_cell(v) for v in line])
    return buf.getvalue()


def write_report(docs: Sequence[dict], out_dir: str, fmt: str = "csv", figures: bool = True) -> list[str]:
    """Write plot-data (and optionally PNG figures); returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    tables = build_tables(docs)
    written = []
    if fmt == "csv":
        for name, rows in tables.items():
            path = os.path.join(out_dir, f"{name}.csv")
            with open(path, "w", newline="") as fh:
                fh.write(table_csv(name, rows))
            written.append(path)
    elif fmt == "json":
        path = os.path.join(out_dir, "report.json")
        with open(path, "w") as fh:
            json.dump({"schema_version": RESULT_SCHEMA_VERSION, "tables": tables}, fh, indent=1, sort_keys=True)
            fh.write("\n")
        written.append(path)
    else:
        raise ReportError(f"unknown format {fmt!r}")
    if figures:
        from . import plotting
        written += plotting.render_all(tables, out_dir)
    return written


def render_text(rows: Sequence[dict]) -> str:
    """Fixed-width rendering of the cost sweep table (two decimals)."""
    head = TABLE_COLUMNS
    body = [[r["case"]] + [f"{r[f]:.2f}" for f in TABLE_FIELDS] for r in rows]
    widths = [max(len(x[k]) for x in [head] + body) for k in range(len(head))]
    return "\n".join("  ".join(c.rjust(w) if k else c.ljust(w) for k, (c, w) in enumerate(zip(r, widths)))
                     for r in [head] + body) + "\n"


def table_from_csv(text: str) -> list[dict]:
    """Parse a ``cost_sweep_table.csv`` back into rows (numbers as floats)."""
    reader = csv.DictReader(io.StringIO(text))
    out = []
    for row in reader:
        out.append({"case": row["case"]} | {f: float(row[c]) for f, c in zip(TABLE_FIELDS, TABLE_COLUMNS[1:])})
    return out

