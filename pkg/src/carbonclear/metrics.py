"""Evaluation quantities for a cleared market and side-by-side comparisons."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .model import CarbonFlowSolution, DispatchSolution, Network, ObjectiveTerms

METRIC_FIELDS = ("total_generation", "total_generation_cost", "total_carbon", "average_carbon")
UNITS = {
    "total_generation": "MWh",
    "total_generation_cost": "$",
    "total_carbon": "tons",
    "average_carbon": "tons/MWh",
    "utility_term": "$",
    "carbon_term": "$",
    "objective": "$",
}


@dataclass
class ConsumerResult:
    id: str
    p_d: float
    e_d: Optional[float]  # None when the model does not allocate emissions


@dataclass
class MetricsReport:
    model: str
    total_generation: float
    total_generation_cost: float
    total_carbon: float
    average_carbon: float
    utility_term: float
    carbon_term: float
    objective: float
    p_g: list[float] = field(default_factory=list)
    per_consumer: list[ConsumerResult] = field(default_factory=list)
    degenerate: bool = False

    @property
    def objective_terms(self) -> ObjectiveTerms:
        return ObjectiveTerms(self.utility_term, self.carbon_term, self.total_generation_cost)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        d = dict(d)
        d["per_consumer"] = [ConsumerResult(**c) for c in d.get("per_consumer", [])]
        return cls(**d)


def compute_metrics(net: Network, sol: Union[DispatchSolution, CarbonFlowSolution]) -> MetricsReport:
    disp = sol.dispatch if isinstance(sol, CarbonFlowSolution) else sol
    cost, _, _, e_g = net.gen_arrays()
    total_gen = float(np.sum(disp.p_g))
    total_carbon = float(e_g @ disp.p_g)
    degenerate = total_gen <= 0.0
    avg = 0.0 if degenerate else total_carbon / total_gen
    e_d = disp.e_d
    per = [ConsumerResult(d.id, float(p), None if e_d is None else float(e))
           for d, p, e in zip(net.consumers, disp.p_d, e_d if e_d is not None else [None] * len(disp.p_d))]
    t = disp.objective_terms
    return MetricsReport(
        model=disp.model,
        total_generation=total_gen,
        total_generation_cost=float(cost @ disp.p_g),
        total_carbon=total_carbon,
        average_carbon=avg,
        utility_term=t.utility,
        carbon_term=t.carbon,
        objective=float(disp.objective),
        p_g=[float(v) for v in disp.p_g],
        per_consumer=per,
        degenerate=degenerate,
    )


COMPARE_FIELDS = METRIC_FIELDS + ("utility_term", "carbon_term", "objective")


@dataclass
class Comparison:
    labels: list[str]
    baseline: str
    values: dict[str, dict[str, float]]  # label -> metric -> value
    deltas: dict[str, dict[str, Optional[float]]]  # label -> metric -> percent vs baseline

    def rows(self):
        for lab in self.labels:
            yield lab, self.values[lab], self.deltas[lab]

    def to_csv(self, decimals: Optional[int] = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["case"] + list(COMPARE_FIELDS) + [f"{f}_pct_vs_{self.baseline}" for f in COMPARE_FIELDS])
        for lab, vals, dl in self.rows():
            w.writerow([lab] + [_fmt(vals[f], decimals) for f in COMPARE_FIELDS]
                       + ["" if dl[f] is None else _fmt(dl[f], decimals) for f in COMPARE_FIELDS])
        return buf.getvalue()

    def render(self) -> str:
        """Fixed-width text table, two decimals."""
        head = ["case"] + [f"{f} [{UNITS[f]}]" for f in COMPARE_FIELDS]
        body = []
        for lab, vals, dl in self.rows():
            cells = [lab]
            for f in COMPARE_FIELDS:
                pct = dl[f]
                cells.append(f"{vals[f]:.2f}" + ("" if pct is None or lab == self.baseline else f" ({pct:+.2f}%)"))
            body.append(cells)
        widths = [max(len(r[k]) for r in [head] + body) for k in range(len(head))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [head] + body]
        return "\n".join(lines) + "\n"


def _fmt(v: float, decimals: Optional[int]) -> str:
    return repr(float(v)) if decimals is None else f"{v:.{decimals}f}"


def percent_change(value: float, base: float) -> Optional[float]:
    if base == 0:
        return 0.0 if value == 0 else None
    return 100.0 * (value - base) / abs(base)


def compare(reports: Sequence[MetricsReport], labels: Sequence[str], baseline: Union[int, str] = 0) -> Comparison:
    """Align reports and compute percent deltas against ``baseline`` (index or label)."""
    if len(reports) != len(labels):
        raise ValueError("reports and labels differ in length")
    if len(reports) < 2:
        raise ValueError("compare needs at least two reports")
    labels = list(labels)
    base_idx = labels.index(baseline) if isinstance(baseline, str) else int(baseline)
    base = reports[base_idx]
    values = {lab: {f: float(getattr(r, f)) for f in COMPARE_FIELDS} for lab, r in zip(labels, reports)}
    deltas = {lab: {f: percent_change(values[lab][f], float(getattr(base, f))) for f in COMPARE_FIELDS}
              for lab in labels}
    return Comparison(labels, labels[base_idx], values, deltas)


def report_rows_csv(reports: Sequence[MetricsReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model"] + list(COMPARE_FIELDS) + ["degenerate"])
    for r in reports:
        w.writerow([r.model] + [repr(float(getattr(r, f))) for f in COMPARE_FIELDS] + [int(r.degenerate)])
    return buf.getvalue()
