"""End-to-end fraction sweep on RTS-GMLC (about two minutes on one core)."""

import pytest

from carbonclear.clearing import clear_flexible_demand
from carbonclear.harness import DEFAULT_FRACTIONS, sweep_fraction
from carbonclear.metrics import compute_metrics


@pytest.fixture(scope="module")
def fraction_sweep(rts):
    doc, _ = sweep_fraction(rts, "rts-gmlc", DEFAULT_FRACTIONS, (30.0, 60.0), seed=0, trials=5, workers=1)
    rows = {}
    for a in doc["aggregates"]:
        if "fraction" in a["group"] and a["model"] == "carbon-cost":
            rows[(a["group"]["fraction"], a["metric"])] = a
    return doc, rows


def test_all_trials_solved(fraction_sweep):
    doc, _ = fraction_sweep
    assert all(t["status"] == "ok" for t in doc["trials"])
    assert len(doc["trials"]) == 2 + 5 * len(DEFAULT_FRACTIONS)


def test_mean_carbon_never_increases_with_fraction(fraction_sweep):
    _, rows = fraction_sweep
    for metric in ("total_carbon", "average_carbon"):
        means = [rows[(f, metric)]["mean"] for f in DEFAULT_FRACTIONS]
        assert all(b <= a * (1 + 1e-9) for a, b in zip(means, means[1:])), (metric, means)
        assert means[-1] < means[0]


def test_dispersion_widest_at_intermediate_fractions(fraction_sweep):
    _, rows = fraction_sweep
    iqr = {f: rows[(f, "total_carbon")]["q3"] - rows[(f, "total_carbon")]["q1"] for f in DEFAULT_FRACTIONS}
    assert max(iqr[60.0], iqr[70.0], iqr[80.0]) > iqr[100.0]


def test_low_fractions_stay_at_or_below_flexible(fraction_sweep, rts):
    _, rows = fraction_sweep
    flex = compute_metrics(rts, clear_flexible_demand(rts))
    for f in DEFAULT_FRACTIONS:
        assert rows[(f, "total_carbon")]["max"] <= flex.total_carbon * (1 + 1e-9)
