"""Command-line entry point.

Exit codes: 0 success, 2 input error, 3 infeasible clearing problem,
4 carbon-flow solve did not converge (the best iterate is still written),
5 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from typing import Optional

import numpy as np

from . import __version__
from .carbonflow import CarbonFlowConfig
from .clearing import ClearingInfeasible
from .harness import (CARBON_MODELS, MODEL_NAMES, DEFAULT_RANGES, RESULT_SCHEMA_VERSION,
                      WORKERS_ENV, default_workers, solve_model, sweep_costs, sweep_fraction)
from .matpower import MatpowerParseError, export_rts_gmlc_csv, read_case
from .metrics import COMPARE_FIELDS, UNITS, compute_metrics
from .model import CarbonFlowSolution, ValidationError
from .report import ReportError, load_results, write_report
from .scenario import (ScenarioParseError, ScenarioSpec, generate_carbon_costs, load_scenario_file,
                       resolve_network)

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NONCONVERGED, EXIT_INTERNAL = 0, 2, 3, 4, 5

log = logging.getLogger("carbonclear")


class InputError(ValueError):
    pass


# ---------------------------------------------------------------------------
# argument parsing helpers


def parse_range(text: str) -> tuple[float, float]:
    parts = text.split(":")
    if len(parts) != 2:
        raise InputError(f"bad range {text!r}: expected LO:HI")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError:
        raise InputError(f"bad range {text!r}: expected numbers") from None
    if not 0 <= lo <= hi:
        raise InputError(f"bad range {text!r}: need 0 <= LO <= HI")
    return lo, hi


def parse_ranges(text: str) -> list[tuple[float, float]]:
    return [parse_range(t) for t in text.split(",") if t.strip()]


def parse_fractions(text: str) -> list[float]:
    """``10,20,50`` or ``START:STOP:STEP`` (inclusive stop)."""
    text = text.strip()
    if not text:
        return []
    try:
        if ":" in text:
            start, stop, step = (float(v) for v in text.split(":"))
            if step <= 0:
                raise InputError("fraction step must be > 0")
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            out = [start + k * step for k in range(max(n, 0))]
        else:
            out = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"bad fractions {text!r}") from None
    for f in out:
        if not 0 <= f <= 100:
            raise InputError(f"fraction {f:g} outside [0, 100]")
    return out


def parse_models(text: str, allowed) -> list[str]:
    models = [m.strip() for m in text.split(",") if m.strip()]
    for m in models:
        if m not in allowed:
            raise InputError(f"unknown model {m!r}; expected one of {', '.join(allowed)}")
    return models


def _network_and_spec(args):
    if args.scenario and args.network:
        raise InputError("give either --network or --scenario, not both")
    if args.scenario:
        net, spec = load_scenario_file(args.scenario, strict=args.strict)
        source = f"file:{args.scenario}"
        if getattr(args, "utilities", None):
            raise InputError("--utilities applies to --network rts-gmlc sources only")
        return net, spec, source
    source = args.network or "builtin:3bus"
    spec = ScenarioSpec(network=source, utilities=getattr(args, "utilities", None),
                        demand_flex_floor=getattr(args, "demand_floor", 0.8))
    return resolve_network(source, spec, strict=args.strict), spec, source


# ---------------------------------------------------------------------------
# commands


def _solution_payload(net, sol) -> dict:
    disp = sol.dispatch if isinstance(sol, CarbonFlowSolution) else sol
    out = {
        "p_g": {g.id: float(v) for g, v in zip(net.generators, disp.p_g)},
        "p_d": {d.id: float(v) for d, v in zip(net.consumers, disp.p_d)},
        "theta": {b.id: float(v) for b, v in zip(net.buses, disp.theta)},
        "line_flows": {(ln.id or str(k)): float(v) for k, (ln, v) in enumerate(zip(net.lines, disp.line_flows))},
        "e_d": None if disp.e_d is None else {d.id: float(v) for d, v in zip(net.consumers, disp.e_d)},
        "notes": list(disp.notes),
    }
    if disp.allocation is not None:
        out["allocation"] = {g.id: {d.id: float(disp.allocation[m, n]) for n, d in enumerate(net.consumers)
                                    if disp.allocation[m, n] != 0.0}
                             for m, g in enumerate(net.generators)}
        out["allocation_unique"] = bool(disp.allocation_unique)
    if isinstance(sol, CarbonFlowSolution):
        out["lambda"] = {b.id: float(v) for b, v in zip(net.buses, sol.lambda_e)}
        out["converged"] = bool(sol.converged)
        out["iterations"] = int(sol.iterations)
        out["carbon_balance_residual"] = float(sol.residual)
    return out


def _metrics_csv(rep) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "value", "unit"])
    for f in COMPARE_FIELDS:
        w.writerow([f, repr(float(getattr(rep, f))), UNITS[f]])
    return buf.getvalue()


def _solution_csv(payload: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["quantity", "id", "value"])
    for key in ("p_g", "p_d", "theta", "line_flows", "e_d", "lambda"):
        for ident, v in (payload.get(key) or {}).items():
            w.writerow([key, ident, repr(v)])
    for g, row in (payload.get("allocation") or {}).items():
        for d, v in row.items():
            w.writerow(["allocation", f"{g}->{d}", repr(v)])
    return buf.getvalue()


def cmd_solve(args) -> int:
    net, spec, source = _network_and_spec(args)
    if args.carbon_costs:
        parts = args.carbon_costs.split(":")
        if len(parts) not in (2, 3):
            raise InputError("--carbon-costs expects LO:HI[:PERCENT]")
        lo, hi = parse_range(":".join(parts[:2]))
        frac = parse_fractions(parts[2])[0] if len(parts) == 3 else 100.0
        net = net.with_carbon_costs(generate_carbon_costs(len(net.consumers), (lo, hi), frac,
                                                          0 if args.seed is None else args.seed))
    elif spec.carbon_cost_range is not None:
        seed = spec.seed if args.seed is None else args.seed
        net = net.with_carbon_costs(generate_carbon_costs(len(net.consumers), spec.carbon_cost_range,
                                                          spec.carbon_sensitive_fraction, seed))
    cfg = None
    if args.model == "carbon-flow":
        cfg = CarbonFlowConfig(max_iterations=args.max_iterations, refine_max_iterations=args.refine_iterations)
    sol = solve_model(args.model, net, cfg)
    rep = compute_metrics(net, sol)
    payload = _solution_payload(net, sol)
    doc = {"schema_version": RESULT_SCHEMA_VERSION, "model": args.model, "network": source,
           "metrics": rep.to_dict(), "solution": payload}
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        if args.format == "json":
            with open(os.path.join(args.out, "result.json"), "w") as fh:
                json.dump(doc, fh, indent=1, sort_keys=True)
                fh.write("\n")
        else:
            with open(os.path.join(args.out, "metrics.csv"), "w", newline="") as fh:
                fh.write(_metrics_csv(rep))
            with open(os.path.join(args.out, "solution.csv"), "w", newline="") as fh:
                fh.write(_solution_csv(payload))
    else:
        sys.stdout.write(json.dumps(doc, indent=1, sort_keys=True) + "\n" if args.format == "json"
                         else _metrics_csv(rep))
    for note in payload["notes"]:
        print(f"note: {note}", file=sys.stderr)
    if isinstance(sol, CarbonFlowSolution) and not sol.converged:
        print(f"carbon-flow solve did not converge after {sol.iterations} iterations; "
              "best iterate written", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _sweep_common(args):
    if args.trials < 1:
        raise InputError("--trials must be >= 1")
    if args.workers is not None and args.workers < 1:
        raise InputError("--workers must be >= 1")
    net, _, source = _network_and_spec(args)
    models = parse_models(args.models, CARBON_MODELS)
    return net, source, models


def _sweep_exit(doc, out) -> int:
    failed = [t for t in doc["trials"] if t["status"] in ("infeasible", "error")]
    stalled = [t for t in doc["trials"] if t["status"] == "not-converged"]
    if failed:
        print(f"{len(failed)} trial(s) failed; partial results written to {out}", file=sys.stderr)
    if stalled:
        print(f"{len(stalled)} carbon-flow trial(s) stopped without converging", file=sys.stderr)
    return EXIT_OK


def cmd_sweep_costs(args) -> int:
    net, source, models = _sweep_common(args)
    ranges = parse_ranges(args.ranges)
    fraction = parse_fractions(args.fraction)[0]
    doc, _ = sweep_costs(net, source, ranges, args.seed or 0, args.trials, models, fraction,
                         args.out, args.workers)
    return _sweep_exit(doc, args.out)


def cmd_sweep_fraction(args) -> int:
    net, source, models = _sweep_common(args)
    fractions = parse_fractions(args.fractions)
    doc, _ = sweep_fraction(net, source, fractions, parse_range(args.range), args.seed or 0, args.trials,
                            models, args.out, args.workers)
    return _sweep_exit(doc, args.out)


def cmd_report(args) -> int:
    docs = load_results(args.results)
    written = write_report(docs, args.out, args.format, figures=args.figures)
    for p in written:
        print(p)
    return EXIT_OK


def cmd_import_matpower(args) -> int:
    case = read_case(args.case)
    export_rts_gmlc_csv(case, args.out)
    print(args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="carbonclear", description="Electricity market clearing with "
                                "consumer carbon costs, carbon-agnostic benchmarks and carbon-flow comparison.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def network_args(sp):
        sp.add_argument("--network", help="builtin:3bus (default), rts-gmlc, rts-gmlc:<dir> or file:<scenario.json>")
        sp.add_argument("--scenario", help="scenario file (network and scenario settings)")
        sp.add_argument("--utilities", help="utility spec for RTS-GMLC: const:V | uniform:LO:HI[:SEED[:TARGET]] "
                        "| file:PATH")
        sp.add_argument("--demand-floor", type=float, default=0.8,
                        help="minimum demand as a fraction of nominal load (RTS-GMLC, default 0.8)")
        sp.add_argument("--strict", action=argparse.BooleanOptionalAction, default=True,
                        help="reject unknown scenario-file fields (default); --no-strict only warns")
        sp.add_argument("--seed", type=int, default=None, help="master seed (default 0)")

    s = sub.add_parser("solve", help="clear one market instance")
    network_args(s)
    s.add_argument("--model", choices=MODEL_NAMES, default="carbon-cost")
    s.add_argument("--carbon-costs", help="draw carbon costs: LO:HI[:PERCENT] (uses --seed)")
    s.add_argument("--max-iterations", type=int, default=100, help="carbon-flow fixed-point iterations")
    s.add_argument("--refine-iterations", type=int, default=300, help="carbon-flow refinement steps")
    s.add_argument("--format", choices=["csv", "json"], default="csv")
    s.add_argument("--out", help="output directory (default: metrics to stdout)")
    s.set_defaults(func=cmd_solve)

    workers_help = f"worker processes (default: ${WORKERS_ENV} or 1)"
    c = sub.add_parser("sweep-costs", help="carbon cost range sweep")
    network_args(c)
    c.add_argument("--ranges", default=",".join(f"{lo:g}:{hi:g}" for lo, hi in DEFAULT_RANGES),
                   help="comma-separated LO:HI ranges")
    c.add_argument("--fraction", default="100", help="carbon-sensitive percent (default 100)")
    c.add_argument("--models", default="carbon-cost", help="comma-separated: carbon-cost,carbon-flow")
    c.add_argument("--trials", type=int, default=5)
    c.add_argument("--workers", type=int, default=None, help=workers_help)
    c.add_argument("--out", required=True, help="experiment directory")
    c.set_defaults(func=cmd_sweep_costs)

    f = sub.add_parser("sweep-fraction", help="carbon-sensitive fraction sweep")
    network_args(f)
    f.add_argument("--fractions", default="10:100:10", help="START:STOP:STEP or comma list (percent)")
    f.add_argument("--range", default="30:60", help="carbon cost range LO:HI")
    f.add_argument("--models", default="carbon-cost", help="comma-separated: carbon-cost,carbon-flow")
    f.add_argument("--trials", type=int, default=5)
    f.add_argument("--workers", type=int, default=None, help=workers_help)
    f.add_argument("--out", required=True, help="experiment directory")
    f.set_defaults(func=cmd_sweep_fraction)

    r = sub.add_parser("report", help="plot-data tables and figures from result files")
    r.add_argument("results", nargs="+", help="result.json files or experiment directories")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--format", choices=["csv", "json"], default="csv")
    r.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True,
                   help="also render PNG figures (default)")
    r.set_defaults(func=cmd_report)

    m = sub.add_parser("import-matpower", help="convert a MATPOWER RTS-GMLC case to bus/branch/gen CSVs")
    m.add_argument("case", help="case_RTS_GMLC.m")
    m.add_argument("--out", required=True, help="output directory")
    m.set_defaults(func=cmd_import_matpower)
    return p


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "workers", None) is None and hasattr(args, "workers"):
            args.workers = default_workers()
        return args.func(args)
    except ClearingInfeasible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InputError, ScenarioParseError, ValidationError, ReportError, MatpowerParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - reported, not raised
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
