"""Scenario inputs: RTS-GMLC CSV ingestion, seeded carbon-cost draws and the
JSON scenario file.

Scenario file layout (``format`` and ``version`` are mandatory)::

    {
      "format": "carbonclear-scenario",
      "version": 1,
      "units": {"power": "MW", "price": "$/MWh", "susceptance": "MW/rad",
                "emission_intensity": "tons/MWh", "carbon_cost": "$/ton"},
      "network": {"name": ..., "buses": [...], "lines": [...],
                  "generators": [...], "consumers": [...]},
      "scenario": {"carbon_cost_range_per_ton": [lo, hi], ...}
    }

Instead of an inline ``network`` object a file may give ``network_source``
(``"builtin:3bus"``, ``"rts-gmlc"`` or ``"rts-gmlc:<dir>"``).  Field names
carry their unit so a file is readable on its own; see ``data/three_bus.json``
for a worked example.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from .model import (Bus, Consumer, Generator, Line, Network, ValidationError, builtin_three_bus,
                    validate_network)

log = logging.getLogger(__name__)

SCENARIO_FORMAT = "carbonclear-scenario"
SCENARIO_VERSION = 1
UNITS = {"power": "MW", "price": "$/MWh", "susceptance": "MW/rad",
         "emission_intensity": "tons/MWh", "carbon_cost": "$/ton"}

RTS_BASE_MVA = 100.0
DEFAULT_FLEX_FLOOR = 0.8
# u . P_max of the calibrated RTS-GMLC consumers, $ per hour
RTS_UTILITY_TARGET = 457039.0
DEFAULT_RTS_UTILITIES = f"uniform:40:67:20240101:{RTS_UTILITY_TARGET:g}"


class ScenarioParseError(ValueError):
    """Input data that cannot be turned into a network or scenario.

    ``location`` points at the offending item: ``file:row:column`` for CSV
    input, a dotted path such as ``network.lines[0].flow_limit_mw`` for
    scenario files.
    """

    def __init__(self, location: str, message: str):
        self.location = location
        self.message = message
        super().__init__(f"{location}: {message}" if location else message)


# ---------------------------------------------------------------------------
# emission intensities

FUEL_ALIASES = {
    "natural gas": "NG", "gas": "NG", "ng": "NG",
    "oil": "Oil", "coal": "Coal",
    "wind": "Wind", "solar": "Solar", "pv": "Solar", "csp": "Solar", "rtpv": "Solar",
    "hydro": "Hydro", "ror": "Hydro",
    "nuclear": "Nuclear", "sync_cond": "Sync_Cond", "storage": "Storage",
}


@dataclass(frozen=True)
class EmissionIntensityTable:
    """Fuel label -> emission intensity (tons/MWh)."""

    values: dict = field(default_factory=lambda: {
        "NG": 0.6042, "Oil": 0.7434, "Coal": 0.9606,
        "Wind": 0.0, "Solar": 0.0, "Hydro": 0.0,
        # carbon-free units present in the dataset
        "Nuclear": 0.0, "Sync_Cond": 0.0, "Storage": 0.0,
    })
    default: Optional[float] = None  # used for unlisted fuels when set

    def __post_init__(self):
        for k, v in self.values.items():
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"emission intensity for {k!r} must be finite and >= 0")
        if self.default is not None and not self.default >= 0:
            raise ValueError("default emission intensity must be >= 0")

    def lookup(self, fuel: str) -> float:
        key = FUEL_ALIASES.get(fuel.strip().lower(), fuel.strip())
        if key in self.values:
            return float(self.values[key])
        if self.default is not None:
            return float(self.default)
        raise KeyError(fuel)


# ---------------------------------------------------------------------------
# scenario spec


@dataclass(frozen=True)
class ScenarioSpec:
    network: str = "builtin:3bus"
    carbon_cost_range: Optional[tuple[float, float]] = None  # None: use costs in the network
    carbon_sensitive_fraction: float = 100.0  # percent
    demand_flex_floor: float = DEFAULT_FLEX_FLOOR
    seed: int = 0
    trials: int = 1
    utilities: Optional[str] = None  # utility assignment spec for RTS-GMLC

    def __post_init__(self):
        if self.carbon_cost_range is not None:
            lo, hi = self.carbon_cost_range
            object.__setattr__(self, "carbon_cost_range", (float(lo), float(hi)))
            if not (0 <= lo <= hi and math.isfinite(hi)):
                raise ValueError(f"carbon cost range must satisfy 0 <= lo <= hi, got [{lo}, {hi}]")
        if not 0 <= self.carbon_sensitive_fraction <= 100:
            raise ValueError("carbon_sensitive_fraction must be within [0, 100]")
        if not 0 < self.demand_flex_floor <= 1:
            raise ValueError("demand_flex_floor must be within (0, 1]")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


# ---------------------------------------------------------------------------
# carbon costs


def sensitive_count(n: int, fraction: float) -> int:
    """Number of carbon-sensitive consumers, rounded half up."""
    return int(math.floor(fraction * n / 100.0 + 0.5))


def generate_carbon_costs(consumers, cost_range: Sequence[float], fraction: float, seed) -> np.ndarray:
    """Carbon costs ($/ton) for ``consumers`` (a count or a sequence).

    A seeded shuffle picks the carbon-sensitive subset (the first ``k``
    consumers of the permutation); those draw i.i.d. uniform costs in
    ``cost_range``, everyone else gets zero.  ``seed`` may be an int or a
    ``numpy.random.SeedSequence``.
    """
    n = consumers if isinstance(consumers, int) else len(consumers)
    lo, hi = float(cost_range[0]), float(cost_range[1])
    if not 0 <= lo <= hi:
        raise ValueError(f"carbon cost range must satisfy 0 <= lo <= hi, got [{lo}, {hi}]")
    if not 0 <= fraction <= 100:
        raise ValueError("fraction must be within [0, 100]")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    k = sensitive_count(n, fraction)
    out = np.zeros(n)
    out[order[:k]] = rng.uniform(lo, hi, size=k)
    return out


# ---------------------------------------------------------------------------
# utilities


def parse_utility_spec(spec: str, consumer_ids: Sequence[str], p_max: Sequence[float]) -> np.ndarray:
    """Utility bids ($/MWh) from an assignment spec.

    ``const:V``
        every consumer bids ``V``.
    ``uniform:LO:HI[:SEED[:TARGET]]``
        i.i.d. uniform draws; with ``TARGET`` the draws are rescaled so that
        ``sum(u * p_max) == TARGET``.
    ``file:PATH``
        CSV with columns ``consumer`` and ``utility``; every consumer must be listed.
    """
    kind, _, rest = spec.partition(":")
    n = len(consumer_ids)
    try:
        if kind == "const":
            u = np.full(n, float(rest))
        elif kind == "uniform":
            parts = rest.split(":")
            if not 2 <= len(parts) <= 4:
                raise ValueError("expected uniform:LO:HI[:SEED[:TARGET]]")
            lo, hi = float(parts[0]), float(parts[1])
            if not lo <= hi:
                raise ValueError("uniform range needs LO <= HI")
            seed = int(parts[2]) if len(parts) > 2 else 0
            u = np.random.default_rng(seed).uniform(lo, hi, size=n)
            if len(parts) > 3:
                target = float(parts[3])
                total = float(u @ np.asarray(p_max, float))
                if total <= 0:
                    raise ValueError("cannot rescale utilities: zero total demand")
                u = u * (target / total)
        elif kind == "file":
            u = _read_utility_file(rest, consumer_ids)
        else:
            raise ValueError(f"unknown utility spec kind {kind!r}")
    except ValueError as exc:
        if isinstance(exc, ScenarioParseError):
            raise
        raise ScenarioParseError("utilities", f"{spec!r}: {exc}") from None
    if np.any(u < 0) or not np.all(np.isfinite(u)):
        raise ScenarioParseError("utilities", f"{spec!r}: utilities must be finite and >= 0")
    return u


def _read_utility_file(path: str, consumer_ids: Sequence[str]) -> np.ndarray:
    values = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for col in ("consumer", "utility"):
            if col not in (reader.fieldnames or []):
                raise ScenarioParseError(f"{path}:1:{col}", "missing column")
        for row in reader:
            values[row["consumer"].strip()] = _float(row["utility"], path, reader.line_num, "utility")
    missing = [c for c in consumer_ids if c not in values]
    if missing:
        raise ScenarioParseError(path, f"no utility for consumers {', '.join(missing[:5])}")
    return np.array([values[c] for c in consumer_ids])


# ---------------------------------------------------------------------------
# RTS-GMLC CSV tables


def bundled_rts_gmlc_dir() -> str:
    return str(resources.files("carbonclear") / "data" / "rts_gmlc")


def _float(text, path, row, col) -> float:
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise ScenarioParseError(f"{os.path.basename(path)}:{row}:{col}", f"not a number: {text!r}") from None
    if not math.isfinite(v):
        raise ScenarioParseError(f"{os.path.basename(path)}:{row}:{col}", f"not finite: {text!r}")
    return v


def _read_table(path: str, required: Sequence[str]):
    name = os.path.basename(path)
    if not os.path.exists(path):
        raise ScenarioParseError(name, f"file not found: {path}")
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        for col in required:
            if col not in header:
                raise ScenarioParseError(f"{name}:1:{col}", "missing column")
        rows = []
        for row in reader:
            if None in row:
                raise ScenarioParseError(f"{name}:{reader.line_num}", "more fields than header columns")
            rows.append(({k.strip(): (v.strip() if v is not None else None) for k, v in row.items()},
                         reader.line_num))
    return header, rows


def _chord_cost(xs, ys) -> float:
    """Average incremental cost between the first and last point of a cost curve."""
    if xs[-1] == xs[0]:
        return 0.0
    return (ys[-1] - ys[0]) / (xs[-1] - xs[0])


def _generator_cost(row, header, path, line) -> float:
    """Linear $/MWh cost of a generator row.

    Precedence: a ``Linear Cost $/MWh`` column; otherwise the chord slope of
    the piecewise curve given as ``Cost Point MW k`` / ``Cost Point $/h k``;
    otherwise the chord slope of the heat-rate curve (``Output_pct_k``,
    ``HR_avg_0``, ``HR_incr_k``, ``Fuel Price $/MMBTU``) plus ``VOM``.
    """
    if "Linear Cost $/MWh" in header and row.get("Linear Cost $/MWh"):
        return _float(row["Linear Cost $/MWh"], path, line, "Linear Cost $/MWh")
    pts = sorted(int(h.rsplit(" ", 1)[1]) for h in header if h.startswith("Cost Point MW "))
    if pts:
        xs, ys = [], []
        for k in pts:
            mw, cost = row.get(f"Cost Point MW {k}"), row.get(f"Cost Point $/h {k}")
            if not mw and not cost:
                continue  # unused trailing points
            xs.append(_float(mw, path, line, f"Cost Point MW {k}"))
            ys.append(_float(cost, path, line, f"Cost Point $/h {k}"))
        return _chord_cost(xs, ys) if xs else 0.0
    if "HR_avg_0" in header:
        pmax = _float(row["PMax MW"], path, line, "PMax MW")
        price = _float(row.get("Fuel Price $/MMBTU") or 0, path, line, "Fuel Price $/MMBTU")
        vom = _float(row.get("VOM") or 0, path, line, "VOM")
        hr0 = _float(row.get("HR_avg_0") or 0, path, line, "HR_avg_0")
        if hr0 == 0 or pmax == 0:
            return vom
        xs = [_float(row["Output_pct_0"], path, line, "Output_pct_0") * pmax]
        ys = [hr0 * xs[0] / 1000.0 * price]  # BTU/kWh * MW -> MMBTU/h
        k = 1
        while f"Output_pct_{k}" in header and row.get(f"Output_pct_{k}"):
            x = _float(row[f"Output_pct_{k}"], path, line, f"Output_pct_{k}") * pmax
            hr = _float(row[f"HR_incr_{k}"], path, line, f"HR_incr_{k}")
            ys.append(ys[-1] + hr * (x - xs[-1]) / 1000.0 * price)
            xs.append(x)
            k += 1
        return _chord_cost(xs, ys) + vom
    raise ScenarioParseError(f"{os.path.basename(path)}:1", "no generator cost columns "
                             "(Linear Cost $/MWh, Cost Point ..., or HR_avg_0 ...)")


def _bus_id(text) -> str:
    # "101" and "101.0" name the same bus
    try:
        f = float(text)
        if f.is_integer():
            return str(int(f))
    except (TypeError, ValueError):
        pass
    return str(text)


def load_rts_gmlc(directory: Optional[str] = None,
                  intensities: Optional[EmissionIntensityTable] = None,
                  flex_floor: float = DEFAULT_FLEX_FLOOR,
                  utilities: Optional[str] = DEFAULT_RTS_UTILITIES,
                  base_mva: float = RTS_BASE_MVA) -> Network:
    """Build a network from RTS-GMLC ``bus.csv``, ``branch.csv`` and ``gen.csv``.

    Every bus with nonzero ``MW Load`` hosts one consumer ``d<bus>`` whose
    demand ranges over ``[flex_floor * load, load]``.  Susceptances are
    ``base_mva / X`` (MW/rad), limits come from ``Cont Rating`` and the
    lowest-numbered bus is the angle reference.  ``utilities`` is a utility
    assignment spec (see :func:`parse_utility_spec`); ``None`` leaves every
    utility at zero.
    """
    directory = directory or bundled_rts_gmlc_dir()
    intensities = intensities or EmissionIntensityTable()
    if not 0 < flex_floor <= 1:
        raise ValueError("flex_floor must be within (0, 1]")

    bus_path = os.path.join(directory, "bus.csv")
    _, bus_rows = _read_table(bus_path, ["Bus ID", "MW Load"])
    bus_ids, loads = [], []
    for row, line in bus_rows:
        if not row["Bus ID"]:
            raise ScenarioParseError(f"bus.csv:{line}:Bus ID", "empty bus id")
        bus_ids.append(_bus_id(row["Bus ID"]))
        loads.append(_float(row["MW Load"], bus_path, line, "MW Load"))

    def sort_key(b):
        try:
            return (0, float(b), b)
        except ValueError:
            return (1, 0.0, b)

    ref = min(bus_ids, key=sort_key) if bus_ids else None
    buses = [Bus(b, b == ref) for b in bus_ids]

    br_path = os.path.join(directory, "branch.csv")
    _, br_rows = _read_table(br_path, ["UID", "From Bus", "To Bus", "X", "Cont Rating"])
    lines = []
    for row, line in br_rows:
        x = _float(row["X"], br_path, line, "X")
        if x == 0:
            raise ScenarioParseError(f"branch.csv:{line}:X", "zero reactance")
        lines.append(Line(_bus_id(row["From Bus"]), _bus_id(row["To Bus"]), base_mva / x,
                          _float(row["Cont Rating"], br_path, line, "Cont Rating"), id=row["UID"]))

    gen_path = os.path.join(directory, "gen.csv")
    header, gen_rows = _read_table(gen_path, ["GEN UID", "Bus ID", "Fuel", "PMax MW", "PMin MW"])
    gens = []
    for row, line in gen_rows:
        fuel = row["Fuel"]
        try:
            e = intensities.lookup(fuel)
        except KeyError:
            raise ScenarioParseError(f"gen.csv:{line}:Fuel",
                                     f"unknown fuel {fuel!r} and no default intensity configured") from None
        gens.append(Generator(row["GEN UID"], _bus_id(row["Bus ID"]),
                              _generator_cost(row, header, gen_path, line),
                              _float(row["PMin MW"], gen_path, line, "PMin MW"),
                              _float(row["PMax MW"], gen_path, line, "PMax MW"), e, fuel))

    cons = [Consumer(f"d{b}", b, 0.0, flex_floor * p, p) for b, p in zip(bus_ids, loads) if p != 0]
    net = Network(buses, lines, gens, cons, name="rts-gmlc")
    if utilities is not None and cons:
        u = parse_utility_spec(utilities, [c.id for c in cons], [c.p_max for c in cons])
        net = net.with_utilities(u)
    problems = validate_network(net)
    if problems:
        raise ValidationError(problems)
    return net


# ---------------------------------------------------------------------------
# scenario files

_TOP_FIELDS = {"format", "version", "units", "network", "network_source", "scenario"}
_BUS_FIELDS = {"id", "reference"}
_LINE_FIELDS = {"id", "from", "to", "susceptance_mw_per_rad", "flow_limit_mw"}
_GEN_FIELDS = {"id", "bus", "cost_per_mwh", "p_min_mw", "p_max_mw", "emission_tons_per_mwh", "fuel"}
_CONS_FIELDS = {"id", "bus", "utility_per_mwh", "p_min_mw", "p_max_mw", "carbon_cost_per_ton"}
_SPEC_FIELDS = {"carbon_cost_range_per_ton", "carbon_sensitive_percent", "demand_flex_floor",
                "seed", "trials", "utilities"}


class _Reader:
    def __init__(self, strict: bool):
        self.strict = strict
        self.warnings: list[str] = []

    def check_fields(self, obj, allowed, where):
        if not isinstance(obj, dict):
            raise ScenarioParseError(where, "expected an object")
        for k in obj:
            if k not in allowed:
                msg = f"unknown field {k!r}"
                if self.strict:
                    raise ScenarioParseError(f"{where}.{k}" if where else k, msg)
                self.warnings.append(f"{where}.{k}: {msg}" if where else f"{k}: {msg}")
                log.warning("%s: %s", where or "scenario", msg)

    @staticmethod
    def req(obj, key, where):
        if key not in obj:
            raise ScenarioParseError(f"{where}.{key}", "missing field")
        return obj[key]

    def num(self, obj, key, where, default=None, lower=None, label=None):
        if key not in obj:
            if default is None:
                raise ScenarioParseError(f"{where}.{key}", "missing field")
            return default
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ScenarioParseError(f"{where}.{key}", f"expected a number, got {v!r}")
        v = float(v)
        if not math.isfinite(v):
            raise ScenarioParseError(f"{where}.{key}", "value must be finite")
        if lower is not None and v < lower:
            raise ScenarioParseError(f"{where}.{key}", f"bound: {label or key} must be >= {lower}, got {v!r}")
        return v

    @staticmethod
    def text(obj, key, where, default=None):
        if key not in obj:
            if default is None:
                raise ScenarioParseError(f"{where}.{key}", "missing field")
            return default
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, (str, int)):
            raise ScenarioParseError(f"{where}.{key}", f"expected a string, got {v!r}")
        return str(v)

    def items(self, obj, key, where):
        v = obj.get(key, [])
        if not isinstance(v, list):
            raise ScenarioParseError(f"{where}.{key}", "expected a list")
        return v


def network_to_dict(net: Network) -> dict:
    return {
        "name": net.name,
        "buses": [{"id": b.id, "reference": b.is_reference} for b in net.buses],
        "lines": [{"id": ln.id, "from": ln.from_bus, "to": ln.to_bus,
                   "susceptance_mw_per_rad": ln.susceptance, "flow_limit_mw": ln.flow_limit}
                  for ln in net.lines],
        "generators": [{"id": g.id, "bus": g.bus, "cost_per_mwh": g.cost, "p_min_mw": g.p_min,
                        "p_max_mw": g.p_max, "emission_tons_per_mwh": g.emission_intensity, "fuel": g.fuel}
                       for g in net.generators],
        "consumers": [{"id": d.id, "bus": d.bus, "utility_per_mwh": d.utility, "p_min_mw": d.p_min,
                       "p_max_mw": d.p_max, "carbon_cost_per_ton": d.carbon_cost}
                      for d in net.consumers],
    }


def network_from_dict(obj: dict, strict: bool = True, where: str = "network",
                      reader: Optional[_Reader] = None) -> Network:
    r = reader or _Reader(strict)
    r.check_fields(obj, {"name", "buses", "lines", "generators", "consumers"}, where)
    buses, lines, gens, cons = [], [], [], []
    for i, b in enumerate(r.items(obj, "buses", where)):
        w = f"{where}.buses[{i}]"
        r.check_fields(b, _BUS_FIELDS, w)
        ref = b.get("reference", False)
        if not isinstance(ref, bool):
            raise ScenarioParseError(f"{w}.reference", "expected true or false")
        buses.append(Bus(r.text(b, "id", w), ref))
    for i, ln in enumerate(r.items(obj, "lines", where)):
        w = f"{where}.lines[{i}]"
        r.check_fields(ln, _LINE_FIELDS, w)
        lines.append(Line(r.text(ln, "from", w), r.text(ln, "to", w),
                          r.num(ln, "susceptance_mw_per_rad", w),
                          r.num(ln, "flow_limit_mw", w, lower=0.0, label="flow_limit"),
                          id=r.text(ln, "id", w, default="")))
    for i, g in enumerate(r.items(obj, "generators", where)):
        w = f"{where}.generators[{i}]"
        r.check_fields(g, _GEN_FIELDS, w)
        gens.append(Generator(r.text(g, "id", w), r.text(g, "bus", w),
                              r.num(g, "cost_per_mwh", w, lower=0.0, label="cost"),
                              r.num(g, "p_min_mw", w, lower=0.0, label="p_min"),
                              r.num(g, "p_max_mw", w, lower=0.0, label="p_max"),
                              r.num(g, "emission_tons_per_mwh", w, lower=0.0, label="emission_intensity"),
                              r.text(g, "fuel", w, default="")))
    for i, d in enumerate(r.items(obj, "consumers", where)):
        w = f"{where}.consumers[{i}]"
        r.check_fields(d, _CONS_FIELDS, w)
        cons.append(Consumer(r.text(d, "id", w), r.text(d, "bus", w),
                             r.num(d, "utility_per_mwh", w, lower=0.0, label="utility"),
                             r.num(d, "p_min_mw", w, lower=0.0, label="p_min"),
                             r.num(d, "p_max_mw", w, lower=0.0, label="p_max"),
                             r.num(d, "carbon_cost_per_ton", w, default=0.0, lower=0.0, label="carbon_cost")))
    net = Network(buses, lines, gens, cons, name=str(obj.get("name", "")))
    problems = validate_network(net)
    if problems:
        raise ScenarioParseError(where, "; ".join(f"{p.code}: {p.message}" for p in problems))
    return net


def spec_to_dict(spec: ScenarioSpec) -> dict:
    out = {
        "carbon_sensitive_percent": float(spec.carbon_sensitive_fraction),
        "demand_flex_floor": float(spec.demand_flex_floor),
        "seed": int(spec.seed),
        "trials": int(spec.trials),
    }
    if spec.carbon_cost_range is not None:
        out["carbon_cost_range_per_ton"] = list(spec.carbon_cost_range)
    if spec.utilities is not None:
        out["utilities"] = spec.utilities
    return out


def spec_from_dict(obj: dict, network: str, strict: bool = True, where: str = "scenario",
                   reader: Optional[_Reader] = None) -> ScenarioSpec:
    r = reader or _Reader(strict)
    r.check_fields(obj, _SPEC_FIELDS, where)
    rng = obj.get("carbon_cost_range_per_ton")
    if rng is not None:
        if not (isinstance(rng, list) and len(rng) == 2):
            raise ScenarioParseError(f"{where}.carbon_cost_range_per_ton", "expected [lo, hi]")
        rng = (r.num({"lo": rng[0]}, "lo", f"{where}.carbon_cost_range_per_ton", lower=0.0),
               r.num({"hi": rng[1]}, "hi", f"{where}.carbon_cost_range_per_ton", lower=0.0))
    seed = obj.get("seed", 0)
    trials = obj.get("trials", 1)
    for key, v in (("seed", seed), ("trials", trials)):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ScenarioParseError(f"{where}.{key}", f"expected an integer, got {v!r}")
    utilities = obj.get("utilities")
    if utilities is not None and not isinstance(utilities, str):
        raise ScenarioParseError(f"{where}.utilities", "expected a utility spec string")
    try:
        return ScenarioSpec(network, rng,
                            r.num(obj, "carbon_sensitive_percent", where, default=100.0),
                            r.num(obj, "demand_flex_floor", where, default=DEFAULT_FLEX_FLOOR),
                            seed, trials, utilities)
    except ValueError as exc:
        raise ScenarioParseError(where, str(exc)) from None


def parse_scenario(obj, strict: bool = True, base_dir: str = ".", origin: str = "") -> tuple[Network, ScenarioSpec]:
    """Decode a scenario document (already JSON-decoded)."""
    r = _Reader(strict)
    if not isinstance(obj, dict):
        raise ScenarioParseError(origin, "top level must be an object")
    r.check_fields(obj, _TOP_FIELDS, "")
    if obj.get("format") != SCENARIO_FORMAT:
        raise ScenarioParseError("format", f"expected {SCENARIO_FORMAT!r}, got {obj.get('format')!r}")
    if "version" not in obj:
        raise ScenarioParseError("version", "missing field")
    if obj["version"] != SCENARIO_VERSION:
        raise ScenarioParseError("version", f"unsupported version {obj['version']!r} "
                                 f"(this build reads version {SCENARIO_VERSION})")
    units = obj.get("units", UNITS)
    if not isinstance(units, dict):
        raise ScenarioParseError("units", "expected an object")
    for k, v in units.items():
        if k not in UNITS:
            r.check_fields({k: v}, set(UNITS), "units")
        elif v != UNITS[k]:
            raise ScenarioParseError(f"units.{k}", f"unsupported unit {v!r}, expected {UNITS[k]!r}")
    if ("network" in obj) == ("network_source" in obj):
        raise ScenarioParseError("network", "give exactly one of 'network' and 'network_source'")
    spec_obj = obj.get("scenario", {})
    if "network" in obj:
        net = network_from_dict(obj["network"], strict, "network", r)
        spec = spec_from_dict(spec_obj, "inline", strict, "scenario", r)
    else:
        source = obj["network_source"]
        if not isinstance(source, str):
            raise ScenarioParseError("network_source", "expected a string")
        if source.startswith("rts-gmlc:") and not os.path.isabs(source[9:]):
            source = "rts-gmlc:" + os.path.normpath(os.path.join(base_dir, source[9:]))
        spec = spec_from_dict(spec_obj, source, strict, "scenario", r)
        net = resolve_network(source, spec)
    return net, spec


def load_scenario_file(path, strict: bool = True) -> tuple[Network, ScenarioSpec]:
    """Read a scenario file; ``strict=False`` turns unknown fields into warnings."""
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ScenarioParseError(str(path), f"cannot read: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None
    try:
        return parse_scenario(obj, strict, os.path.dirname(os.path.abspath(path)), str(path))
    except ScenarioParseError as exc:
        raise ScenarioParseError(f"{path}: {exc.location}" if exc.location else str(path), exc.message) from None


def scenario_document(net: Network, spec: Optional[ScenarioSpec] = None) -> dict:
    spec = spec or ScenarioSpec(network="inline")
    return {"format": SCENARIO_FORMAT, "version": SCENARIO_VERSION, "units": dict(UNITS),
            "network": network_to_dict(net), "scenario": spec_to_dict(spec)}


def save_scenario_file(path, net: Network, spec: Optional[ScenarioSpec] = None) -> None:
    """Write ``net`` and ``spec`` inline.  Floats use the shortest repr, so
    loading the file reproduces every value bit for bit."""
    with open(path, "w") as fh:
        json.dump(scenario_document(net, spec), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# network sources


def resolve_network(source: str, spec: Optional[ScenarioSpec] = None, strict: bool = True) -> Network:
    """Network for a source string.

    ``builtin:3bus``, ``rts-gmlc`` (bundled tables), ``rts-gmlc:<dir>`` or
    ``file:<scenario.json>`` (a bare path ending in ``.json`` also works).
    """
    spec = spec or ScenarioSpec(network=source)
    if source in ("builtin:3bus", "3bus", "builtin:three-bus"):
        return builtin_three_bus()
    if source == "rts-gmlc" or source.startswith("rts-gmlc:"):
        directory = source[9:] or None
        utilities = spec.utilities if spec.utilities is not None else DEFAULT_RTS_UTILITIES
        return load_rts_gmlc(directory, flex_floor=spec.demand_flex_floor, utilities=utilities)
    if source.startswith("file:") or source.endswith(".json"):
        net, _ = load_scenario_file(source[5:] if source.startswith("file:") else source, strict)
        return net
    raise ScenarioParseError("network", f"unknown network source {source!r}")


def apply_carbon_costs(net: Network, spec: ScenarioSpec, seed=None) -> Network:
    """Network with carbon costs drawn per ``spec`` (unchanged when the spec has no range)."""
    if spec.carbon_cost_range is None:
        return net
    costs = generate_carbon_costs(len(net.consumers), spec.carbon_cost_range,
                                  spec.carbon_sensitive_fraction, spec.seed if seed is None else seed)
    return net.with_carbon_costs(costs)


def with_spec(spec: ScenarioSpec, **changes) -> ScenarioSpec:
    return replace(spec, **changes)
