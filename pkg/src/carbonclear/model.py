"""Network, market participants and solution records shared by every solver."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

# Absolute tolerance (MW / tons) for every balance check in the package.
FEAS_TOL = 1e-6

# Default three-bus line data when no explicit parameters are given.
THREE_BUS_SUSCEPTANCE = 1.0
THREE_BUS_FLOW_LIMIT = 1e4


class ValidationError(ValueError):
    """Raised when a network or its inputs break a structural invariant."""

    def __init__(self, violations):
        self.violations = list(violations)
        text = "; ".join(f"{v.code}: {v.message}" for v in self.violations)
        super().__init__(text or "invalid network")


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


@dataclass(frozen=True)
class Bus:
    id: str
    is_reference: bool = False


@dataclass(frozen=True)
class Line:
    from_bus: str
    to_bus: str
    susceptance: float  # MW per radian
    flow_limit: float  # MW
    id: str = ""


@dataclass(frozen=True)
class Generator:
    id: str
    bus: str
    cost: float  # $/MWh
    p_min: float
    p_max: float
    emission_intensity: float  # tons/MWh
    fuel: str = ""


@dataclass(frozen=True)
class Consumer:
    id: str
    bus: str
    utility: float  # $/MWh
    p_min: float
    p_max: float
    carbon_cost: float = 0.0  # $/ton


@dataclass(frozen=True)
class Network:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    consumers: tuple[Consumer, ...]
    name: str = ""

    def __post_init__(self):
        # accept any sequence but store tuples so instances stay hashable/immutable
        for attr in ("buses", "lines", "generators", "consumers"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))

    @property
    def bus_index(self) -> dict[str, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @property
    def reference_bus(self) -> Bus:
        refs = [b for b in self.buses if b.is_reference]
        if len(refs) != 1:
            raise ValidationError([Violation("multiple-reference" if refs else "no-reference",
                                             f"{len(refs)} reference buses")])
        return refs[0]

    def with_carbon_costs(self, costs: Sequence[float]) -> "Network":
        if len(costs) != len(self.consumers):
            raise ValueError(f"expected {len(self.consumers)} carbon costs, got {len(costs)}")
        consumers = tuple(
            Consumer(c.id, c.bus, c.utility, c.p_min, c.p_max, float(v))
            for c, v in zip(self.consumers, costs)
        )
        return Network(self.buses, self.lines, self.generators, consumers, self.name)

    def with_utilities(self, utilities: Sequence[float]) -> "Network":
        if len(utilities) != len(self.consumers):
            raise ValueError(f"expected {len(self.consumers)} utilities, got {len(utilities)}")
        consumers = tuple(
            Consumer(c.id, c.bus, float(u), c.p_min, c.p_max, c.carbon_cost)
            for c, u in zip(self.consumers, utilities)
        )
        return Network(self.buses, self.lines, self.generators, consumers, self.name)

    # array views used by the solvers
    def gen_arrays(self):
        g = self.generators
        return (np.array([x.cost for x in g], float), np.array([x.p_min for x in g], float),
                np.array([x.p_max for x in g], float),
                np.array([x.emission_intensity for x in g], float))

    def consumer_arrays(self):
        d = self.consumers
        return (np.array([x.utility for x in d], float), np.array([x.p_min for x in d], float),
                np.array([x.p_max for x in d], float),
                np.array([x.carbon_cost for x in d], float))


def validate_network(net: Network) -> list[Violation]:
    """Return every invariant violation found in ``net`` (empty list when valid)."""
    out: list[Violation] = []
    ids = [b.id for b in net.buses]
    known = set(ids)
    if len(known) != len(ids):
        out.append(Violation("duplicate-bus", "bus ids are not unique"))
    if not net.buses:
        out.append(Violation("no-buses", "network has no buses"))
    nref = sum(b.is_reference for b in net.buses)
    if nref > 1:
        out.append(Violation("multiple-reference", f"{nref} buses flagged as reference"))
    elif nref == 0 and net.buses:
        out.append(Violation("no-reference", "no reference bus"))

    for k, ln in enumerate(net.lines):
        tag = ln.id or f"line[{k}]"
        if ln.from_bus not in known or ln.to_bus not in known:
            out.append(Violation("unknown-bus", f"{tag} references a missing bus"))
        if ln.from_bus == ln.to_bus:
            out.append(Violation("self-loop", f"{tag} starts and ends at {ln.from_bus}"))
        if not ln.flow_limit >= 0:
            out.append(Violation("bound", f"{tag} flow_limit {ln.flow_limit} < 0"))
        if not np.isfinite(ln.susceptance) or ln.susceptance == 0:
            out.append(Violation("susceptance", f"{tag} susceptance must be finite and nonzero"))

    for g in net.generators:
        if g.bus not in known:
            out.append(Violation("unknown-bus", f"generator {g.id} at missing bus {g.bus}"))
        if not (0 <= g.p_min <= g.p_max):
            out.append(Violation("bound-order", f"generator {g.id}: need 0 <= p_min <= p_max"))
        if g.cost < 0:
            out.append(Violation("negative-cost", f"generator {g.id} cost < 0"))
        if g.emission_intensity < 0:
            out.append(Violation("negative-intensity", f"generator {g.id} intensity < 0"))

    for d in net.consumers:
        if d.bus not in known:
            out.append(Violation("unknown-bus", f"consumer {d.id} at missing bus {d.bus}"))
        if not (0 <= d.p_min <= d.p_max):
            out.append(Violation("bound-order", f"consumer {d.id}: need 0 <= p_min <= p_max"))
        if d.carbon_cost < 0:
            out.append(Violation("negative-carbon-cost", f"consumer {d.id} carbon_cost < 0"))

    for kind, items in (("generator", net.generators), ("consumer", net.consumers)):
        seen = [x.id for x in items]
        if len(set(seen)) != len(seen):
            out.append(Violation("duplicate-id", f"{kind} ids are not unique"))

    if net.buses and not any(v.code == "unknown-bus" for v in out) and not _connected(net):
        out.append(Violation("disconnected", "bus/line graph is not connected"))
    return out


def _connected(net: Network) -> bool:
    adj: dict[str, list[str]] = {b.id: [] for b in net.buses}
    for ln in net.lines:
        adj[ln.from_bus].append(ln.to_bus)
        adj[ln.to_bus].append(ln.from_bus)
    start = net.buses[0].id
    seen = {start}
    stack = [start]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == len(net.buses)


def require_valid(net: Network) -> None:
    problems = validate_network(net)
    if problems:
        raise ValidationError(problems)


def builtin_three_bus(line_params: Optional[Sequence[tuple[float, float]]] = None) -> Network:
    """Three-bus test system with one generator and one consumer per bus.

    ``line_params`` optionally gives ``(susceptance, flow_limit)`` for lines
    1-2, 1-3 and 2-3, in that order.
    """
    if line_params is None:
        line_params = [(THREE_BUS_SUSCEPTANCE, THREE_BUS_FLOW_LIMIT)] * 3
    if len(line_params) != 3:
        raise ValidationError([Violation("line-params", "expected three (susceptance, limit) pairs")])
    pairs = [("1", "2"), ("1", "3"), ("2", "3")]
    lines = [Line(a, b, float(s), float(f), id=f"L{a}{b}") for (a, b), (s, f) in zip(pairs, line_params)]
    buses = [Bus("1", True), Bus("2"), Bus("3")]
    gens = [
        Generator("g1", "1", 8.0, 0.0, 20.0, 0.6),
        Generator("g2", "2", 10.0, 0.0, 10.0, 1.0),
        Generator("g3", "3", 6.0, 0.0, 25.0, 0.2),
    ]
    cons = [
        Consumer("d1", "1", 18.0, 4.0, 6.0),
        Consumer("d2", "2", 20.0, 16.0, 24.0),
        Consumer("d3", "3", 21.0, 12.0, 18.0),
    ]
    net = Network(buses, lines, gens, cons, name="three-bus")
    require_valid(net)
    return net


@dataclass
class ObjectiveTerms:
    utility: float  # u_d . P_d
    carbon: float  # c_co2 . E_d
    generation_cost: float  # c_g . P_g

    @property
    def welfare(self) -> float:
        return self.utility - self.carbon - self.generation_cost


@dataclass
class DispatchSolution:
    model: str
    p_g: np.ndarray
    p_d: np.ndarray
    theta: np.ndarray
    line_flows: np.ndarray
    objective: float
    objective_terms: ObjectiveTerms
    allocation: Optional[np.ndarray] = None  # generators x consumers, MW
    e_d: Optional[np.ndarray] = None  # tons per consumer
    allocation_unique: bool = True
    notes: list[str] = field(default_factory=list)


@dataclass
class CarbonFlowSolution:
    dispatch: DispatchSolution
    lambda_e: np.ndarray  # tons/MWh per bus
    iterations: int
    converged: bool
    residual: float  # max nodal carbon imbalance, tons
    zero_throughflow_buses: list[str] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.dispatch.objective


class SolutionCheckError(AssertionError):
    pass


def line_flows_from_theta(net: Network, theta: np.ndarray) -> np.ndarray:
    idx = net.bus_index
    return np.array([ln.susceptance * (theta[idx[ln.from_bus]] - theta[idx[ln.to_bus]])
                     for ln in net.lines], float)


def nodal_imbalance(net: Network, p_g, p_d, flows) -> np.ndarray:
    """Generation + inflow - load - outflow at every bus (MW)."""
    idx = net.bus_index
    bal = np.zeros(len(net.buses))
    for g, p in zip(net.generators, p_g):
        bal[idx[g.bus]] += p
    for d, p in zip(net.consumers, p_d):
        bal[idx[d.bus]] -= p
    for ln, f in zip(net.lines, flows):
        bal[idx[ln.from_bus]] -= f
        bal[idx[ln.to_bus]] += f
    return bal


def check_solution(net: Network, sol: DispatchSolution, tol: float = FEAS_TOL) -> None:
    """Assert every dispatch invariant; raises :class:`SolutionCheckError`."""
    errs = []
    _, gmin, gmax, e_g = net.gen_arrays()
    _, dmin, dmax, _ = net.consumer_arrays()
    if np.any(sol.p_g < gmin - tol) or np.any(sol.p_g > gmax + tol):
        errs.append("generator bounds")
    if np.any(sol.p_d < dmin - tol) or np.any(sol.p_d > dmax + tol):
        errs.append("consumer bounds")
    ref = net.bus_index[net.reference_bus.id]
    if abs(sol.theta[ref]) > tol:
        errs.append("reference angle")
    flows = line_flows_from_theta(net, sol.theta)
    if np.max(np.abs(flows - sol.line_flows), initial=0.0) > tol * max(1.0, np.max(np.abs(flows), initial=0.0)):
        errs.append("line flows inconsistent with angles")
    limits = np.array([ln.flow_limit for ln in net.lines])
    if np.any(np.abs(sol.line_flows) > limits + tol):
        errs.append("line limits")
    if np.max(np.abs(nodal_imbalance(net, sol.p_g, sol.p_d, sol.line_flows)), initial=0.0) > tol:
        errs.append("nodal balance")
    if sol.allocation is not None:
        pi = sol.allocation
        if np.any(pi < -tol):
            errs.append("negative allocation")
        if np.max(np.abs(pi.sum(axis=1) - sol.p_g), initial=0.0) > tol:
            errs.append("allocation row sums")
        if np.max(np.abs(pi.sum(axis=0) - sol.p_d), initial=0.0) > tol:
            errs.append("allocation column sums")
        if sol.e_d is None or np.max(np.abs(e_g @ pi - sol.e_d), initial=0.0) > tol:
            errs.append("per-consumer emissions")
    if sol.e_d is not None:
        total = float(e_g @ sol.p_g)
        if abs(float(np.sum(sol.e_d)) - total) > tol * max(1.0, total):
            errs.append("emission conservation")
    if errs:
        raise SolutionCheckError(f"{sol.model}: " + ", ".join(errs))
