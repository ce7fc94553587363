"""LP market clearing: carbon-cost allocation model and the two DC-OPF benchmarks."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .lp import INF, LinearProgram, LpSolution, Sense, Status, solve_lp
from .model import (FEAS_TOL, DispatchSolution, Network, ObjectiveTerms, require_valid)


class ClearingModelKind(str, Enum):
    CARBON_COST = "carbon-cost"
    FIXED_DEMAND = "fixed"
    FLEXIBLE_DEMAND = "flexible"


class ClearingInfeasible(RuntimeError):
    """The clearing LP has no feasible point.

    ``families`` names the constraint groups (balance, line, bounds,
    allocation) whose phase-one artificials could not be driven to zero.
    """

    def __init__(self, model: str, families: Sequence[str], rows: Sequence[str]):
        self.model = model
        self.families = sorted(set(families))
        self.rows = list(rows)
        super().__init__(f"{model} clearing infeasible; implicated constraints: "
                         + (", ".join(self.families) or "unknown"))


@dataclass
class _Layout:
    lp: LinearProgram
    pg: list[int]
    pd: list[int]
    theta: list[int]
    flow: list[int]
    pi: Optional[np.ndarray] = None  # index matrix generators x consumers
    ed: Optional[list[int]] = None


def build_dispatch_lp(net: Network, *, fixed_demand: bool = False, carbon: Optional[str] = None,
                      lam: Optional[np.ndarray] = None) -> _Layout:
    """Assemble the DC-OPF core shared by all clearing models.

    ``carbon`` selects the emission block: ``None`` (carbon agnostic),
    ``"allocation"`` (generator-to-consumer allocation matrix) or ``"nodal"``
    (per-consumer emissions fixed to ``lam[bus] * P_d``).
    """
    cost, gmin, gmax, e_g = net.gen_arrays()
    util, dmin, dmax, cco2 = net.consumer_arrays()
    idx = net.bus_index
    sense = Sense.MINIMIZE if fixed_demand else Sense.MAXIMIZE
    lp = LinearProgram(sense)

    pg = [lp.add_variable(f"pg_{g.id}", gmin[k], gmax[k],
                          cost[k] if fixed_demand else -cost[k])
          for k, g in enumerate(net.generators)]
    if fixed_demand:
        pd = [lp.add_variable(f"pd_{d.id}", dmax[k], dmax[k], 0.0) for k, d in enumerate(net.consumers)]
    else:
        pd = [lp.add_variable(f"pd_{d.id}", dmin[k], dmax[k], util[k]) for k, d in enumerate(net.consumers)]
    theta = [lp.add_variable(f"theta_{b.id}", -INF, INF) for b in net.buses]
    flow = [lp.add_variable(f"f_{ln.id or k}", -ln.flow_limit, ln.flow_limit)
            for k, ln in enumerate(net.lines)]

    rows: list[list[tuple[int, float]]] = [[] for _ in net.buses]
    for k, g in enumerate(net.generators):
        rows[idx[g.bus]].append((pg[k], 1.0))
    for k, d in enumerate(net.consumers):
        rows[idx[d.bus]].append((pd[k], -1.0))
    for k, ln in enumerate(net.lines):
        rows[idx[ln.from_bus]].append((flow[k], -1.0))
        rows[idx[ln.to_bus]].append((flow[k], 1.0))
    for b, row in zip(net.buses, rows):
        lp.add_constraint(row, "=", 0.0, f"balance_{b.id}")
    for k, ln in enumerate(net.lines):
        i, j = idx[ln.from_bus], idx[ln.to_bus]
        lp.add_constraint([(flow[k], 1.0), (theta[i], -ln.susceptance), (theta[j], ln.susceptance)],
                          "=", 0.0, f"line_{ln.id or k}")
    lp.add_constraint([(theta[idx[net.reference_bus.id]], 1.0)], "=", 0.0, "bounds_reference")

    layout = _Layout(lp, pg, pd, theta, flow)
    if carbon == "allocation":
        ng, nd = len(net.generators), len(net.consumers)
        pi = np.empty((ng, nd), dtype=np.int64)
        for m, g in enumerate(net.generators):
            for n, d in enumerate(net.consumers):
                pi[m, n] = lp.add_variable(f"pi_{g.id}_{d.id}", 0.0, INF)
        ed = [lp.add_variable(f"ed_{d.id}", -INF, INF, -cco2[n]) for n, d in enumerate(net.consumers)]
        for m, g in enumerate(net.generators):
            lp.add_constraint([(int(v), 1.0) for v in pi[m]] + [(pg[m], -1.0)], "=", 0.0,
                              f"allocation_gen_{g.id}")
        for n, d in enumerate(net.consumers):
            lp.add_constraint([(int(v), 1.0) for v in pi[:, n]] + [(pd[n], -1.0)], "=", 0.0,
                              f"allocation_load_{d.id}")
        for n, d in enumerate(net.consumers):
            lp.add_constraint([(int(pi[m, n]), e_g[m]) for m in range(ng) if e_g[m] != 0.0]
                              + [(ed[n], -1.0)], "=", 0.0, f"allocation_emission_{d.id}")
        layout.pi = pi
        layout.ed = ed
    elif carbon == "nodal":
        assert lam is not None
        ed = [lp.add_variable(f"ed_{d.id}", -INF, INF, -cco2[n]) for n, d in enumerate(net.consumers)]
        for n, d in enumerate(net.consumers):
            lp.add_constraint([(ed[n], 1.0), (pd[n], -float(lam[idx[d.bus]]))], "=", 0.0,
                              f"emission_{d.id}")
        layout.ed = ed
    return layout


def _solve_layout(layout: _Layout, model: str) -> LpSolution:
    sol = solve_lp(layout.lp)
    if sol.status is Status.INFEASIBLE:
        names = [layout.lp.constraints[i].name for i in sol.infeasible_rows]
        families = [n.split("_", 1)[0] for n in names]
        raise ClearingInfeasible(model, families or ["unknown"], names)
    if sol.status is Status.UNBOUNDED:
        # all variables that carry cost are bounded, so this is a bug
        raise AssertionError(f"{model} clearing LP reported unbounded")
    return sol


def _dispatch_from(net: Network, layout: _Layout, x: np.ndarray, model: str) -> DispatchSolution:
    cost, _, _, _ = net.gen_arrays()
    util, _, _, _ = net.consumer_arrays()
    p_g = x[layout.pg]
    p_d = x[layout.pd]
    theta = x[layout.theta]
    flows = x[layout.flow]
    terms = ObjectiveTerms(float(util @ p_d), 0.0, float(cost @ p_g))
    return DispatchSolution(model, p_g, p_d, theta, flows, terms.welfare, terms)


def clear_fixed_demand(net: Network) -> DispatchSolution:
    """Least-cost dispatch serving every consumer at its maximum demand.

    The LP minimises generation cost; the reported ``objective`` is the
    resulting welfare ``u_d.P_d - c_g.P_g`` so all models compare on one scale.
    """
    require_valid(net)
    layout = build_dispatch_lp(net, fixed_demand=True)
    sol = _solve_layout(layout, ClearingModelKind.FIXED_DEMAND.value)
    return _dispatch_from(net, layout, sol.x, ClearingModelKind.FIXED_DEMAND.value)


def clear_flexible_demand(net: Network) -> DispatchSolution:
    """Welfare-maximising DC-OPF with price-responsive demand, no carbon terms."""
    require_valid(net)
    layout = build_dispatch_lp(net)
    sol = _solve_layout(layout, ClearingModelKind.FLEXIBLE_DEMAND.value)
    out = _dispatch_from(net, layout, sol.x, ClearingModelKind.FLEXIBLE_DEMAND.value)
    out.objective = sol.objective
    return out


def clear_carbon_cost(net: Network) -> DispatchSolution:
    """Clear the market with consumer carbon costs and an explicit allocation matrix.

    Solves the single LP over dispatch, angles, flows, the generator-to-consumer
    allocation ``pi`` and per-consumer emissions.  When every consumer bids a
    zero carbon cost the allocation is not unique; the reported matrix is then
    replaced by the greedy allocation with consumer-index weights (see
    :func:`allocate_transportation`) and flagged via ``allocation_unique``.
    """
    require_valid(net)
    _, _, _, e_g = net.gen_arrays()
    _, _, _, cco2 = net.consumer_arrays()
    layout = build_dispatch_lp(net, carbon="allocation")
    sol = _solve_layout(layout, ClearingModelKind.CARBON_COST.value)
    out = _dispatch_from(net, layout, sol.x, ClearingModelKind.CARBON_COST.value)
    pi = np.maximum(sol.x[layout.pi], 0.0)
    e_d = e_g @ pi
    if not np.any(cco2 > 0):
        nd = len(net.consumers)
        pi, e_d, _ = allocate_transportation(out.p_g, out.p_d, e_g, np.arange(nd, 0, -1, dtype=float))
        out.allocation_unique = False
        out.notes.append("all carbon costs are zero: allocation is not unique; "
                         "reported allocation gives cleaner power to earlier consumers")
    out.allocation = pi
    out.e_d = e_d
    out.objective_terms.carbon = float(cco2 @ e_d)
    out.objective = sol.objective
    return out


def allocate_transportation(p_g, p_d, e_g, c_co2, tol: float = FEAS_TOL):
    """Minimum-carbon-cost allocation of fixed dispatch to fixed consumption.

    Generators are sorted by emission intensity (ascending) and consumers by
    carbon cost (descending), ties by index; the allocation is then filled
    north-west-corner style.  The cost matrix ``c_n * e_m`` is Monge under
    these orders, so the fill is optimal for the transportation problem.

    Returns ``(pi, E_d, carbon_term)``.
    """
    p_g = np.asarray(p_g, float)
    p_d = np.asarray(p_d, float)
    e_g = np.asarray(e_g, float)
    c_co2 = np.asarray(c_co2, float)
    if p_g.shape != e_g.shape or p_d.shape != c_co2.shape:
        raise ValueError("dispatch/intensity or consumption/carbon-cost lengths differ")
    for name, arr in (("p_g", p_g), ("p_d", p_d), ("e_g", e_g), ("c_co2", c_co2)):
        if np.any(arr < -tol):
            raise ValueError(f"{name} has negative entries")
    supply_total, demand_total = p_g.sum(), p_d.sum()
    if abs(supply_total - demand_total) > tol * max(1.0, supply_total):
        raise ValueError(f"supply {supply_total} and demand {demand_total} do not match")

    supply = np.maximum(p_g, 0.0)
    demand = np.maximum(p_d, 0.0)
    gens = sorted(range(len(p_g)), key=lambda m: (e_g[m], m))
    cons = sorted(range(len(p_d)), key=lambda n: (-c_co2[n], n))
    pi = np.zeros((len(p_g), len(p_d)))
    left_s = supply.copy()
    left_d = demand.copy()
    i = j = 0
    while i < len(gens) and j < len(cons):
        m, n = gens[i], cons[j]
        amount = min(left_s[m], left_d[n])
        pi[m, n] += amount
        left_s[m] -= amount
        left_d[n] -= amount
        if left_s[m] <= 0.0:
            i += 1
        if left_d[n] <= 0.0:
            j += 1
    # round-off remainders go to the last touched cell of their row/column
    if i < len(gens) or j < len(cons):
        for m in gens[i:]:
            if left_s[m] > 0 and cons:
                pi[m, cons[-1]] += left_s[m]
        for n in cons[j:]:
            if left_d[n] > 0 and gens:
                pi[gens[-1], n] += left_d[n]
    e_d = e_g @ pi
    return pi, e_d, float(c_co2 @ e_d)
