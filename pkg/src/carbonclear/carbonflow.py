"""Carbon-flow benchmark: proportional-sharing nodal intensities and a local
solver for the bilinear clearing problem.

The solver runs in two phases.  The first alternates between a dispatch LP
with frozen nodal intensities and re-tracing the intensities.  Its fixed
point prices every consumer's carbon at the *average* intensity of its bus,
ignoring that changing the dispatch moves the intensities themselves.  The
second phase therefore refines the best iterate by trust-region sequential
linear programming on the true bilinear objective, whose gradient with
respect to dispatch and flows is obtained from the adjoint of the nodal
carbon balance system.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .clearing import _dispatch_from, _solve_layout, build_dispatch_lp, clear_flexible_demand
from .model import (FEAS_TOL, CarbonFlowSolution, DispatchSolution, Network, nodal_imbalance,
                    require_valid)

log = logging.getLogger(__name__)

MODEL_NAME = "carbon-flow"


class Initialization(str, Enum):
    ZERO_LAMBDA = "zero"
    FROM_FLEXIBLE_DISPATCH = "flexible"


@dataclass(frozen=True)
class CarbonFlowConfig:
    max_iterations: int = 100
    lambda_tolerance: float = 1e-6  # tons/MWh, sup-norm change between iterates
    initialization: Initialization = Initialization.FROM_FLEXIBLE_DISPATCH
    refine: bool = True
    refine_max_iterations: int = 300
    trust_radius: float = 50.0  # MW, initial box half-width for the refinement LPs
    min_trust_radius: float = 1e-5  # MW
    stationarity_tolerance: float = 1e-9  # predicted gain relative to max(1, |objective|)

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.lambda_tolerance > 0:
            raise ValueError("lambda_tolerance must be > 0")
        if self.refine_max_iterations < 0:
            raise ValueError("refine_max_iterations must be >= 0")
        if not 0 < self.min_trust_radius <= self.trust_radius:
            raise ValueError("need 0 < min_trust_radius <= trust_radius")
        if not self.stationarity_tolerance > 0:
            raise ValueError("stationarity_tolerance must be > 0")


class FlowInputError(ValueError):
    pass


def _bus_injections(net: Network, p_g, p_d):
    idx = net.bus_index
    nb = len(net.buses)
    gen_mw = np.zeros(nb)
    gen_co2 = np.zeros(nb)
    load = np.zeros(nb)
    for g, p in zip(net.generators, p_g):
        gen_mw[idx[g.bus]] += p
        gen_co2[idx[g.bus]] += g.emission_intensity * p
    for d, p in zip(net.consumers, p_d):
        load[idx[d.bus]] += p
    return gen_mw, gen_co2, load


def directed_flows(net: Network, flows):
    """Return ``(src, dst, mw)`` arrays with every flow oriented positively."""
    idx = net.bus_index
    src, dst, mw = [], [], []
    for ln, f in zip(net.lines, flows):
        i, j = idx[ln.from_bus], idx[ln.to_bus]
        if f >= 0:
            src.append(i), dst.append(j), mw.append(f)
        else:
            src.append(j), dst.append(i), mw.append(-f)
    return np.array(src, int), np.array(dst, int), np.array(mw, float)


def throughflow(net: Network, p_g, flows) -> np.ndarray:
    gen_mw, _, _ = _bus_injections(net, p_g, np.zeros(len(net.consumers)))
    _, dst, mw = directed_flows(net, flows)
    inflow = np.zeros(len(net.buses))
    np.add.at(inflow, dst, mw)
    return gen_mw + inflow


def nodal_intensities(net: Network, p_g, p_d, flows, tol: float = FEAS_TOL) -> np.ndarray:
    """Carbon intensity (tons/MWh) of the power passing through every bus.

    Each bus mixes local generation and incoming flows; that mix is carried
    unchanged by every outgoing flow and local load.  Buses without
    throughflow get intensity zero.  DC flows follow decreasing voltage
    angle, so the flow graph is acyclic and intensities are propagated in
    topological order.
    """
    p_g = np.asarray(p_g, float)
    p_d = np.asarray(p_d, float)
    flows = np.asarray(flows, float)
    imb = nodal_imbalance(net, p_g, p_d, flows)
    scale = max(1.0, float(np.max(np.abs(p_g), initial=0.0)))
    if np.max(np.abs(imb), initial=0.0) > tol * scale:
        worst = int(np.argmax(np.abs(imb)))
        raise FlowInputError(f"power balance violated at bus {net.buses[worst].id} by {imb[worst]:.3g} MW")

    nb = len(net.buses)
    _, gen_co2, _ = _bus_injections(net, p_g, p_d)
    through = throughflow(net, p_g, flows)
    src, dst, mw = directed_flows(net, flows)
    active = mw > 0
    src, dst, mw = src[active], dst[active], mw[active]

    indeg = np.zeros(nb, int)
    np.add.at(indeg, dst, 1)
    out_edges: list[list[int]] = [[] for _ in range(nb)]
    for k, s in enumerate(src):
        out_edges[s].append(k)
    carbon_in = gen_co2.copy()
    lam = np.zeros(nb)
    ready = [i for i in range(nb) if indeg[i] == 0]
    done = 0
    while ready:
        i = ready.pop()
        done += 1
        lam[i] = carbon_in[i] / through[i] if through[i] > 0 else 0.0
        for k in out_edges[i]:
            j = dst[k]
            carbon_in[j] += lam[i] * mw[k]
            indeg[j] -= 1
            if indeg[j] == 0:
                ready.append(j)
    if done < nb:
        # cyclic flows (not produced by DC power flow): solve the full system
        lam = _solve_intensity_system(nb, gen_co2, through, src, dst, mw)
    return np.maximum(lam, 0.0)


def _solve_intensity_system(nb, gen_co2, through, src, dst, mw):
    M = np.diag(np.where(through > 0, through, 1.0))
    for s, d, f in zip(src, dst, mw):
        if through[d] > 0:
            M[d, s] -= f
    rhs = np.where(through > 0, gen_co2, 0.0)
    try:
        return np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("nodal carbon balance system is singular") from exc


def carbon_balance_residual(net: Network, p_g, p_d, flows, lam) -> np.ndarray:
    """Carbon in minus carbon out (tons) at every bus for intensities ``lam``."""
    _, gen_co2, load = _bus_injections(net, p_g, p_d)
    src, dst, mw = directed_flows(net, flows)
    c_in = gen_co2.copy()
    np.add.at(c_in, dst, lam[src] * mw)
    out_mw = load.copy()
    np.add.at(out_mw, src, mw)
    return c_in - lam * out_mw


def _true_objective(net: Network, disp: DispatchSolution, lam_bus: np.ndarray) -> tuple[float, np.ndarray]:
    idx = net.bus_index
    _, _, _, cco2 = net.consumer_arrays()
    e_d = np.array([lam_bus[idx[d.bus]] for d in net.consumers]) * disp.p_d
    t = disp.objective_terms
    return t.utility - float(cco2 @ e_d) - t.generation_cost, e_d


def carbon_cost_gradient(net: Network, p_g, p_d, flows, lam: Optional[np.ndarray] = None):
    """Gradient of the attributed carbon cost ``sum_n c_n * lambda_bus(n) * P_d,n``.

    Intensities solve ``M lambda = g`` with ``M`` holding throughflows and
    incoming flows and ``g`` the local generation emissions.  With ``mu``
    solving ``M^T mu = w`` (``w`` the carbon-cost-weighted load per bus) the
    derivatives are ``mu_i (e_m - lambda_i)`` for a generator at bus ``i``,
    ``c_n lambda_bus(n)`` for a consumer, and ``mu_j (lambda_i - lambda_j)``
    per MW of flow moving from ``i`` to ``j``; flows are differentiated in
    their signed from->to orientation.  Valid while flow directions and the
    set of throughflow-positive buses stay fixed.

    Returns ``(cost, d_pg, d_pd, d_flow)``.
    """
    p_g = np.asarray(p_g, float)
    p_d = np.asarray(p_d, float)
    flows = np.asarray(flows, float)
    if lam is None:
        lam = nodal_intensities(net, p_g, p_d, flows)
    idx = net.bus_index
    nb = len(net.buses)
    through = throughflow(net, p_g, flows)
    src, dst, mw = directed_flows(net, flows)
    M = np.diag(np.where(through > 0, through, 1.0))
    for s, d, f in zip(src, dst, mw):
        if f > 0 and through[d] > 0:
            M[d, s] -= f
    _, _, _, cco2 = net.consumer_arrays()
    bus_of_d = np.array([idx[d.bus] for d in net.consumers], int)
    bus_of_g = np.array([idx[g.bus] for g in net.generators], int)
    w = np.zeros(nb)
    np.add.at(w, bus_of_d, cco2 * p_d)
    mu = np.linalg.solve(M.T, w)
    _, _, _, e_g = net.gen_arrays()
    d_pg = mu[bus_of_g] * (e_g - lam[bus_of_g])
    d_pd = cco2 * lam[bus_of_d]
    sign = np.where(flows >= 0, 1.0, -1.0)
    d_flow = sign * mu[dst] * (lam[src] - lam[dst])
    cost = float(cco2 @ (lam[bus_of_d] * p_d))
    return cost, d_pg, d_pd, d_flow


def _fixed_point(net: Network, cfg: CarbonFlowConfig, trace: list):
    nb = len(net.buses)
    if cfg.initialization is Initialization.FROM_FLEXIBLE_DISPATCH:
        start = clear_flexible_demand(net)
        lam = nodal_intensities(net, start.p_g, start.p_d, start.line_flows)
    else:
        lam = np.zeros(nb)
    best = None
    converged = False
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        layout = build_dispatch_lp(net, carbon="nodal", lam=lam)
        sol = _solve_layout(layout, MODEL_NAME)
        disp = _dispatch_from(net, layout, sol.x, MODEL_NAME)
        lam_new = nodal_intensities(net, disp.p_g, disp.p_d, disp.line_flows)
        obj, _ = _true_objective(net, disp, lam_new)
        change = float(np.max(np.abs(lam_new - lam), initial=0.0))
        trace.append({"phase": "fixed-point", "iteration": it, "objective": obj, "lp_objective": sol.objective,
                      "lambda_change": change, "lambda": lam_new.copy()})
        if best is None or obj > best[0] + 1e-12 * max(1.0, abs(best[0])):
            best = (obj, disp)
        lam = lam_new
        if change < cfg.lambda_tolerance:
            converged = True
            break
    return best, it, converged


def _refine(net: Network, cfg: CarbonFlowConfig, obj0: float, disp0: DispatchSolution, trace: list):
    """Trust-region SLP on the self-consistent objective, starting at ``disp0``.

    Each step maximises the objective linearised at the incumbent inside a
    box of half-width ``radius`` MW on dispatch, consumption and flows.
    Steps are accepted only when the true objective improves; the radius
    shrinks on rejection.  Returns ``(objective, dispatch, stationary, steps)``.
    """
    layout = build_dispatch_lp(net)
    lp = layout.lp
    base_lo, base_up, base_obj = list(lp.lower), list(lp.upper), list(lp.objective)
    cost, _, _, _ = net.gen_arrays()
    util, _, _, _ = net.consumer_arrays()
    boxed = layout.pg + layout.pd + layout.flow
    radius = cfg.trust_radius
    obj, disp = obj0, disp0
    stationary = False
    steps = 0
    for steps in range(1, cfg.refine_max_iterations + 1):
        lam = nodal_intensities(net, disp.p_g, disp.p_d, disp.line_flows)
        _, d_pg, d_pd, d_flow = carbon_cost_gradient(net, disp.p_g, disp.p_d, disp.line_flows, lam)
        x0 = np.concatenate([disp.p_g, disp.p_d, disp.line_flows])
        c = np.zeros(lp.num_vars)
        c[layout.pg] = -cost - d_pg
        c[layout.pd] = util - d_pd
        c[layout.flow] = -d_flow
        lp.objective = list(c)
        lp.lower = list(base_lo)
        lp.upper = list(base_up)
        for j, v in zip(boxed, x0):
            lp.lower[j] = max(base_lo[j], v - radius)
            lp.upper[j] = min(base_up[j], v + radius)
            if lp.lower[j] > lp.upper[j]:  # incumbent sits a hair outside its bound
                lp.lower[j] = lp.upper[j] = min(max(v, base_lo[j]), base_up[j])
        sol = _solve_layout(layout, MODEL_NAME)
        x = sol.x
        predicted = float(c[boxed] @ (x[boxed] - x0))
        scale = max(1.0, abs(obj))
        if predicted <= cfg.stationarity_tolerance * scale:
            stationary = True
            break
        cand = _dispatch_from(net, layout, x, MODEL_NAME)
        lam_c = nodal_intensities(net, cand.p_g, cand.p_d, cand.line_flows)
        obj_c, _ = _true_objective(net, cand, lam_c)
        ratio = (obj_c - obj) / predicted
        accepted = obj_c > obj + 1e-13 * scale and ratio > 0.1
        trace.append({"phase": "refine", "iteration": steps, "objective": obj_c, "lp_objective": sol.objective,
                      "lambda_change": float(np.max(np.abs(lam_c - lam), initial=0.0)), "lambda": lam_c.copy(),
                      "radius": radius, "accepted": accepted})
        if accepted:
            obj, disp = obj_c, cand
            step = float(np.max(np.abs(x[boxed] - x0), initial=0.0))
            if ratio > 0.75 and step > 0.99 * radius:
                radius *= 2.0
        else:
            radius *= 0.25
            if radius < cfg.min_trust_radius:
                stationary = True  # no improving step within the smallest trust region
                break
    lp.objective, lp.lower, lp.upper = base_obj, base_lo, base_up
    return obj, disp, stationary, steps


def clear_carbon_flow(net: Network, cfg: CarbonFlowConfig = CarbonFlowConfig()) -> CarbonFlowSolution:
    """Locally solve the carbon-flow clearing problem.

    Phase one alternates between a dispatch LP with frozen nodal
    intensities and re-tracing intensities from that dispatch; every iterate
    is scored with intensities recomputed from its own dispatch and the best
    one is kept.  Phase two (``cfg.refine``) improves that iterate by
    trust-region sequential linear programming on the self-consistent
    objective.  The problem is non-convex, so the result is a local
    solution; ``converged`` reports whether the final phase reached its
    stopping test (intensity agreement, or stationarity of the refinement).
    """
    require_valid(net)
    trace: list = []
    (obj, disp), fp_iters, fp_converged = _fixed_point(net, cfg, trace)
    converged = fp_converged
    iterations = fp_iters
    if cfg.refine and cfg.refine_max_iterations > 0:
        obj, disp, converged, steps = _refine(net, cfg, obj, disp, trace)
        iterations += steps
        disp.notes.append(f"fixed point {'converged' if fp_converged else 'did not converge'} "
                          f"after {fp_iters} iterations; refinement took {steps} steps")
    if not converged:
        log.warning("carbon flow solve stopped after %d iterations without converging", iterations)

    lam_b = nodal_intensities(net, disp.p_g, disp.p_d, disp.line_flows)
    obj, e_d = _true_objective(net, disp, lam_b)
    _, _, _, cco2 = net.consumer_arrays()
    disp.e_d = e_d
    disp.objective_terms.carbon = float(cco2 @ e_d)
    disp.objective = obj
    res = carbon_balance_residual(net, disp.p_g, disp.p_d, disp.line_flows, lam_b)
    through = throughflow(net, disp.p_g, disp.line_flows)
    zero = [b.id for b, t in zip(net.buses, through) if t <= 0]
    if zero:
        disp.notes.append("buses without throughflow: " + ", ".join(zero))
    return CarbonFlowSolution(disp, lam_b, iterations, converged, float(np.max(np.abs(res), initial=0.0)),
                              zero, trace)


def write_trace_csv(sol: CarbonFlowSolution, net: Network, path) -> None:
    """Iteration trace: one row per LP solve with objective and every bus intensity."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["phase", "iteration", "objective", "lp_objective", "lambda_change", "radius", "accepted"]
                   + [f"lambda_{b.id}" for b in net.buses])
        for row in sol.trace:
            w.writerow([row["phase"], row["iteration"], repr(row["objective"]), repr(row["lp_objective"]),
                        repr(row["lambda_change"]), repr(row["radius"]) if "radius" in row else "",
                        int(row["accepted"]) if "accepted" in row else ""]
                       + [repr(float(v)) for v in row["lambda"]])
