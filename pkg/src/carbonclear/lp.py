"""Bounded-variable revised simplex.

The solver keeps a dense basis inverse updated by elementary row operations
and refactorised every ``refactor_every`` pivots, which is comfortably fast
for the few hundred rows the clearing models produce.  Variable bounds are
handled natively (nonbasic variables sit at a bound, or at zero when free),
so no bound rows are ever generated.

Anti-cycling: Dantzig pricing with deterministic lowest-index tie-breaking,
switching to Bland's rule after ``stall_limit`` consecutive pivots without
objective progress.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy import sparse

INF = math.inf


class Sense(str, Enum):
    MINIMIZE = "minimize"
    MAXIMIZE = "maximize"


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


class LpInputError(ValueError):
    pass


class IterationLimitError(RuntimeError):
    def __init__(self, limit: int):
        self.limit = limit
        super().__init__(f"simplex iteration limit of {limit} pivots exceeded")


RELATIONS = ("<=", "=", ">=")


@dataclass
class Constraint:
    coeffs: dict[int, float]
    relation: str
    rhs: float
    name: str = ""


@dataclass
class LinearProgram:
    """A linear program over bounded variables.

    Variables are created with :meth:`add_variable` and referenced by the
    integer index it returns.
    """

    sense: Sense = Sense.MINIMIZE
    lower: list[float] = field(default_factory=list)
    upper: list[float] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    names: list[str] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)

    @property
    def num_vars(self) -> int:
        return len(self.objective)

    def add_variable(self, name: str = "", lower: float = 0.0, upper: float = INF,
                     obj: float = 0.0) -> int:
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        self.objective.append(float(obj))
        self.names.append(name or f"x{len(self.names)}")
        return len(self.objective) - 1

    def add_constraint(self, coeffs: Union[Mapping[int, float], Iterable[tuple[int, float]]],
                       relation: str, rhs: float, name: str = "") -> int:
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        merged: dict[int, float] = {}
        for j, a in items:
            merged[int(j)] = merged.get(int(j), 0.0) + float(a)
        self.constraints.append(Constraint(merged, relation, float(rhs), name or f"c{len(self.constraints)}"))
        return len(self.constraints) - 1

    def validate(self) -> None:
        n = self.num_vars
        if not (len(self.lower) == len(self.upper) == len(self.names) == n):
            raise LpInputError("variable arrays have inconsistent lengths")
        for j in range(n):
            if math.isnan(self.lower[j]) or math.isnan(self.upper[j]) or self.lower[j] > self.upper[j]:
                raise LpInputError(f"variable {self.names[j]}: lower bound exceeds upper bound")
            if self.lower[j] == INF or self.upper[j] == -INF:
                raise LpInputError(f"variable {self.names[j]}: bound is infinite on the wrong side")
            if not math.isfinite(self.objective[j]):
                raise LpInputError(f"variable {self.names[j]}: objective coefficient is not finite")
        for c in self.constraints:
            if c.relation not in RELATIONS:
                raise LpInputError(f"constraint {c.name}: unknown relation {c.relation!r}")
            if not math.isfinite(c.rhs):
                raise LpInputError(f"constraint {c.name}: rhs is not finite")
            for j, a in c.coeffs.items():
                if not 0 <= j < n:
                    raise LpInputError(f"constraint {c.name} references undeclared variable {j}")
                if not math.isfinite(a):
                    raise LpInputError(f"constraint {c.name}: coefficient is not finite")


@dataclass
class LpSolution:
    status: Status
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None
    duals: Optional[np.ndarray] = None
    iterations: int = 0
    # rows whose phase-one artificials remained positive (infeasibility certificate)
    infeasible_rows: list[int] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def _equilibrate(A: sparse.csc_matrix, passes: int = 4):
    """Geometric-mean row/column scaling, rounded to powers of two."""
    m, n = A.shape
    r = np.ones(m)
    s = np.ones(n)
    absA = abs(A).tocsc()
    if absA.nnz == 0:
        return r, s
    for _ in range(passes):
        B = sparse.diags(r) @ absA @ sparse.diags(s)
        B = B.tocsr()
        rmax = np.zeros(m)
        rmin = np.full(m, INF)
        for i in range(m):
            row = B.data[B.indptr[i]:B.indptr[i + 1]]
            row = row[row > 0]
            if row.size:
                rmax[i], rmin[i] = row.max(), row.min()
        ok = rmax > 0
        r[ok] /= np.sqrt(rmax[ok] * rmin[ok])
        B = (sparse.diags(r) @ absA @ sparse.diags(s)).tocsc()
        cmax = np.zeros(n)
        cmin = np.full(n, INF)
        for j in range(n):
            col = B.data[B.indptr[j]:B.indptr[j + 1]]
            col = col[col > 0]
            if col.size:
                cmax[j], cmin[j] = col.max(), col.min()
        ok = cmax > 0
        s[ok] /= np.sqrt(cmax[ok] * cmin[ok])
    r = np.exp2(np.round(np.log2(r)))
    s = np.exp2(np.round(np.log2(s)))
    return r, s


class _Simplex:
    """Revised simplex on ``A x = b, l <= x <= u`` (minimisation)."""

    def __init__(self, A, b, c, lo, up, *, feas_tol, opt_tol, piv_tol,
                 max_iter, refactor_every, stall_limit):
        self.A = A.tocsc()
        self.m, self.n = A.shape
        self.b = b
        self.c = c
        self.lo = lo
        self.up = up
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol
        self.piv_tol = piv_tol
        self.max_iter = max_iter
        self.refactor_every = refactor_every
        self.stall_limit = stall_limit
        self.iterations = 0

    # -- basis bookkeeping -------------------------------------------------
    def _column(self, j):
        A = self.A
        return A.indices[A.indptr[j]:A.indptr[j + 1]], A.data[A.indptr[j]:A.indptr[j + 1]]

    def _refactor(self):
        B = self.A[:, self.basis].toarray()
        self.Binv = np.linalg.inv(B)
        self._recompute_xb()
        self.since_refactor = 0

    def _recompute_xb(self):
        nb = ~self.is_basic
        rhs = self.b - self.A[:, nb] @ self.x[nb]
        self.x[self.basis] = self.Binv @ rhs

    def start(self, basis, x):
        self.basis = np.array(basis, dtype=np.int64)
        self.is_basic = np.zeros(self.n, dtype=bool)
        self.is_basic[self.basis] = True
        self.pos = np.full(self.n, -1, dtype=np.int64)
        self.pos[self.basis] = np.arange(self.m)
        self.x = x
        self._refactor()

    # -- main loop ----------------------------------------------------------
    def run(self, cost) -> str:
        lo, up = self.lo, self.up
        fixed = lo == up
        bland = False
        stall = 0
        best = INF
        while True:
            if self.since_refactor >= self.refactor_every:
                self._refactor()
            y = self.Binv.T @ cost[self.basis]
            d = cost - self.A.T @ y
            x = self.x
            tol = self.opt_tol
            can_inc = (d < -tol) & (x < up - self.feas_tol)
            can_dec = (d > tol) & (x > lo + self.feas_tol)
            elig = (can_inc | can_dec) & ~self.is_basic & ~fixed
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                self.duals = y
                return "optimal"
            if self.iterations >= self.max_iter:
                raise IterationLimitError(self.max_iter)
            if bland:
                q = int(cand[0])
            else:
                q = int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if d[q] < 0 else -1.0

            rows, vals = self._column(q)
            alpha = self.Binv[:, rows] @ vals
            # x_B changes at rate -direction * alpha per unit step
            rate = -direction * alpha
            xb = x[self.basis]
            lb = lo[self.basis]
            ub = up[self.basis]
            step = INF
            leave = -1
            leave_to_upper = False
            dec = rate < -self.piv_tol
            inc = rate > self.piv_tol
            with np.errstate(divide="ignore", invalid="ignore"):
                t_dec = np.where(dec & np.isfinite(lb), (xb - lb) / -rate, INF)
                t_inc = np.where(inc & np.isfinite(ub), (ub - xb) / rate, INF)
            t_dec = np.maximum(t_dec, 0.0)
            t_inc = np.maximum(t_inc, 0.0)
            t_all = np.minimum(t_dec, t_inc)
            if t_all.size:
                tmin = t_all.min()
                if tmin < INF:
                    # among near-ties prefer the largest pivot, then the lowest basis variable
                    near = np.flatnonzero(t_all <= tmin + self.feas_tol * 1e-3)
                    if bland:
                        r = int(near[np.argmin(self.basis[near])])
                    else:
                        mags = np.abs(alpha[near])
                        r = int(near[np.argmax(mags)])
                    step = t_all[r]
                    leave = r
                    leave_to_upper = bool(t_inc[r] <= t_dec[r])
            span = up[q] - lo[q]
            if span <= step:
                # bound flip, no basis change
                if not math.isfinite(span):
                    return "unbounded"
                x[q] = up[q] if direction > 0 else lo[q]
                x[self.basis] = xb + rate * span
            else:
                if leave < 0:
                    return "unbounded"
                x[q] = x[q] + direction * step
                x[self.basis] = xb + rate * step
                out = self.basis[leave]
                x[out] = ub[leave] if leave_to_upper else lb[leave]
                self._pivot(leave, q, alpha)
            self.iterations += 1

            obj = float(cost @ x)
            if obj < best - 1e-12 * max(1.0, abs(best) if math.isfinite(best) else 1.0):
                best = obj
                stall = 0
                bland = False
            else:
                stall += 1
                if stall >= self.stall_limit:
                    bland = True

    def _pivot(self, r, q, alpha):
        out = self.basis[r]
        piv = alpha[r]
        Binv = self.Binv
        row = Binv[r] / piv
        Binv -= np.outer(alpha, row)
        Binv[r] = row
        self.basis[r] = q
        self.is_basic[out] = False
        self.is_basic[q] = True
        self.pos[out] = -1
        self.pos[q] = r
        self.since_refactor += 1


def solve_lp(lp: LinearProgram, *, feas_tol: float = 1e-9, opt_tol: float = 1e-9,
             max_iter: Optional[int] = None, refactor_every: int = 64,
             stall_limit: int = 50, scale: bool = True) -> LpSolution:
    """Solve ``lp`` and return an :class:`LpSolution` in original units."""
    lp.validate()
    n = lp.num_vars
    cons = lp.constraints
    m = len(cons)
    sign = -1.0 if lp.sense is Sense.MAXIMIZE else 1.0
    c0 = sign * np.asarray(lp.objective, float)
    lo0 = np.asarray(lp.lower, float)
    up0 = np.asarray(lp.upper, float)

    if m == 0:
        x = np.where(c0 > 0, lo0, np.where(c0 < 0, up0, np.where(np.isfinite(lo0), lo0,
                                                                  np.where(np.isfinite(up0), up0, 0.0))))
        if not np.all(np.isfinite(x)):
            return LpSolution(Status.UNBOUNDED)
        return LpSolution(Status.OPTIMAL, x, float(np.dot(lp.objective, x)), np.zeros(0))

    rows, cols, vals = [], [], []
    for i, con in enumerate(cons):
        for j, a in con.coeffs.items():
            if a != 0.0:
                rows.append(i)
                cols.append(j)
                vals.append(a)
    A = sparse.csc_matrix((vals, (rows, cols)), shape=(m, n))
    b = np.array([con.rhs for con in cons])

    if scale:
        rs, cs = _equilibrate(A)
    else:
        rs, cs = np.ones(m), np.ones(n)
    As = (sparse.diags(rs) @ A @ sparse.diags(cs)).tocsc()
    bs = rs * b
    cs_obj = cs * c0
    los = lo0 / cs
    ups = up0 / cs

    # slack per inequality row: a x + s = b, s >= 0 for <=, s <= 0 for >=
    ineq = [i for i, con in enumerate(cons) if con.relation != "="]
    k = len(ineq)
    S = sparse.csc_matrix((np.ones(k), (ineq, np.arange(k))), shape=(m, k))
    slo = np.array([0.0 if cons[i].relation == "<=" else -INF for i in ineq])
    sup = np.array([INF if cons[i].relation == "<=" else 0.0 for i in ineq])

    # initial nonbasic values: finite lower, else finite upper, else zero
    xs = np.where(np.isfinite(los), los, np.where(np.isfinite(ups), ups, 0.0))
    resid = bs - As @ xs

    # crash: slack basic where its sign allows, otherwise an artificial
    slack_of = {i: t for t, i in enumerate(ineq)}
    x_slack = np.zeros(k)
    basis = []
    art_rows: list[int] = []
    art_sign: list[float] = []
    for i in range(m):
        t = slack_of.get(i)
        if t is not None and slo[t] <= resid[i] <= sup[t]:
            basis.append(n + t)
            x_slack[t] = resid[i]
        else:
            basis.append(-1 - len(art_rows))
            art_rows.append(i)
            art_sign.append(1.0 if resid[i] >= 0 else -1.0)
    na = len(art_rows)
    basis = [j if j >= 0 else n + k + (-1 - j) for j in basis]
    Art = sparse.csc_matrix((art_sign, (art_rows, np.arange(na))), shape=(m, na))

    Afull = sparse.hstack([As, S, Art]).tocsc()
    lo_all = np.concatenate([los, slo, np.zeros(na)])
    up_all = np.concatenate([ups, sup, np.full(na, INF)])
    x_all = np.concatenate([xs, x_slack, np.abs(resid[art_rows]) if na else np.zeros(0)])
    if max_iter is None:
        max_iter = 50 * (m + n + k) + 1000

    spx = _Simplex(Afull, bs, None, lo_all, up_all, feas_tol=feas_tol, opt_tol=opt_tol,
                   piv_tol=1e-9, max_iter=max_iter, refactor_every=refactor_every,
                   stall_limit=stall_limit)
    spx.start(basis, x_all)

    if na:
        phase1 = np.concatenate([np.zeros(n + k), np.ones(na)])
        spx.run(phase1)
        spx._refactor()
        infeas = spx.x[n + k:]
        bscale = max(1.0, float(np.max(np.abs(bs))))
        if infeas.sum() > max(feas_tol, 1e-9) * bscale * max(1, na) ** 0.5:
            bad = [art_rows[t] for t in np.flatnonzero(infeas > feas_tol * bscale)]
            return LpSolution(Status.INFEASIBLE, iterations=spx.iterations, infeasible_rows=bad)
        # artificials are frozen at zero from here on
        spx.up[n + k:] = 0.0
        spx.x[n + k:] = np.minimum(spx.x[n + k:], 0.0)
        spx._recompute_xb()

    cost2 = np.concatenate([cs_obj, np.zeros(k + na)])
    status = spx.run(cost2)
    spx._refactor()
    if status == "unbounded":
        return LpSolution(Status.UNBOUNDED, iterations=spx.iterations)

    x = spx.x[:n] * cs
    # snap tiny bound violations left by round-off
    x = np.minimum(np.maximum(x, lo0), up0)
    y = spx.Binv.T @ cost2[spx.basis]
    duals = sign * rs * y
    obj = float(np.dot(lp.objective, x))
    return LpSolution(Status.OPTIMAL, x, obj, duals, spx.iterations)


def write_lp_file(lp: LinearProgram, path) -> None:
    """Dump ``lp`` in a CPLEX-LP-like text format for cross-checking.

    Grammar::

        (Maximize|Minimize)
         obj: <terms>
        Subject To
         <name>: <terms> (<=|=|>=) <rhs>
        Bounds
         <lower> <= <var> <= <upper>     (inf written as "inf")
        End

    where ``<terms>`` is a whitespace separated list of ``+ coef var`` or
    ``- coef var`` items.  Coefficients use ``repr`` so the dump is exact.
    """

    def terms(pairs):
        out = []
        for j, a in pairs:
            out.append(f"{'-' if a < 0 else '+'} {abs(a)!r} {lp.names[j]}")
        return " ".join(out) if out else "0"

    with open(path, "w") as fh:
        fh.write("Maximize\n" if lp.sense is Sense.MAXIMIZE else "Minimize\n")
        fh.write(f" obj: {terms([(j, a) for j, a in enumerate(lp.objective) if a != 0.0])}\n")
        fh.write("Subject To\n")
        for con in lp.constraints:
            fh.write(f" {con.name}: {terms(sorted(con.coeffs.items()))} {con.relation} {con.rhs!r}\n")
        fh.write("Bounds\n")
        for j in range(lp.num_vars):
            lo = "-inf" if lp.lower[j] == -INF else repr(lp.lower[j])
            up = "inf" if lp.upper[j] == INF else repr(lp.upper[j])
            fh.write(f" {lo} <= {lp.names[j]} <= {up}\n")
        fh.write("End\n")
