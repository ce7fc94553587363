import math

import numpy as np
import pytest

from carbonclear.lp import (INF, IterationLimitError, LinearProgram, LpInputError, Sense, Status, solve_lp,
                            write_lp_file)
from netgen import build, random_lp
from oracles import lp_by_vertex_enumeration


def test_random_lps_match_vertex_enumeration():
    rng = np.random.default_rng(20240611)
    for k in range(200):
        data = random_lp(rng)
        expected = lp_by_vertex_enumeration(*data[:6], maximize=data[6])
        sol = solve_lp(build(*data))
        assert sol.status is Status.OPTIMAL, k
        assert math.isclose(sol.objective, expected, rel_tol=1e-8, abs_tol=1e-8), (k, sol.objective, expected)


def test_small_textbook_lp():
    # max 3x + 5y  s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
    lp = LinearProgram(Sense.MAXIMIZE)
    x = lp.add_variable("x", 0, INF, 3)
    y = lp.add_variable("y", 0, INF, 5)
    lp.add_constraint({x: 1}, "<=", 4)
    lp.add_constraint({y: 2}, "<=", 12)
    lp.add_constraint({x: 3, y: 2}, "<=", 18)
    sol = solve_lp(lp)
    assert sol.status is Status.OPTIMAL
    assert sol.objective == pytest.approx(36)
    assert sol.x == pytest.approx([2, 6])
    # shadow prices of the textbook example
    assert sol.duals == pytest.approx([0, 1.5, 1])


def test_infeasible_and_unbounded():
    lp = LinearProgram()
    x = lp.add_variable("x", 0, 1)
    lp.add_constraint({x: 1}, ">=", 2, "too_big")
    sol = solve_lp(lp)
    assert sol.status is Status.INFEASIBLE
    assert [lp.constraints[i].name for i in sol.infeasible_rows] == ["too_big"]

    lp = LinearProgram(Sense.MAXIMIZE)
    x = lp.add_variable("x", 0, INF, 1)
    y = lp.add_variable("y", 0, INF, 0)
    lp.add_constraint({x: 1, y: -1}, "<=", 1)
    assert solve_lp(lp).status is Status.UNBOUNDED


def test_free_variables_and_no_constraints():
    lp = LinearProgram()
    x = lp.add_variable("x", -INF, INF, 0)
    y = lp.add_variable("y", -2, 3, 1)
    sol = solve_lp(lp)
    assert sol.status is Status.OPTIMAL and sol.x[y] == -2 and sol.objective == -2
    lp.add_constraint({x: 1, y: 1}, "=", 5)
    sol = solve_lp(lp)
    assert sol.x[x] == pytest.approx(7)


def test_redundant_equalities():
    lp = LinearProgram()
    x = lp.add_variable("x", 0, 10, 1)
    y = lp.add_variable("y", 0, 10, 2)
    lp.add_constraint({x: 1, y: 1}, "=", 4)
    lp.add_constraint({x: 2, y: 2}, "=", 8)
    sol = solve_lp(lp)
    assert sol.status is Status.OPTIMAL and sol.objective == pytest.approx(4)


def test_complementary_slackness_on_random_lps():
    rng = np.random.default_rng(7)
    for _ in range(60):
        c, A, rel, b, lo, up, maximize = random_lp(rng)
        sol = solve_lp(build(c, A, rel, b, lo, up, maximize))
        y = sol.duals
        d = c - A.T @ y  # reduced costs in the stated sense
        x = sol.x
        strict = (x > lo + 1e-7) & (x < up - 1e-7)
        assert np.all(np.abs(d[strict]) <= 1e-7)
        slack = np.abs(A @ x - b) > 1e-7
        assert np.all(np.abs(y[slack]) <= 1e-7)
        # strong duality with bound multipliers
        assert y @ b + d @ x == pytest.approx(sol.objective, rel=1e-9, abs=1e-9)


def test_deterministic_and_scaling_invariant():
    rng = np.random.default_rng(3)
    data = random_lp(rng)
    a, b = solve_lp(build(*data)), solve_lp(build(*data))
    assert np.array_equal(a.x, b.x) and a.iterations == b.iterations
    unscaled = solve_lp(build(*data), scale=False)
    assert unscaled.objective == pytest.approx(a.objective, rel=1e-9, abs=1e-9)


def test_degenerate_lp_terminates():
    # Beale's cycling example: Dantzig pricing with naive ties cycles on it
    lp = LinearProgram()
    v = [lp.add_variable(f"x{k}", 0, INF, c) for k, c in enumerate([-0.75, 20, -0.5, 6])]
    lp.add_constraint(dict(zip(v, [0.25, -8, -1, 9])), "<=", 0)
    lp.add_constraint(dict(zip(v, [0.5, -12, -0.5, 3])), "<=", 0)
    lp.add_constraint({v[2]: 1}, "<=", 1)
    sol = solve_lp(lp, scale=False)
    assert sol.status is Status.OPTIMAL and sol.objective == pytest.approx(-1.25)


def test_iteration_limit():
    rng = np.random.default_rng(11)
    data = random_lp(rng, 6, 8)
    with pytest.raises(IterationLimitError):
        solve_lp(build(*data), max_iter=0)


def test_input_validation():
    lp = LinearProgram()
    lp.add_variable("x", 2, 1)
    with pytest.raises(LpInputError):
        solve_lp(lp)
    lp = LinearProgram()
    x = lp.add_variable("x")
    with pytest.raises(LpInputError):
        lp.add_constraint({x: 1}, "<", 1)
        solve_lp(lp)


def test_write_lp_file(tmp_path):
    lp = LinearProgram(Sense.MAXIMIZE)
    x = lp.add_variable("x", 0, 4, 3)
    y = lp.add_variable("y", -INF, INF, 5)
    lp.add_constraint({x: 3, y: 2}, "<=", 18, "cap")
    path = tmp_path / "m.lp"
    write_lp_file(lp, path)
    text = path.read_text()
    assert text.splitlines()[0].lower().startswith("maximize")
    assert " cap: + 3.0 x + 2.0 y <= 18.0" in text and "-inf <= y <= inf" in text
