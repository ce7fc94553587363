import numpy as np
import pytest

from carbonclear.model import (Bus, Consumer, Generator, Line, Network, SolutionCheckError, ValidationError,
                               builtin_three_bus, check_solution, line_flows_from_theta, nodal_imbalance,
                               validate_network)


def codes(net):
    return {v.code for v in validate_network(net)}


def test_three_bus_data():
    net = builtin_three_bus()
    assert [b.id for b in net.buses] == ["1", "2", "3"] and net.reference_bus.id == "1"
    assert [(g.cost, g.p_max, g.emission_intensity) for g in net.generators] == [
        (8, 20, 0.6), (10, 10, 1.0), (6, 25, 0.2)]
    assert [(d.utility, d.p_min, d.p_max) for d in net.consumers] == [(18, 4, 6), (20, 16, 24), (21, 12, 18)]
    assert validate_network(net) == []


def test_three_bus_line_params():
    net = builtin_three_bus([(2.0, 5.0), (3.0, 6.0), (4.0, 7.0)])
    assert [(ln.susceptance, ln.flow_limit) for ln in net.lines] == [(2, 5), (3, 6), (4, 7)]
    with pytest.raises(ValidationError):
        builtin_three_bus([(1.0, 1.0)])


def base():
    return builtin_three_bus()


def replace_line(net, k, **kw):
    lines = list(net.lines)
    ln = lines[k]
    lines[k] = Line(kw.get("from_bus", ln.from_bus), kw.get("to_bus", ln.to_bus),
                    kw.get("susceptance", ln.susceptance), kw.get("flow_limit", ln.flow_limit), ln.id)
    return Network(net.buses, lines, net.generators, net.consumers)


@pytest.mark.parametrize("change, code", [
    (lambda n: replace_line(n, 0, flow_limit=-1.0), "bound"),
    (lambda n: replace_line(n, 0, to_bus="9"), "unknown-bus"),
    (lambda n: replace_line(n, 0, to_bus="1"), "self-loop"),
    (lambda n: replace_line(n, 0, susceptance=0.0), "susceptance"),
    (lambda n: Network([Bus("1", True), Bus("2", True), Bus("3")], n.lines, n.generators, n.consumers),
     "multiple-reference"),
    (lambda n: Network([Bus("1"), Bus("2"), Bus("3")], n.lines, n.generators, n.consumers), "no-reference"),
    (lambda n: Network(n.buses, n.lines[:1], n.generators, n.consumers), "disconnected"),
    (lambda n: Network(n.buses, n.lines, [Generator("g", "1", 1, 5, 2, 0)], n.consumers), "bound-order"),
    (lambda n: Network(n.buses, n.lines, [Generator("g", "1", -1, 0, 2, 0)], n.consumers), "negative-cost"),
    (lambda n: Network(n.buses, n.lines, [Generator("g", "1", 1, 0, 2, -0.1)], n.consumers),
     "negative-intensity"),
    (lambda n: n.with_carbon_costs([-1, 0, 0]), "negative-carbon-cost"),
    (lambda n: Network(n.buses, n.lines, n.generators, [n.consumers[0], n.consumers[0]]), "duplicate-id"),
    (lambda n: Network(list(n.buses) + [Bus("1")], n.lines, n.generators, n.consumers), "duplicate-bus"),
])
def test_validation_codes(change, code):
    assert code in codes(change(base()))


def test_with_carbon_costs_and_utilities():
    net = base().with_carbon_costs([1, 2, 3]).with_utilities([4, 5, 6])
    assert [d.carbon_cost for d in net.consumers] == [1, 2, 3]
    assert [d.utility for d in net.consumers] == [4, 5, 6]
    with pytest.raises(ValueError):
        net.with_carbon_costs([1])


def test_flows_and_balance_helpers():
    net = base()
    theta = np.array([0.0, -1.0, -2.0])
    assert line_flows_from_theta(net, theta) == pytest.approx([1.0, 2.0, 1.0])
    bal = nodal_imbalance(net, [3, 0, 0], [0, 0, 3], [1, 2, 1])
    assert bal == pytest.approx([0, 0, 0])


def test_check_solution_flags_imbalance(three_bus):
    from carbonclear.clearing import clear_flexible_demand
    sol = clear_flexible_demand(three_bus)
    check_solution(three_bus, sol)
    sol.p_g = sol.p_g + np.array([1.0, 0, 0])
    with pytest.raises(SolutionCheckError, match="nodal balance"):
        check_solution(three_bus, sol)
