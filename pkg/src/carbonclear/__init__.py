"""Market clearing with consumer carbon costs."""

from .model import (Bus, Line, Generator, Consumer, Network, DispatchSolution,
                    CarbonFlowSolution, builtin_three_bus, validate_network, check_solution)
from .lp import LinearProgram, LpSolution, Sense, Status, solve_lp
from .clearing import (ClearingModelKind, clear_carbon_cost, clear_fixed_demand,
                       clear_flexible_demand, allocate_transportation, ClearingInfeasible)
from .carbonflow import CarbonFlowConfig, nodal_intensities, clear_carbon_flow
from .metrics import MetricsReport, compute_metrics, compare

__version__ = "0.1.0"
