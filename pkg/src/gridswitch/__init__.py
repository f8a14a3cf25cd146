"""H2-norm synchronization metrics and sensitivity-guided line switching."""

from __future__ import annotations

from .errors import GridSwitchError
from .grid import Branch, Bus, BusKind, Grid, load_grid, save_grid
from .h2 import H2Report, h2_bounds, h2_closed_form, h2_gramian, h2_report
from .linearization import StateSpace, build_state_space, hurwitz_check
from .powerflow import EquilibriumState, solve_equilibrium
from .simulation import DisturbanceSpec, SimulationResult, impulse_energy, simulate
from .switching import SwitchingPlan, greedy_switch, sensitivity

__version__ = "0.1.0"

__all__ = [
    "Branch",
    "Bus",
    "BusKind",
    "DisturbanceSpec",
    "EquilibriumState",
    "Grid",
    "GridSwitchError",
    "H2Report",
    "SimulationResult",
    "StateSpace",
    "SwitchingPlan",
    "build_state_space",
    "greedy_switch",
    "h2_bounds",
    "h2_closed_form",
    "h2_gramian",
    "h2_report",
    "hurwitz_check",
    "impulse_energy",
    "load_grid",
    "save_grid",
    "sensitivity",
    "simulate",
    "solve_equilibrium",
]
