from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridswitch.errors import EmptyCandidatesError, GridValidationError
from gridswitch.fixtures import random_secure_grid, synthetic_network, t3, t3x
from gridswitch.grid import Grid
from gridswitch.h2 import decompose_laplacians, h2_closed_form
from gridswitch.linearization import build_state_space
from gridswitch.powerflow import solve_equilibrium
from gridswitch.switching import (
    finite_difference_sensitivity,
    greedy_switch,
    sensitivities_all,
    sensitivity,
)

import oracles


def _setup(grid, active=None):
    eq = solve_equilibrium(grid, active)
    return eq, decompose_laplacians(grid, eq)


def test_t3_hand_value():
    grid = t3()
    eq, d = _setup(grid)
    assert sensitivity(grid, eq, d, "l1-l2") == pytest.approx(oracles.T3_SENSITIVITY_L1_L2, abs=1e-10)
    assert finite_difference_sensitivity(grid, eq, "l1-l2") == pytest.approx(-0.5, rel=1e-4)


def test_orientation_of_query_is_irrelevant():
    grid = t3()
    eq, d = _setup(grid)
    assert sensitivity(grid, eq, d, "l2-l1") == sensitivity(grid, eq, d, "l1-l2")


def test_generator_branch_rejected():
    grid = t3()
    eq, d = _setup(grid)
    with pytest.raises(ValueError):
        sensitivity(grid, eq, d, "g1-l1")


def test_vanishing_weight_limit():
    grid = random_secure_grid(np.random.default_rng(2), 14, n_switchable=2)
    eq, d = _setup(grid)
    line = [e for e, s in zip(grid.index.edges, grid.switchable) if s][0]
    k = grid.edge_index(line)
    base = sensitivity(grid, eq, d, line)
    values = []
    for gap in (1e-1, 1e-3, 1e-6):
        theta = eq.theta0.copy()
        theta[grid.src[k]] = theta[grid.dst[k]] + np.pi / 2 - gap
        values.append(sensitivity(grid, replace(eq, theta0=theta), d, line))
    assert base < 0 and all(v < 0 for v in values)
    assert abs(values[-1]) < 1e-5 * abs(base)
    assert abs(values[0]) > abs(values[1]) > abs(values[2])


def test_sensitivity_linear_in_ratio():
    grid = t3()
    doubled = Grid(tuple(replace(b, disturbance=2 * b.disturbance) for b in grid.buses), grid.branches)
    eq, d = _setup(grid)
    eq2, d2 = _setup(doubled)
    assert sensitivity(doubled, eq2, d2, "l1-l2") == pytest.approx(2 * sensitivity(grid, eq, d, "l1-l2"), rel=1e-14)


def test_batched_matches_single():
    grid = t3x()
    eq, d = _setup(grid)
    assert sensitivities_all(grid, eq, d, []) == {}
    table = sensitivities_all(grid, eq, d, ["l3-l4"])
    assert table["l3-l4"] == sensitivity(grid, eq, d, "l3-l4")


def test_ten_candidates_all_negative():
    grid = synthetic_network()
    eq, d = _setup(grid)
    lines = [e for e, s in zip(grid.index.edges, grid.switchable) if s]
    assert len(lines) == 10
    table = sensitivities_all(grid, eq, d, lines)
    assert all(v < 0 for v in table.values())
    for line in lines[:3]:
        assert table[line] == pytest.approx(finite_difference_sensitivity(grid, eq, line), rel=1e-4)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(8, 20))
def test_finite_difference_agreement(seed, n):
    grid = random_secure_grid(np.random.default_rng(seed), n, n_switchable=3)
    eq, d = _setup(grid)
    lines = [e for e, s in zip(grid.index.edges, grid.switchable) if s]
    table = sensitivities_all(grid, eq, d, lines)
    for line in lines:
        assert table[line] < 0
        fd = finite_difference_sensitivity(grid, eq, line)
        assert abs(table[line] - fd) <= 1e-4 * abs(fd)


# -- greedy --------------------------------------------------------------------------


def test_zero_budget_plan():
    grid = t3x()
    plan = greedy_switch(grid, n_on=0)
    assert plan.selected == ()
    assert plan.h2_trajectory == pytest.approx((h2_closed_form(grid, solve_equilibrium(grid)),))


def test_single_candidate():
    plan = greedy_switch(t3x(), ["l2-l4"], n_on=1)
    assert plan.selected == ("l2-l4",)
    assert "l3-l4" not in plan.active_after


def test_t3x_prefers_stronger_corridor():
    grid = t3x()
    base = [e for e in grid.index.edges if e not in ("l2-l4", "l3-l4")]
    exhaustive = {}
    for line in ("l2-l4", "l3-l4"):
        ss = build_state_space(grid, solve_equilibrium(grid, base + [line]))
        exhaustive[line] = oracles.kron_h2(ss.A, ss.B, ss.C)
    best = min(exhaustive, key=exhaustive.get)
    plan = greedy_switch(grid, n_on=1)
    assert plan.selected == (best,) == ("l3-l4",)
    assert plan.h2_trajectory[-1] == pytest.approx(exhaustive[best], rel=1e-9)


def test_raw_derivative_rule_breaks_ties_by_file_order():
    plan = greedy_switch(t3x(), n_on=1, rule="derivative")
    scores = plan.iterations[0].scores
    assert scores["l2-l4"] == pytest.approx(scores["l3-l4"], rel=1e-12)
    assert plan.selected == ("l2-l4",)


def test_plan_invariants_and_determinism():
    grid = synthetic_network()
    plan = greedy_switch(grid, n_on=5)
    again = greedy_switch(grid, n_on=5)
    assert plan.to_dict() == again.to_dict()
    assert len(set(plan.selected)) == 5
    assert set(plan.selected) <= set(plan.dispatchable)
    traj = np.array(plan.h2_trajectory)
    assert np.all(np.diff(traj) < 0)
    for rec in plan.iterations:
        assert set(rec.sensitivities) == set(plan.dispatchable)
        assert all(v < 0 for v in rec.sensitivities.values())


def test_trace_rows():
    plan = greedy_switch(t3x(), n_on=2)
    rows = plan.trace_rows()
    assert len(rows) == 4
    assert [r[3] for r in rows if r[0] == 1] == [0, 1]
    assert rows[-1][4] == plan.h2_trajectory[-1]


def test_greedy_errors():
    with pytest.raises(EmptyCandidatesError):
        greedy_switch(t3(), dispatchable=[], n_on=1)
    with pytest.raises(ValueError):
        greedy_switch(t3x(), n_on=3)
    with pytest.raises(GridValidationError):
        greedy_switch(t3x(), ["l1-l4"], n_on=1)
