import math

import numpy as np
import pytest

from conftest import random_mip
from pnn.mip import MipModel, Search, SolverConfig, Status, brute_force_oracle, solve, solve_lp_relaxation

EXACT = SolverConfig(rel_gap_tol=0.0, abs_gap_tol=1e-9)


def _same(a, b):
    if a.status is not b.status:
        return False
    if b.status is Status.OPTIMAL:
        return abs(a.objective - b.objective) <= 1e-6 * max(1.0, abs(b.objective))
    return True


def knapsack():
    m = MipModel("knap")
    w = [3, 4, 5, 6]
    v = [4, 5, 7, 8]
    xs = [m.add_binary(f"x{i}") for i in range(4)]
    m.add_constraint([(wi, x) for wi, x in zip(w, xs)], "L", 10)
    m.set_objective([(vi, x) for vi, x in zip(v, xs)], "max")
    return m


def test_knapsack_optimum():
    r = solve(knapsack(), EXACT)
    assert r.status is Status.OPTIMAL
    assert r.objective == pytest.approx(13.0)
    assert r.gap == pytest.approx(0.0, abs=1e-9)
    assert r.value("x0") + r.value("x3") == 2 or r.value("x1") + r.value("x3") == 2 or r.objective == 13


@pytest.mark.parametrize("search", list(Search))
def test_random_mips_against_oracle(search):
    rng = np.random.default_rng(2024)
    cfg = SolverConfig(rel_gap_tol=0.0, abs_gap_tol=1e-9, search=search)
    for _ in range(30):
        m = random_mip(rng, max_binaries=6, max_continuous=4)
        a, b = solve(m, cfg), brute_force_oracle(m)
        assert _same(a, b), (a.status, b.status, a.objective, b.objective)
        if a.incumbent is not None:
            assert m.max_violation(a.incumbent) <= 1e-6
            assert np.all(np.abs(a.incumbent[m.binary_ids] - np.round(a.incumbent[m.binary_ids])) == 0)


def test_infeasible_and_unbounded():
    m = MipModel()
    x = m.add_binary("x")
    m.add_constraint([(1.0, x)], "G", 2.0)
    assert solve(m).status is Status.INFEASIBLE
    u = MipModel()
    b = u.add_binary("b")
    y = u.add_continuous("y", 0.0)
    u.add_constraint([(1.0, y), (-1.0, b)], "G", 0.0)
    u.set_objective([(1.0, y)], "max")
    assert solve(u).status is Status.UNBOUNDED


def test_node_limit_keeps_incumbent():
    rng = np.random.default_rng(3)
    m = MipModel("big")
    xs = [m.add_binary(f"x{i}") for i in range(14)]
    w = rng.integers(5, 40, 14)
    m.add_constraint([(float(wi), x) for wi, x in zip(w, xs)], "L", float(w.sum() // 2) + 0.5)
    m.set_objective([(float(wi) + rng.random(), x) for wi, x in zip(w, xs)], "max")
    cfg = SolverConfig(node_limit=3, rel_gap_tol=0.0, abs_gap_tol=0.0)
    cold = solve(m, cfg)
    assert cold.status in (Status.NO_SOLUTION, Status.NODE_LIMIT, Status.OPTIMAL)
    if cold.status is Status.NO_SOLUTION:
        assert cold.incumbent is None
    r = solve(m, cfg, warm_start={f"x{i}": 0 for i in range(14)})
    assert r.status in (Status.NODE_LIMIT, Status.OPTIMAL)
    assert r.incumbent is not None and r.objective >= 0.0
    if r.status is Status.NODE_LIMIT:
        assert r.nodes_explored <= 3
        assert r.best_bound >= r.objective - 1e-9


def test_warm_start_is_used():
    m = knapsack()
    r = solve(m, SolverConfig(node_limit=1), warm_start={"x1": 1, "x3": 1})
    assert r.incumbent is not None
    assert r.objective >= 13.0 - 1e-9


def test_feasible_warm_start_survives_tiny_time():
    m = knapsack()
    x0 = np.zeros(len(m.variables))
    r = solve(m, SolverConfig(time_limit_s=1e-9), warm_start=x0)
    assert r.incumbent is not None
    assert r.status in (Status.FEASIBLE_TIME_LIMIT, Status.OPTIMAL)
    assert r.objective >= 0.0


def test_determinism():
    rng = np.random.default_rng(99)
    m = random_mip(rng, max_binaries=8)
    a, b = solve(m, EXACT), solve(m, EXACT)
    assert a.status is b.status and a.nodes_explored == b.nodes_explored
    if a.incumbent is not None:
        assert np.array_equal(a.incumbent, b.incumbent)


def test_relaxation_bound():
    m = knapsack()
    status, obj, x = solve_lp_relaxation(m)
    assert obj >= 13.0 - 1e-9
    status, obj2, _ = solve_lp_relaxation(m, {3: (0.0, 0.0)})
    assert obj2 <= obj + 1e-9


def test_oracle_limit():
    m = MipModel()
    for i in range(3):
        m.add_binary(f"x{i}")
    with pytest.raises(ValueError):
        brute_force_oracle(m, binary_limit=2)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(time_limit_s=0)
    with pytest.raises(ValueError):
        SolverConfig(rel_gap_tol=1.5)
