import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import isotonic_regression

from mcmo.errors import ArgumentError
from mcmo.oracles import (aic_grid_oracle, brute_force_nested, level_grid, pava_nonincreasing,
                          toll_equilibrium, toll_reaction_p1, toll_reaction_p2, toll_revenue)
from mcmo.problems import AicScenario, TollScenario, make_nested_toll_bounded, make_sinha, trajectory_margin


@pytest.mark.parametrize("D, value", [(6.0, 4.0), (-1.5, 0.25), (8.0, 6.0), (-3.0, 0.25)])
def test_toll_equilibrium_values(D, value):
    eq = toll_equilibrium(D)
    assert eq.value == pytest.approx(value, abs=1e-9)
    t1, t2, p1, p2, p3 = eq.point
    assert p1 + p2 + p3 == pytest.approx(1.0)
    assert toll_revenue(t1, t2, D) == pytest.approx(value, abs=1e-9)


def test_reaction_maps():
    assert toll_reaction_p1(0.0) == pytest.approx(0.5)
    assert toll_reaction_p1(2.0) == 0.0
    assert toll_reaction_p1(5.0) == 0.0
    # interior branch of the second split
    assert toll_reaction_p2(0.2, 6.5, 6.0) == pytest.approx((6 + 2 - 0.4 - 6.5) / 4)
    assert toll_reaction_p2(0.0, 0.0, 6.0) == pytest.approx(1.0)
    assert toll_reaction_p2(0.0, 20.0, 6.0) == pytest.approx(0.0)


@pytest.mark.parametrize("D", [-3.0, -1.5, 0.0, 2.0, 6.0, 8.0])
def test_equilibrium_dominates_dense_grid(D):
    eq = toll_equilibrium(D)
    T = level_grid(np.linspace(0, 12, 121), np.linspace(0, 12, 121))
    best = max(toll_revenue(t1, t2, D) for t1, t2 in T)
    assert eq.value >= best - 1e-9


def test_brute_force_toll_d6():
    p = make_nested_toll_bounded(TollScenario(6.0), toll_cap=12.0)
    t = np.linspace(0, 12, 49)
    res = brute_force_nested(p, [level_grid(t, t), np.linspace(0, 1, 81), np.linspace(0, 1, 81)])
    assert res.leader_value == pytest.approx(4.0, abs=0.1)


def test_brute_force_budget():
    p = make_sinha()
    g = np.linspace(0, 2, 300)
    with pytest.raises(ArgumentError):
        brute_force_nested(p, [level_grid(g, g), g, g], budget=1000)


def test_brute_force_sinha_approaches_fifteen():
    p = make_sinha()
    values = []
    for s in (1 / 3, 1 / 6, 1 / 12):
        a, b = np.arange(0, 4 + 1e-9, s), np.arange(0, 2 + 1e-9, s)
        values.append(brute_force_nested(p, [level_grid(a, b), b, b]).leader_value)
    assert values == sorted(values, reverse=True)
    assert values[-1] == pytest.approx(15.0, abs=0.2)
    # the rational optimum itself
    assert p.level(1).objective(np.array([7 / 3, 0, 1 / 3, 0])) == pytest.approx(15.0)


def test_pava_example():
    np.testing.assert_array_equal(pava_nonincreasing([3, 8, 7, 7, 3]), [6.25, 6.25, 6.25, 6.25, 3])
    np.testing.assert_array_equal(pava_nonincreasing([5, 4, 1]), [5, 4, 1])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=30))
def test_pava_matches_scipy(w):
    ours = pava_nonincreasing(w)
    ref = isotonic_regression(np.array(w), increasing=False).x
    np.testing.assert_allclose(ours, ref, atol=1e-9)
    assert np.all(np.diff(ours) <= 1e-12)


def test_aic_grid_oracle():
    sc = AicScenario()
    res = aic_grid_oracle(sc, step=0.05)
    assert np.all(res.margins >= 0) and np.all(res.margins <= 0.3)
    np.testing.assert_allclose(trajectory_margin(sc, res.points), res.margins)
    assert res.leader_point[0] == res.points[:, 0].min()
    assert res.leader_point[0] <= 1.5
    assert 0 <= res.min_margin <= 0.3
    with pytest.raises(ArgumentError):
        aic_grid_oracle(sc, step=0.05, band=-1.0)
