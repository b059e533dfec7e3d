import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcmo.errors import ArgumentError
from mcmo.problem import objective_value
from mcmo.problems import (CATALOG, PolicySpec, TollScenario, generate_trajectory, make_nested_toll,
                           make_nested_toll_bounded, make_problem)
from mcmo.solver import finite_diff_gradient


def test_catalog_builds_everything():
    for name in CATALOG:
        p = make_problem(name)
        assert p.L >= 2 and p.name == name


def test_catalog_errors():
    with pytest.raises(KeyError, match="catalog"):
        make_problem("nope")
    with pytest.raises(ArgumentError):
        make_problem("nested_toll", {"E": "1"})
    with pytest.raises(ArgumentError):
        make_problem("nested_toll", {"D": "abc"})


def test_string_parameters():
    p = make_problem("norm_chain", {"w": "1, 2", "levels": "4"})
    assert p.n == 4 and p.params["w"] == (1.0, 2.0, 1.0, 2.0)
    assert make_problem("nested_toll", {"D": "-1.5"}).optimum.value == pytest.approx(0.25)


@pytest.mark.parametrize("policy", [PolicySpec(), PolicySpec("sinusoidal", 1, 0.5, 3), PolicySpec(delta=2)])
def test_rollout_equals_stepping(policy):
    x = np.array([0.7, 3.1])
    traj = generate_trajectory(policy, x, 20)
    state = x.copy()
    for i in range(20):
        np.testing.assert_array_equal(traj[i], state)
        state = policy.step(state)


def test_policy_kind_checked():
    with pytest.raises(ArgumentError):
        PolicySpec("circle")


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 1), st.floats(0, 1), st.floats(-3, 8))
def test_bounded_toll_agrees_with_equality_form(t1, t2, p1, p2, D):
    if p1 + p2 > 1:
        p1, p2 = p1 / 2, p2 / 2
    full = make_nested_toll(TollScenario(D))
    bounded = make_nested_toll_bounded(TollScenario(D))
    X = np.array([t1, t2, p1, p2, 1 - p1 - p2])
    for l in (1, 2, 3):
        assert objective_value(bounded, l, X[:4]) == pytest.approx(objective_value(full, l, X), abs=1e-9)


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_all_level_gradients(name):
    p = make_problem(name)
    rng = np.random.default_rng(0)
    for spec in p.levels:
        if spec.gradient is None:
            continue
        for _ in range(10):
            X = rng.uniform(0.1, 3.0, p.n)
            full = np.asarray(spec.gradient(X), dtype=float)
            fd = finite_diff_gradient(spec.objective, X, range(p.n))
            np.testing.assert_allclose(full, fd, rtol=1e-5, atol=1e-5)
