import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcmo.errors import EvaluationError
from mcmo.oracles import toll_reaction_p2
from mcmo.problem import feasibility_report
from mcmo.problems import (AicScenario, PolicySpec, TollScenario, make_aic, make_nested_toll, make_norm_chain,
                           make_sinha, make_tilahun, trajectory_margin)
from mcmo.solver import (INFEASIBLE, NlpSpec, SolverSettings, finite_diff_gradient, solve_full, solve_nlp)

TOLL = make_nested_toll(TollScenario(6.0))


def test_fd_quadratic():
    g = finite_diff_gradient(lambda X: X[0] ** 2, np.array([3.0]), [0])
    assert g[0] == pytest.approx(6.0, abs=1e-6)


def test_fd_linear_exact():
    g = finite_diff_gradient(lambda X: 7 * X[0] + 3 * X[1], np.array([0.3, -2.0]), [0, 1])
    np.testing.assert_allclose(g, [7, 3], atol=1e-9)


def test_fd_toll_last_level_matches_hand_derivative():
    X = np.array([1.0, 2.0, 0.3, 0.4, 0.3])
    t2, p2, p3, D = X[1], X[3], X[4], 6.0
    g = finite_diff_gradient(TOLL.final.objective, X, [3, 4])
    np.testing.assert_allclose(g, [2 * p2 + t2, 2 * p3 + D], rtol=1e-5)
    # along the simplex direction (1, -1)
    assert g[0] - g[1] == pytest.approx(2 * p2 + t2 - 2 * p3 - D, rel=1e-5)


def test_fd_nan_raises():
    with pytest.raises(EvaluationError), np.errstate(invalid="ignore"):
        finite_diff_gradient(lambda X: np.sqrt(X[0]), np.array([0.0]), [0])
    with pytest.raises(ValueError):
        finite_diff_gradient(lambda X: X[0], np.array([0.0]), [0], h=0)


def test_settings_validated():
    with pytest.raises(ValueError):
        SolverSettings(constraint_tol=0)
    with pytest.raises(ValueError):
        SolverSettings(penalty_growth=1.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1), st.floats(0, 8), st.floats(0, 8))
def test_toll_last_level_matches_reaction_map(p1, t1, t2):
    X = np.array([t1, t2, p1, 0.5 * (1 - p1), 0.5 * (1 - p1)])
    res = solve_full(TOLL, X)
    assert res.solved
    assert res.point[3] == pytest.approx(toll_reaction_p2(p1, t2, 6.0), abs=1e-6)
    np.testing.assert_array_equal(res.point[:3], X[:3])
    assert feasibility_report(TOLL, 3, res.point).feasible


def test_toll_interior_stationary_point():
    p1, t2, D = 0.2, 6.5, 6.0
    assert -2 + 2 * p1 < t2 - D < 2 - 2 * p1
    res = solve_full(TOLL, np.array([0, t2, p1, 0.4, 0.4]))
    assert res.point[3] == pytest.approx((D + 2 - 2 * p1 - t2) / 4, abs=1e-7)


def test_toll_infeasible_when_p1_too_large():
    res = solve_full(TOLL, np.array([0, 0, 2.0, 0, 0]))
    assert res.status == INFEASIBLE and not res.solved


@pytest.mark.parametrize("policy", [PolicySpec(), PolicySpec("sinusoidal", 1.0, 0.5, 3.0)])
def test_aic_last_level_closed_form(policy):
    scenario = AicScenario(policy=policy)
    p = make_aic(scenario)
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = np.array([rng.uniform(0, 2), rng.uniform(0, 3)])
        m = float(trajectory_margin(scenario, x))
        res = solve_full(p, np.array([x[0], x[1], 0.0]))
        if m >= 0:
            assert res.solved and res.point[2] == pytest.approx(m, abs=1e-6)
        else:
            assert not res.solved


def test_tilahun_single_start_stays_on_lower_bound():
    p = make_tilahun()
    res = solve_full(p, np.array([0.3, 0.0, 0.0]), SolverSettings(multistart=False))
    assert res.solved and res.point[2] == pytest.approx(0.0, abs=1e-9)


def test_tilahun_multistart_finds_upper_bound():
    p = make_tilahun()
    for x in (0.1, 0.3, 0.5):
        res = solve_full(p, np.array([x, 0.0, 0.0]))
        assert res.solved and res.point[2] == pytest.approx(x, abs=1e-7)


def test_norm_chain_last_level_clamps():
    p = make_norm_chain((3, 8, 7, 7, 3))
    res = solve_full(p, np.array([5, 4, 3, 1.2, 0.0]))
    assert res.point[4] == pytest.approx(1.2, abs=1e-7)
    res = solve_full(p, np.array([5, 4, 3, 4.0, 9.0]))
    assert res.point[4] == pytest.approx(3.0, abs=1e-7)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=3, max_size=3))
def test_sinha_solved_points_feasible_and_frozen(x):
    p = make_sinha()
    X = np.array(x + [0.5])
    res = solve_full(p, X)
    np.testing.assert_array_equal(res.point[:3], X[:3])
    if res.solved:
        assert res.violation <= 1e-8
        assert feasibility_report(p, 3, res.point).feasible


def test_unconstrained_quadratic_and_bounds():
    nlp = NlpSpec(lambda X: (X[0] - 3) ** 2 + (X[1] + 1) ** 2, (0, 1), lower=[0, 0], upper=[2, 2])
    res = solve_nlp(nlp, np.array([1.0, 1.0]))
    assert res.solved
    np.testing.assert_allclose(res.point, [2, 0], atol=1e-9)


def test_equality_constrained_problem():
    nlp = NlpSpec(lambda X: X[0] ** 2 + 2 * X[1] ** 2, (0, 1), equalities=lambda X: np.array([X[0] + X[1] - 3]))
    res = solve_nlp(nlp, np.zeros(2))
    assert res.solved
    np.testing.assert_allclose(res.point, [2, 1], atol=1e-6)


def test_contradictory_constraints_infeasible():
    nlp = NlpSpec(lambda X: 0.0, (0,), inequalities=lambda X: np.array([X[0] - 1, -X[0]]))
    assert solve_nlp(nlp, np.zeros(1)).status == INFEASIBLE
