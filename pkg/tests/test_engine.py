import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import mcmo.engine as engine
from mcmo.engine import (EngineParams, RunHistory, argmin_candidates, find_feasible_start, optimize, run_mcmo,
                         smoothen, solves_per_iteration, weighted_start)
from mcmo.errors import ArgumentError, NoFeasibleStartError, PreconditionError
from mcmo.oracles import pava_nonincreasing, toll_equilibrium
from mcmo.problem import LevelSpec, MultilevelProblem, feasible_all, objective_value
from mcmo.problems import (AicScenario, TollScenario, make_aic, make_nested_toll, make_norm_chain, make_shared_toy,
                           make_sinha, make_tilahun, trajectory_margin)
from mcmo.sampler import RngStream
from mcmo.solver import solve_full

TOLL = make_nested_toll(TollScenario(6.0))
TOY = make_shared_toy()


def _history(values):
    h = RunHistory()
    for v in values:
        h.append(TOY, np.array([-v]), 0.0, 0, False)  # leader maximizes x, canonical value is -x
    return h


def test_argmin_keeps_incumbent_on_ties():
    a, b = np.array([0.3]), np.array([0.3])
    assert argmin_candidates(TOY, [b], 1, a) is a
    assert argmin_candidates(TOY, [None, b, np.array([0.3])], 1) is b
    assert argmin_candidates(TOY, [None, None], 1) is None
    assert argmin_candidates(TOY, [np.array([0.9]), np.array([0.1])], 1)[0] == 0.9


def test_smoothen_examples():
    h = _history([5, 3, 4, 3])
    np.testing.assert_array_equal(smoothen(h, 4), [-3])
    assert smoothen(h, 4) is not h.points[3]
    np.testing.assert_array_equal(smoothen(_history([7, 2, 9]), 1), [-9])
    with pytest.raises(ArgumentError):
        smoothen(RunHistory(), 1)


def test_smoothen_tie_picks_latest_index():
    h = RunHistory()
    for v in ([1.0, 0.0], [1.0, 5.0], [0.5, 0.0]):
        h.points.append(np.array(v))
        h.leader.append(-v[0])
    np.testing.assert_array_equal(smoothen(h, 3), [1.0, 5.0])


def test_params_validation():
    with pytest.raises(ArgumentError):
        EngineParams(maxiter=-1)
    with pytest.raises(ArgumentError):
        EngineParams(maxiter=5, k=6)
    with pytest.raises(ArgumentError):
        EngineParams(k=0)
    EngineParams(maxiter=0, k=10)
    with pytest.raises(ArgumentError):
        EngineParams(samples=(1, 2, 3)).level_settings(TOLL, 1)


def test_maxiter_zero_returns_start():
    h, X = run_mcmo(TOLL, TOLL.default_start, EngineParams(maxiter=0))
    assert len(h) == 1
    np.testing.assert_array_equal(X, TOLL.default_start)


def test_infeasible_start_rejected():
    with pytest.raises(PreconditionError, match="level 2"):
        run_mcmo(TOLL, [0, 0, 1.5, 0, 0], EngineParams(maxiter=1, k=1))
    with pytest.raises(PreconditionError):
        run_mcmo(TOLL, [0, 0, 0.5, 0.1, 0.1], EngineParams(maxiter=1, k=1))


def test_null_rounds_keep_previous_point(monkeypatch):
    real = engine._optimize
    calls = {"outer": 0}

    def flaky(X, l, ctx, rng):
        if l == 1:
            calls["outer"] += 1
            if calls["outer"] % 2 == 0:
                return None
        return real(X, l, ctx, rng)

    monkeypatch.setattr(engine, "_optimize", flaky)
    h, _ = run_mcmo(TOLL, TOLL.default_start, EngineParams(maxiter=4, k=2, samples=(2, 2)))
    assert h.null == [False, False, True, False, True]
    np.testing.assert_array_equal(h.points[2], h.points[1])
    np.testing.assert_array_equal(h.points[4], h.points[3])


def test_final_level_optimize_is_solve_full():
    X = np.array([1.0, 6.5, 0.2, 0.4, 0.4])
    Y = optimize(TOLL, X, 3, EngineParams(), RngStream(0))
    np.testing.assert_array_equal(Y, solve_full(TOLL, X).point)
    assert optimize(TOLL, [0, 0, 2.0, 0, 0], 3, EngineParams(), RngStream(0)) is None


def test_pinned_regression():
    Y = optimize(TOLL, TOLL.default_start, 1, EngineParams(), RngStream(0).child(1))
    np.testing.assert_allclose(Y, [0.02462102, 0.02131765, 0.95061822, 0.04938178, 0.0], atol=1e-7)
    assert -objective_value(TOLL, 1, Y) == pytest.approx(0.024457891942840333, rel=1e-9)
    assert feasible_all(TOLL, Y)


def test_runs_are_deterministic():
    p = EngineParams(maxiter=3, k=2, seed=11, samples=(3, 3))
    h1, X1 = run_mcmo(TOLL, TOLL.default_start, p)
    h2, X2 = run_mcmo(TOLL, TOLL.default_start, p)
    np.testing.assert_array_equal(np.array(h1.points), np.array(h2.points))
    np.testing.assert_array_equal(X1, X2)
    h3, _ = run_mcmo(TOLL, TOLL.default_start, EngineParams(maxiter=3, k=2, seed=12, samples=(3, 3)))
    assert not np.array_equal(np.array(h1.points), np.array(h3.points))


def test_call_count_formula():
    p = EngineParams(maxiter=2, k=1, samples=(2, 3), iterations=(2, 1))
    h, _ = run_mcmo(TOLL, TOLL.default_start, p)
    assert solves_per_iteration(TOLL, p) == (3 * 2) * (4 * 1)
    assert h.solve_calls == [0, 24, 48]
    chain = make_norm_chain((3, 8, 7, 7))
    assert solves_per_iteration(chain, EngineParams(samples=(2, 2, 2))) == 27


def test_history_iterates_feasible():
    h, _ = run_mcmo(TOLL, TOLL.default_start, EngineParams(maxiter=5, k=5, seed=3, samples=(3, 3)))
    assert all(feasible_all(TOLL, X) for X in h.points)


@settings(max_examples=15, deadline=None)
@given(st.floats(-50, 50), st.floats(0.01, 50), st.integers(0, 1000))
def test_shared_variable_toy_returns_lower_bound(lower, width, seed):
    p = make_shared_toy(lower, lower + width)
    _, X = run_mcmo(p, p.default_start, EngineParams(maxiter=3, k=3, seed=seed))
    assert X[0] == pytest.approx(lower, abs=1e-8)


def test_find_feasible_start_toll_and_sinha():
    for p in (TOLL, make_sinha(), make_tilahun(), make_aic()):
        X = find_feasible_start(p)
        assert feasible_all(p, X)


def test_find_feasible_start_contradiction():
    def ident(X):
        return X[..., 0]
    p = MultilevelProblem((
        LevelSpec(1, (0,), ident, "min", inequalities=lambda X: (X[..., 0] - 1.0)[..., None]),
        LevelSpec(2, (0,), ident, "min", upper=0.0),
    ), 1)
    with pytest.raises(NoFeasibleStartError):
        find_feasible_start(p)


def test_weighted_start_norm_chain_is_projection():
    p = make_norm_chain((3, 8, 7, 7, 3))
    X = weighted_start(p, (1, 0, 0, 0, 0))
    np.testing.assert_allclose(X, pava_nonincreasing((3, 8, 7, 7, 3)), atol=1e-6)
    with pytest.raises(ArgumentError):
        weighted_start(p, (1, 0))


def test_weighted_start_aic():
    sc = AicScenario()
    p = make_aic(sc)
    X = weighted_start(p)
    assert feasible_all(p, X)
    assert X[0] <= 1.5
    assert -1e-6 <= trajectory_margin(sc, X[:2]) <= 0.3


def test_weighted_start_toll_zero_weights_is_feasible():
    X = weighted_start(TOLL, (0, 0, 0))
    assert feasible_all(TOLL, X)
    assert toll_equilibrium(6.0).value >= -objective_value(TOLL, 1, X) - 1e-9
