"""Naive comparison methods that ignore the leader-follower structure.

Both are qualitative stand-ins: they reproduce the update rule that makes
such methods fail on Stackelberg problems, not any particular published code.

* ``iterative_best_response`` lets each level optimize its own block in turn
  without anticipating the others' reactions, so it drifts towards a Nash
  point.
* ``bounded_random_search`` samples the whole box and keeps any constraint
  feasible point that is better for the leader, never checking whether the
  lower levels would actually choose it; it overestimates the leader's value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from .errors import ArgumentError, BaselineFailure, NoFeasibleStartError
from .problem import (DEFAULT_TOL, MultilevelProblem, batch_objective, batch_violation,
                      feasible_all, objective_value, stacked_bounds)
from .sampler import RngStream
from .solver import NlpSpec, SolverSettings, solve_full, solve_nlp


@dataclass
class BaselineResult:
    point: np.ndarray
    trace: List[np.ndarray] = field(default_factory=list)


def _level_nlp(problem: MultilevelProblem, l: int) -> NlpSpec:
    spec = problem.level(l)
    sign = spec.sign
    gradient = None
    if spec.gradient is not None:
        gradient = lambda X: sign * np.asarray(spec.gradient(X), dtype=float)  # noqa: E731
    return NlpSpec(
        objective=lambda X: sign * float(spec.objective(X)),
        free=spec.block,
        inequalities=spec.inequalities,
        equalities=spec.equalities,
        lower=spec.lower,
        upper=spec.upper,
        gradient=gradient,
        inequality_jacobian=spec.inequality_jacobian,
        equality_jacobian=spec.equality_jacobian,
    )


def random_start(problem: MultilevelProblem, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw inside the declared box; unbounded coordinates start at the default start."""
    lo, hi = stacked_bounds(problem)
    base = np.zeros(problem.n) if problem.default_start is None else np.array(problem.default_start, float)
    X = base.copy()
    both = np.isfinite(lo) & np.isfinite(hi)
    X[both] = rng.uniform(lo[both], hi[both])
    only_lo = np.isfinite(lo) & ~both
    X[only_lo] = np.maximum(base[only_lo], lo[only_lo]) + rng.exponential(1.0, only_lo.sum())
    only_hi = np.isfinite(hi) & ~both
    X[only_hi] = np.minimum(base[only_hi], hi[only_hi]) - rng.exponential(1.0, only_hi.sum())
    return X


def iterative_best_response(problem: MultilevelProblem, rounds: int, seed: int = 0,
                            settings: SolverSettings = SolverSettings()) -> BaselineResult:
    """Cycle through the levels, each solving for its own block with the rest frozen.

    Starts from a seeded random point.  Raises ``BaselineFailure`` when a
    level's subproblem cannot be solved.
    """
    if rounds < 1:
        raise ArgumentError("rounds must be at least 1")
    X = random_start(problem, RngStream(seed).generator())
    trace = [X.copy()]
    for _ in range(rounds):
        for l in range(1, problem.L + 1):
            if l == problem.L:
                res = solve_full(problem, X, settings)
            else:
                res = solve_nlp(_level_nlp(problem, l), X, settings, multistart=problem.level(l).multistart)
            if not res.solved:
                raise BaselineFailure(f"level {l} subproblem ended with status {res.status}")
            X = res.point
        trace.append(X.copy())
    return BaselineResult(X, trace)


def _box_start(problem: MultilevelProblem, lo, hi, eps):
    candidates = [problem.default_start, problem.initial_guess]
    for X in candidates:
        if X is None:
            continue
        X = np.asarray(X, dtype=float)
        if np.all(X >= lo) and np.all(X <= hi) and feasible_all(problem, X, eps):
            return X.copy()
    from .engine import find_feasible_start

    X = find_feasible_start(problem, eps=eps)
    if np.all(X >= lo) and np.all(X <= hi):
        return X
    raise NoFeasibleStartError("no feasible start inside the search box")


def bounded_random_search(problem: MultilevelProblem, bounds, samples: int, iters: int, seed: int = 0,
                          eps: float = DEFAULT_TOL) -> BaselineResult:
    """Leader-biased random search over the box ``bounds = (lower, upper)``.

    Each iteration draws ``samples`` uniform points of the whole box; the
    incumbent is replaced by the feasible point (all levels' constraints)
    with the best leader value whenever that beats the incumbent.
    """
    lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (problem.n,)) for b in bounds)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo <= hi)):
        raise ArgumentError("bounded search needs finite bounds with lower <= upper")
    if samples < 0 or iters < 0:
        raise ArgumentError("samples and iters must be non-negative")
    X = _box_start(problem, lo, hi, eps)
    best = objective_value(problem, 1, X)
    trace = [X.copy()]
    root = RngStream(seed)
    for it in range(iters):
        if samples:
            P = root.child(it).generator().uniform(lo, hi, size=(samples, problem.n))
            ok = np.ones(samples, dtype=bool)
            for l in range(1, problem.L + 1):
                ok &= batch_violation(problem, l, P) <= eps
            if ok.any():
                vals = np.where(ok, batch_objective(problem, 1, np.where(ok[:, None], P, X)), np.inf)
                i = int(np.argmin(vals))
                if vals[i] < best:
                    X, best = P[i].copy(), float(vals[i])
        trace.append(X.copy())
    return BaselineResult(X, trace)
