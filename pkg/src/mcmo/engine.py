"""Recursive Monte-Carlo search for multilevel Stackelberg equilibria.

``optimize`` perturbs the block of level ``l``, lets every candidate be
answered by levels ``l+1..L`` (the last level by a full NLP solve), drops
answers that violate ``C^l`` and keeps the best one for level ``l``.
``run_mcmo`` repeats this from the leader down for a fixed number of outer
iterations and returns the best recent iterate for the leader.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from .errors import ArgumentError, NoFeasibleStartError, PreconditionError
from .problem import (DEFAULT_TOL, MultilevelProblem, check_point, feasibility_report,
                      is_feasible, objective_value, objective_values, stacked_bounds)
from .sampler import RngStream, candidate_set
from .solver import NlpSpec, SolverSettings, finite_diff_gradient, solve_full, solve_nlp


@dataclass(frozen=True)
class EngineParams:
    """Run parameters.

    ``samples``, ``iterations`` and ``steps`` override the per-level ``N``,
    ``M`` and ``alpha`` stored on the problem; each has one entry per
    non-final level.
    """

    maxiter: int = 100
    k: int = 10
    seed: int = 0
    eps: float = DEFAULT_TOL
    samples: Optional[tuple] = None
    iterations: Optional[tuple] = None
    steps: Optional[tuple] = None
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.maxiter < 0:
            raise ArgumentError("maxiter must be non-negative")
        if self.k < 1 or (self.maxiter >= 1 and self.k > self.maxiter):
            raise ArgumentError("smoothing window must satisfy 1 <= k <= maxiter")
        if not self.eps >= 0:
            raise ArgumentError("feasibility tolerance must be non-negative")
        for name in ("samples", "iterations", "steps"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(value))

    def level_settings(self, problem: MultilevelProblem, l: int):
        """``(N, M, alpha)`` for non-final level ``l``."""
        spec = problem.level(l)
        out = []
        for name, attr in (("samples", "samples"), ("iterations", "iterations"), ("steps", "step")):
            override = getattr(self, name)
            if override is None:
                out.append(getattr(spec, attr))
            else:
                if len(override) != problem.L - 1:
                    raise ArgumentError(f"{name} needs {problem.L - 1} entries, got {len(override)}")
                out.append(override[l - 1])
        N, M, alpha = int(out[0]), int(out[1]), float(out[2])
        if N < 0 or M < 1 or not alpha > 0:
            raise ArgumentError(f"level {l}: need N >= 0, M >= 1, alpha > 0")
        return N, M, alpha


@dataclass
class RunHistory:
    """Iterates of one run; entry 0 is the start point."""

    points: List[np.ndarray] = field(default_factory=list)
    leader: List[float] = field(default_factory=list)
    objectives: List[np.ndarray] = field(default_factory=list)
    wall_ms: List[float] = field(default_factory=list)
    solve_calls: List[int] = field(default_factory=list)
    null: List[bool] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.points)

    def append(self, problem: MultilevelProblem, X: np.ndarray, wall_ms: float, calls: int, null: bool):
        self.points.append(np.array(X, dtype=float))
        self.leader.append(objective_value(problem, 1, X))
        self.objectives.append(objective_values(problem, X))
        self.wall_ms.append(float(wall_ms))
        self.solve_calls.append(int(calls))
        self.null.append(bool(null))


class _Context:
    """Problem, resolved parameters and the solve counter shared by one run."""

    def __init__(self, problem: MultilevelProblem, params: EngineParams):
        self.problem = problem
        self.params = params
        self.settings = [params.level_settings(problem, l) for l in range(1, problem.L)]
        self.solve_calls = 0


def argmin_candidates(problem: MultilevelProblem, candidates: Sequence, level: int,
                      incumbent: Optional[np.ndarray] = None) -> Optional[np.ndarray]:
    """Candidate with the smallest canonical objective at ``level``.

    ``None`` entries are skipped.  The incumbent wins exact ties, and among
    tied candidates the earliest wins.
    """
    best = incumbent
    best_val = objective_value(problem, level, incumbent) if incumbent is not None else np.inf
    for cand in candidates:
        if cand is None:
            continue
        val = objective_value(problem, level, cand)
        if best is None or val < best_val:
            best, best_val = cand, val
    return best


def _optimize(X: np.ndarray, l: int, ctx: _Context, rng: RngStream) -> Optional[np.ndarray]:
    problem, eps = ctx.problem, ctx.params.eps
    if l == problem.L:
        ctx.solve_calls += 1
        res = solve_full(problem, X, ctx.params.solver)
        if not res.solved or not is_feasible(problem, l, res.point, eps):
            return None
        return res.point
    N, M, alpha = ctx.settings[l - 1]
    best = None
    for m in range(M):
        cands = candidate_set(problem, X, l, N, alpha, rng.child(m))
        answers = []
        for j, cand in enumerate(cands):
            Y = _optimize(cand, l + 1, ctx, rng.child(m, j))
            # discarded, never repaired
            answers.append(Y if Y is not None and is_feasible(problem, l, Y, eps) else None)
        best = argmin_candidates(problem, answers, l, best)
        if best is not None:
            X = best
    return best


def optimize(problem: MultilevelProblem, X, l: int, params: EngineParams,
             rng: RngStream) -> Optional[np.ndarray]:
    """Best point found for level ``l`` after levels ``l+1..L`` respond, or ``None``.

    At the final level this is a full solve followed by a membership check.
    """
    ctx = _Context(problem, params)
    return _optimize(check_point(problem, X), l, ctx, rng)


def smoothen(history: RunHistory, k: int) -> np.ndarray:
    """Iterate with the best leader value among the last ``k``; ties go to the most recent."""
    if not len(history):
        raise ArgumentError("history is empty")
    if k < 1:
        raise ArgumentError("k must be positive")
    window = history.leader[-k:]
    offset = len(history) - len(window)
    best = min(range(len(window)), key=lambda i: (window[i], -i))
    return history.points[offset + best].copy()


def _require_feasible(problem: MultilevelProblem, X: np.ndarray, eps: float):
    for l in range(1, problem.L + 1):
        report = feasibility_report(problem, l, X, eps)
        if not report.feasible:
            detail = ", ".join(f"{name} = {r:.3g}" for name, r in report.violated())
            raise PreconditionError(f"start point violates level {l}: {detail}")


def run_mcmo(problem: MultilevelProblem, x_s, params: EngineParams = EngineParams()):
    """Run the outer loop for ``params.maxiter`` iterations.

    Returns ``(history, X_star)``; the history has ``maxiter + 1`` entries
    and ``X_star`` is the smoothed result.
    """
    X = check_point(problem, x_s)
    _require_feasible(problem, X, params.eps)
    ctx = _Context(problem, params)
    root = RngStream(params.seed)
    history = RunHistory()
    t0 = time.perf_counter()
    history.append(problem, X, 0.0, 0, False)
    for it in range(1, params.maxiter + 1):
        Y = _optimize(X, 1, ctx, root.child(it))
        # a null round keeps the previous point
        if Y is not None:
            X = Y
        history.append(problem, X, 1e3 * (time.perf_counter() - t0), ctx.solve_calls, Y is None)
    return history, smoothen(history, params.k)


def solves_per_iteration(problem: MultilevelProblem, params: EngineParams) -> int:
    """Full solves per outer iteration: product of ``(N + 1) * M`` over non-final levels."""
    count = 1
    for l in range(1, problem.L):
        N, M, _ = params.level_settings(problem, l)
        count *= (N + 1) * M
    return count


# ---------------------------------------------------------------------------
# Initialization


def _stacked(problem: MultilevelProblem, attr: str, jac_attr: str):
    specs = [s for s in problem.levels if getattr(s, attr) is not None]
    if not specs:
        return None, None

    def fun(X):
        return np.concatenate([np.atleast_1d(np.asarray(getattr(s, attr)(X), dtype=float)) for s in specs])

    if any(getattr(s, jac_attr) is None for s in specs):
        return fun, None

    def jac(X):
        return np.vstack([np.atleast_2d(np.asarray(getattr(s, jac_attr)(X), dtype=float)) for s in specs])

    return fun, jac


def _whole_space_nlp(problem: MultilevelProblem, weights) -> NlpSpec:
    w = np.asarray(weights, dtype=float)
    used = [(wl, spec) for wl, spec in zip(w, problem.levels) if wl != 0]

    def objective(X):
        return sum(wl * spec.sign * float(spec.objective(X)) for wl, spec in used)

    def summed_gradient(X):
        g = np.zeros(problem.n)
        for wl, spec in used:
            g += wl * spec.sign * np.asarray(spec.gradient(X), dtype=float)
        return g

    gradient = summed_gradient if all(spec.gradient is not None for _, spec in used) else None

    ineq, ineq_jac = _stacked(problem, "inequalities", "inequality_jacobian")
    eq, eq_jac = _stacked(problem, "equalities", "equality_jacobian")
    lo, hi = stacked_bounds(problem)
    return NlpSpec(objective, tuple(range(problem.n)), ineq, eq, lo, hi, gradient, ineq_jac, eq_jac)


def _guess(problem: MultilevelProblem) -> np.ndarray:
    if problem.initial_guess is not None:
        return np.array(problem.initial_guess, dtype=float)
    lo, hi = stacked_bounds(problem)
    X = np.zeros(problem.n)
    both = np.isfinite(lo) & np.isfinite(hi)
    X[both] = 0.5 * (lo[both] + hi[both])
    X[np.isfinite(lo) & ~both] = lo[np.isfinite(lo) & ~both]
    X[np.isfinite(hi) & ~both] = hi[np.isfinite(hi) & ~both]
    return X


def _scaled(nlp: NlpSpec, X0: np.ndarray) -> NlpSpec:
    """Divide the objective by its largest partial derivative at ``X0`` (when above 1)."""
    if nlp.gradient is not None:
        g0 = np.asarray(nlp.gradient(X0), dtype=float)
    else:
        g0 = finite_diff_gradient(nlp.objective, X0, nlp.free)
    scale = max(1.0, float(np.max(np.abs(g0))))
    if scale == 1.0:
        return nlp
    gradient = None if nlp.gradient is None else (lambda X: np.asarray(nlp.gradient(X)) / scale)
    return replace(nlp, objective=lambda X: nlp.objective(X) / scale, gradient=gradient)


def _whole_space_solve(problem: MultilevelProblem, weights, settings: SolverSettings, eps: float):
    X0 = _guess(problem)
    # keep heavily weighted objectives from swamping the constraint penalty
    res = solve_nlp(_scaled(_whole_space_nlp(problem, weights), X0), X0, settings)
    X = res.point
    if not res.solved:
        raise NoFeasibleStartError(
            f"whole-space solve ended with status {res.status} "
            f"(violation {res.violation:.3g}, stationarity {res.stationarity:.3g})")
    if not all(is_feasible(problem, l, X, eps) for l in range(1, problem.L + 1)):
        raise NoFeasibleStartError(f"whole-space solve returned a point outside the feasible region: {X}")
    return X


def find_feasible_start(problem: MultilevelProblem, settings: SolverSettings = SolverSettings(),
                        eps: float = DEFAULT_TOL) -> np.ndarray:
    """A point of the common feasible region, from a zero-objective whole-space solve."""
    return _whole_space_solve(problem, np.zeros(problem.L), settings, eps)


def weighted_start(problem: MultilevelProblem, weights=None, settings: SolverSettings = SolverSettings(),
                   eps: float = DEFAULT_TOL) -> np.ndarray:
    """Minimize ``sum_l w_l * f^l`` (canonical senses) over the common feasible region.

    ``weights`` defaults to the problem's ``start_weights``.
    """
    if weights is None:
        weights = problem.start_weights
    if weights is None or len(weights) != problem.L:
        raise ArgumentError(f"need {problem.L} weights")
    return _whole_space_solve(problem, weights, settings, eps)
