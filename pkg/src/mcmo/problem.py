"""Multilevel Stackelberg problem model.

A problem is an ordered list of levels.  Level ``l`` owns a block of
coordinates of the concatenated decision vector ``X`` (blocks may overlap),
an objective, and a constraint set ``C^l`` made of

* inequalities ``g(X) >= 0``,
* equalities ``h(X) = 0`` (final level only),
* optional box bounds on its own block.

Decision vectors are plain float arrays of length ``n``.  All callables take
``X`` with shape ``(..., n)`` so catalog problems can be evaluated on whole
batches of points; scalar-only user problems set ``vectorized=False``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ArgumentError, EvaluationError

Func = Callable[[np.ndarray], np.ndarray]

#: Default feasibility tolerance on constraint residuals.
DEFAULT_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class LevelSpec:
    """One player of the hierarchy.

    ``samples``, ``iterations`` and ``step`` are the level's sampling
    parameters (number of random directions, number of sampling rounds, and
    the hypercube edge length).  ``gradient`` and the jacobians are optional
    analytic derivatives with respect to the full vector ``X``.
    """

    index: int
    block: tuple
    objective: Func
    sense: str = "min"
    inequalities: Optional[Func] = None
    equalities: Optional[Func] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    gradient: Optional[Func] = None
    inequality_jacobian: Optional[Func] = None
    equality_jacobian: Optional[Func] = None
    samples: int = 1
    iterations: int = 1
    step: float = 1.0
    multistart: bool = False

    def __post_init__(self):
        block = tuple(int(i) for i in self.block)
        if not block:
            raise ArgumentError(f"level {self.index}: empty block")
        if len(set(block)) != len(block):
            raise ArgumentError(f"level {self.index}: repeated block index")
        object.__setattr__(self, "block", block)
        if self.sense not in ("min", "max"):
            raise ArgumentError(f"level {self.index}: sense must be 'min' or 'max'")
        if self.samples < 1 or self.iterations < 1 or not self.step > 0:
            raise ArgumentError(
                f"level {self.index}: need samples >= 1, iterations >= 1, step > 0"
            )
        k = len(block)
        lo = np.full(k, -np.inf) if self.lower is None else np.broadcast_to(
            np.asarray(self.lower, dtype=float), (k,)).copy()
        hi = np.full(k, np.inf) if self.upper is None else np.broadcast_to(
            np.asarray(self.upper, dtype=float), (k,)).copy()
        if np.any(lo > hi):
            raise ArgumentError(f"level {self.index}: lower bound above upper bound")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "_lo_mask", np.isfinite(lo))
        object.__setattr__(self, "_hi_mask", np.isfinite(hi))

    @property
    def sign(self) -> float:
        """Multiplier turning the raw objective into a minimization."""
        return 1.0 if self.sense == "min" else -1.0

    @property
    def has_bounds(self) -> bool:
        return bool(self._lo_mask.any() or self._hi_mask.any())

    def inequality_residuals(self, X: np.ndarray) -> np.ndarray:
        """Signed residuals ``>= 0`` when satisfied, bounds included. Shape ``(..., m)``."""
        X = np.asarray(X, dtype=float)
        parts = []
        if self.inequalities is not None:
            parts.append(np.asarray(self.inequalities(X), dtype=float).reshape(X.shape[:-1] + (-1,)))
        xb = X[..., list(self.block)]
        if self._lo_mask.any():
            parts.append(xb[..., self._lo_mask] - self.lower[self._lo_mask])
        if self._hi_mask.any():
            parts.append(self.upper[self._hi_mask] - xb[..., self._hi_mask])
        if not parts:
            return np.zeros(X.shape[:-1] + (0,))
        return np.concatenate(parts, axis=-1)

    def equality_residuals(self, X: np.ndarray) -> np.ndarray:
        """Absolute equality residuals ``|h(X)|``. Shape ``(..., p)``."""
        X = np.asarray(X, dtype=float)
        if self.equalities is None:
            return np.zeros(X.shape[:-1] + (0,))
        return np.abs(np.asarray(self.equalities(X), dtype=float).reshape(X.shape[:-1] + (-1,)))

    def violation(self, X: np.ndarray) -> np.ndarray:
        """Largest constraint violation (0 when feasible). Shape ``X.shape[:-1]``."""
        g = self.inequality_residuals(X)
        h = self.equality_residuals(X)
        v = np.zeros(np.shape(X)[:-1])
        if g.shape[-1]:
            v = np.maximum(v, np.max(-g, axis=-1))
        if h.shape[-1]:
            v = np.maximum(v, np.max(h, axis=-1))
        return v

    def constraint_labels(self, X: np.ndarray) -> tuple:
        """Human-readable names for the residual entries at ``X``."""
        m = 0
        if self.inequalities is not None:
            m = np.size(self.inequalities(np.asarray(X, dtype=float)))
        ineq = [f"g[{i}]" for i in range(m)]
        ineq += [f"x[{j}] >= {lo:g}" for j, lo, ok in zip(self.block, self.lower, self._lo_mask) if ok]
        ineq += [f"x[{j}] <= {hi:g}" for j, hi, ok in zip(self.block, self.upper, self._hi_mask) if ok]
        p = 0 if self.equalities is None else np.size(self.equalities(np.asarray(X, dtype=float)))
        return tuple(ineq), tuple(f"h[{i}]" for i in range(p))


@dataclass(frozen=True)
class KnownOptimum:
    """Reference solution: raw leader value, a representative point, provenance."""

    value: float
    point: Optional[np.ndarray] = None
    note: str = ""


@dataclass(frozen=True, eq=False)
class MultilevelProblem:
    """An L-level Stackelberg problem over ``X`` in R^n.

    ``default_start`` is a known feasible point (if any); ``start_weights``
    are objective weights recommended for the weighted-sum start heuristic;
    ``initial_guess`` seeds whole-space solves.
    """

    levels: tuple
    n: int
    name: str = "problem"
    names: Optional[tuple] = None
    optimum: Optional[KnownOptimum] = None
    default_start: Optional[np.ndarray] = None
    start_weights: Optional[tuple] = None
    initial_guess: Optional[np.ndarray] = None
    vectorized: bool = True
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        levels = tuple(self.levels)
        object.__setattr__(self, "levels", levels)
        if len(levels) < 2:
            raise ArgumentError("a multilevel problem needs at least two levels")
        covered = set()
        for pos, spec in enumerate(levels, start=1):
            if spec.index != pos:
                raise ArgumentError(f"level indices must run 1..L in order; got {spec.index} at {pos}")
            if min(spec.block) < 0 or max(spec.block) >= self.n:
                raise ArgumentError(f"level {pos}: block index out of range [0, {self.n})")
            if spec.equalities is not None and pos < len(levels):
                raise ArgumentError(f"level {pos}: equality constraints are only allowed at the final level")
            covered.update(spec.block)
        if len(covered) != self.n:
            missing = sorted(set(range(self.n)) - covered)
            raise ArgumentError(f"coordinates {missing} are not owned by any level")
        if self.names is not None and len(self.names) != self.n:
            raise ArgumentError("names must have length n")
        for attr in ("default_start", "initial_guess"):
            value = getattr(self, attr)
            if value is not None:
                object.__setattr__(self, attr, check_point(self, value))
        if self.start_weights is not None and len(self.start_weights) != len(levels):
            raise ArgumentError("start_weights must have one entry per level")

    @property
    def L(self) -> int:
        return len(self.levels)

    def level(self, l: int) -> LevelSpec:
        if not 1 <= l <= self.L:
            raise ArgumentError(f"level must be in 1..{self.L}, got {l}")
        return self.levels[l - 1]

    @property
    def final(self) -> LevelSpec:
        return self.levels[-1]


@dataclass(frozen=True)
class FeasibilityReport:
    level: int
    inequality: np.ndarray
    equality: np.ndarray
    tolerance: float
    labels: tuple = ((), ())

    @property
    def feasible(self) -> bool:
        return bool(np.all(self.inequality >= -self.tolerance) and np.all(self.equality <= self.tolerance))

    @property
    def violation(self) -> float:
        worst = 0.0
        if self.inequality.size:
            worst = max(worst, float(np.max(-self.inequality)))
        if self.equality.size:
            worst = max(worst, float(np.max(self.equality)))
        return worst

    def violated(self) -> list:
        """``(label, residual)`` pairs for every violated constraint."""
        ineq_labels, eq_labels = self.labels
        out = [(ineq_labels[i] if i < len(ineq_labels) else f"ineq[{i}]", float(r))
               for i, r in enumerate(self.inequality) if r < -self.tolerance]
        out += [(eq_labels[i] if i < len(eq_labels) else f"eq[{i}]", float(r))
                for i, r in enumerate(self.equality) if r > self.tolerance]
        return out


def check_point(problem: MultilevelProblem, X) -> np.ndarray:
    """Return ``X`` as a fresh float array after checking length and finiteness."""
    arr = np.array(X, dtype=float).reshape(-1)
    if arr.shape[0] != problem.n:
        raise ArgumentError(f"expected a vector of length {problem.n}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError("decision vector contains NaN or Inf")
    return arr


def objective_value(problem: MultilevelProblem, level: int, X: np.ndarray) -> float:
    """Canonical (minimization) objective of ``level`` at ``X``.

    Maximizing levels are negated so that smaller is always better.
    """
    spec = problem.level(level)
    value = float(spec.objective(X))
    if not np.isfinite(value):
        raise EvaluationError(f"level {level} objective is not finite at X={X}", level, X)
    return spec.sign * value


def objective_values(problem: MultilevelProblem, X: np.ndarray) -> np.ndarray:
    """Raw (as-stated) objective values of every level at ``X``."""
    return np.array([float(spec.objective(X)) for spec in problem.levels])


def feasibility_report(problem: MultilevelProblem, level: int, X: np.ndarray,
                       tol: float = DEFAULT_TOL) -> FeasibilityReport:
    if tol < 0:
        raise ArgumentError("tolerance must be non-negative")
    spec = problem.level(level)
    X = np.asarray(X, dtype=float)
    g = spec.inequality_residuals(X)
    h = spec.equality_residuals(X)
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(h))):
        raise EvaluationError(f"level {level} constraints are not finite at X={X}", level, X)
    return FeasibilityReport(level, g, h, tol, spec.constraint_labels(X))


def is_feasible(problem: MultilevelProblem, level: int, X: np.ndarray,
                tol: float = DEFAULT_TOL) -> bool:
    """Fast membership test ``X in C^level``; NaN residuals count as infeasible."""
    v = problem.level(level).violation(X)
    return bool(v <= tol)


def feasible_all(problem: MultilevelProblem, X: np.ndarray, tol: float = DEFAULT_TOL) -> bool:
    return all(is_feasible(problem, l, X, tol) for l in range(1, problem.L + 1))


def batch_violation(problem: MultilevelProblem, level: int, Xb: np.ndarray) -> np.ndarray:
    """Per-row violation for a ``(B, n)`` batch, looping if the problem is scalar-only."""
    spec = problem.level(level)
    Xb = np.asarray(Xb, dtype=float)
    if problem.vectorized:
        return np.asarray(spec.violation(Xb), dtype=float).reshape(Xb.shape[0])
    return np.array([float(spec.violation(x)) for x in Xb])


def batch_objective(problem: MultilevelProblem, level: int, Xb: np.ndarray) -> np.ndarray:
    """Canonical objective for a ``(B, n)`` batch."""
    spec = problem.level(level)
    Xb = np.asarray(Xb, dtype=float)
    if problem.vectorized:
        raw = np.asarray(spec.objective(Xb), dtype=float).reshape(Xb.shape[0])
    else:
        raw = np.array([float(spec.objective(x)) for x in Xb])
    return spec.sign * raw


def embed_block(problem: MultilevelProblem, X: np.ndarray, level: int, d) -> np.ndarray:
    """Return a copy of ``X`` moved by ``d`` along ``level``'s block only."""
    block = problem.level(level).block
    d = np.asarray(d, dtype=float).reshape(-1)
    if d.shape[0] != len(block):
        raise ArgumentError(f"direction has {d.shape[0]} entries, block of level {level} has {len(block)}")
    out = np.array(X, dtype=float)
    out[list(block)] += d
    return out


def stacked_bounds(problem: MultilevelProblem, levels: Sequence[int] = None):
    """Intersect the box bounds declared by ``levels`` (default: all) per coordinate."""
    lo = np.full(problem.n, -np.inf)
    hi = np.full(problem.n, np.inf)
    for l in levels or range(1, problem.L + 1):
        spec = problem.level(l)
        idx = list(spec.block)
        lo[idx] = np.maximum(lo[idx], spec.lower)
        hi[idx] = np.minimum(hi[idx], spec.upper)
    return lo, hi
