"""Independent ground truth: closed-form toll reactions, monotone projection,
and exhaustive backward induction on grids.

Nothing here calls the sampling engine or the NLP solver.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ArgumentError
from .problem import MultilevelProblem, batch_objective, batch_violation

# ---------------------------------------------------------------------------
# Nested toll setting: reaction maps of the two fleet decisions.


def toll_reaction_p1(t1: float) -> float:
    """Share of traffic taking the first tolled segment at toll ``t1``."""
    if t1 >= 2:
        return 0.0
    if t1 <= -2:
        return 1.0
    return (2.0 - t1) / 4.0


def toll_reaction_p2(p1: float, t2: float, D: float) -> float:
    """Share taking the second tolled segment given ``p1``, toll ``t2`` and extra cost ``D``."""
    if D + 2 - 2 * p1 <= t2:
        return 0.0
    if D - 2 + 2 * p1 >= t2:
        return 1.0 - p1
    return (2.0 + D - 2 * p1 - t2) / 4.0


def toll_revenue(t1: float, t2: float, D: float) -> float:
    p1 = toll_reaction_p1(t1)
    return p1 * t1 + toll_reaction_p2(p1, t2, D) * t2


@dataclass(frozen=True)
class TollEquilibrium:
    """Leader-optimal tolls with the induced flows.

    When the optimum is attained along a ray (e.g. any ``t1 >= 2``) the
    smallest toll is reported and its name is listed in ``free``.
    """

    t1: float
    t2: float
    p1: float
    p2: float
    p3: float
    value: float
    free: tuple = ()

    @property
    def point(self) -> np.ndarray:
        return np.array([self.t1, self.t2, self.p1, self.p2, self.p3])


# each branch: affine response written as (constant, coefficient on t1, coefficient on t2)
def _p1_branches():
    # (p1 coefficients, region as rows a.t <= b)
    yield (1.0, 0.0, 0.0), [((1.0, 0.0), -2.0)]                               # t1 <= -2
    yield (0.5, -0.25, 0.0), [((-1.0, 0.0), 2.0), ((1.0, 0.0), 2.0)]           # -2 <= t1 <= 2
    yield (0.0, 0.0, 0.0), [((-1.0, 0.0), -2.0)]                              # t1 >= 2


def _p2_branches(p1, D):
    c, a, _ = p1
    # D + 2 - 2 p1 <= t2  <=>  -2a t1 - t2 <= -(D + 2 - 2c)
    upper_region = ((-2 * a, -1.0), -(D + 2 - 2 * c))
    # t2 <= D - 2 + 2 p1  <=>  -2a t1 + t2 <= D - 2 + 2c
    lower_region = ((-2 * a, 1.0), D - 2 + 2 * c)
    flip = lambda row: ((-row[0][0], -row[0][1]), -row[1])  # noqa: E731
    yield (0.0, 0.0, 0.0), [upper_region]
    yield (1.0 - c, -a, 0.0), [lower_region]
    yield ((2 + D - 2 * c) / 4, -2 * a / 4, -0.25), [flip(upper_region), flip(lower_region)]


def _quadratic(p1, p2):
    """Revenue ``p1 t1 + p2 t2`` on one branch pair as ``t'Qt + q't``."""
    c1, a1, _ = p1
    c2, a2, b2 = p2
    Q = np.array([[a1, a2 / 2], [a2 / 2, b2]])
    q = np.array([c1, c2])
    return Q, q


def _polygon_candidates(rows, Q, q):
    """Points that contain the maximum of ``t'Qt + q't`` over ``{t : A t <= b}`` (bounded)."""
    A = np.array([r[0] for r in rows])
    b = np.array([r[1] for r in rows])
    inside = lambda t: bool(np.all(A @ t <= b + 1e-9))  # noqa: E731
    points = []
    for i, j in itertools.combinations(range(len(rows)), 2):
        M = A[[i, j]]
        if abs(np.linalg.det(M)) > 1e-12:
            points.append(np.linalg.solve(M, b[[i, j]]))
    # interior stationary point
    if abs(np.linalg.det(Q)) > 1e-14:
        points.append(np.linalg.solve(2 * Q, -q))
    # stationary point along every edge line
    for a_i, b_i in zip(A, b):
        p0 = a_i * b_i / (a_i @ a_i)
        v = np.array([-a_i[1], a_i[0]])
        curv = v @ Q @ v
        if abs(curv) > 1e-14:
            s = -(2 * p0 @ Q @ v + q @ v) / (2 * curv)
            points.append(p0 + s * v)
    return [p for p in points if inside(p)]


def toll_equilibrium(D: float, t_max: float = None) -> TollEquilibrium:
    """Global leader optimum of the nested toll game for extra cost ``D``.

    Enumerates the 3 x 3 branch combinations of the two reaction maps.  On
    each polyhedral piece the revenue is a quadratic in ``(t1, t2)``; its
    maximum lies at a vertex, at the interior stationary point, or at the
    stationary point of an edge.  Tolls are searched on ``[0, t_max]``; past
    the largest breakpoint revenue is constant in each toll, so the default
    ``t_max`` loses nothing.
    """
    if t_max is None:
        t_max = abs(D) + 12.0
    box = [((-1.0, 0.0), 0.0), ((0.0, -1.0), 0.0), ((1.0, 0.0), t_max), ((0.0, 1.0), t_max)]
    candidates = []
    for p1, region1 in _p1_branches():
        for p2, region2 in _p2_branches(p1, D):
            Q, q = _quadratic(p1, p2)
            candidates += _polygon_candidates(box + region1 + region2, Q, q)
    values = np.array([toll_revenue(t[0], t[1], D) for t in candidates])
    best = values.max()
    ties = [t for t, v in zip(candidates, values) if v >= best - 1e-9]
    t1, t2 = min((max(0.0, t[0]), max(0.0, t[1])) for t in ties)
    # snap to exact closed form for values the vertex arithmetic reproduces up to rounding
    t1, t2 = float(np.round(t1, 12)), float(np.round(t2, 12))
    p1 = toll_reaction_p1(t1)
    p2 = toll_reaction_p2(p1, t2, D)
    value = p1 * t1 + p2 * t2
    free = tuple(name for name, probe in (("t1", (t1 + 10.0, t2)), ("t2", (t1, t2 + 10.0)))
                 if abs(toll_revenue(probe[0], probe[1], D) - value) <= 1e-12)
    return TollEquilibrium(t1, t2, p1, p2, 1.0 - p1 - p2, value, free)


# ---------------------------------------------------------------------------
# Monotone projection for the norm-chain family.


def pava_nonincreasing(w: Sequence[float]) -> np.ndarray:
    """Euclidean projection of ``w`` onto ``{x : x_1 >= x_2 >= ... >= x_n}``.

    Pool-adjacent-violators: scan left to right, merging the newest block with
    its predecessor while their means increase.
    """
    w = np.asarray(w, dtype=float).reshape(-1)
    means, sizes = [], []
    for value in w:
        means.append(float(value))
        sizes.append(1)
        while len(means) > 1 and means[-2] < means[-1]:
            m2, s2 = means.pop(), sizes.pop()
            m1, s1 = means.pop(), sizes.pop()
            means.append((m1 * s1 + m2 * s2) / (s1 + s2))
            sizes.append(s1 + s2)
    return np.repeat(means, sizes)


# ---------------------------------------------------------------------------
# Exhaustive backward induction.

DEFAULT_BUDGET = 20_000_000


def level_grid(*axes) -> np.ndarray:
    """Cartesian product of 1-D coordinate grids, shape ``(G, len(axes))``."""
    mesh = np.meshgrid(*[np.asarray(a, dtype=float) for a in axes], indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=-1)


@dataclass(frozen=True)
class BruteForceResult:
    point: np.ndarray
    leader_value: float
    evaluations: int


def brute_force_nested(problem: MultilevelProblem, grids: Sequence, tol: float = 1e-6,
                       budget: int = DEFAULT_BUDGET, base=None) -> BruteForceResult:
    """Solve ``problem`` by backward induction over finite per-level grids.

    ``grids[l-1]`` holds candidate values for level ``l``'s block, either as a
    ``(G, |block|)`` array or, for one-dimensional blocks, a 1-D array.  The
    innermost level is scanned exhaustively for every combination of upper
    choices, then each level outward picks its best feasible response.  Ties
    (within ``1e-12``) are broken optimistically, in the leader's favour.
    Raises ``ArgumentError`` when the scan would exceed ``budget`` points.
    """
    if len(grids) != problem.L:
        raise ArgumentError("need one grid per level")
    G = []
    for l, grid in enumerate(grids, start=1):
        arr = np.asarray(grid, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.shape[1] != len(problem.level(l).block):
            raise ArgumentError(f"grid for level {l} has width {arr.shape[1]}")
        G.append(arr)
    total = int(np.prod([len(g) for g in G], dtype=float))
    if total > budget:
        raise ArgumentError(f"grid scan needs {total} points, budget is {budget}")
    X0 = np.zeros(problem.n) if base is None else np.asarray(base, dtype=float)
    best, ok = _respond(problem, G, 1, X0[None, :], tol)
    if not ok[0]:
        return BruteForceResult(np.full(problem.n, np.nan), np.nan, total)
    leader = float(problem.level(1).objective(best[0]))
    return BruteForceResult(best[0], leader, total)


def _respond(problem, G, l, Xb, tol, chunk=200_000):
    """Best response of levels ``l..L`` for each row of ``Xb``; returns ``(X, ok)``."""
    grid = G[l - 1]
    B, g = Xb.shape[0], grid.shape[0]
    if B * g > chunk and B > 1:
        step = max(1, chunk // g)
        parts = [_respond(problem, G, l, Xb[i:i + step], tol, chunk) for i in range(0, B, step)]
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
    block = list(problem.level(l).block)
    Xc = np.repeat(Xb, g, axis=0)
    Xc[:, block] = np.tile(grid, (B, 1))
    if l < problem.L:
        Xc, ok = _respond(problem, G, l + 1, Xc, tol, chunk)
    else:
        ok = np.ones(len(Xc), dtype=bool)
    ok = ok & (batch_violation(problem, l, Xc) <= tol)
    f = np.where(ok, batch_objective(problem, l, np.where(ok[:, None], Xc, 0.0)), np.inf).reshape(B, g)
    lead = np.where(ok, batch_objective(problem, 1, np.where(ok[:, None], Xc, 0.0)), np.inf).reshape(B, g)
    fmin = f.min(axis=1, keepdims=True)
    tied = f <= fmin + 1e-12 * np.maximum(1.0, np.abs(fmin))
    pick = np.argmin(np.where(tied, lead, np.inf), axis=1)
    rows = np.arange(B) * g + pick
    return Xc[rows], np.isfinite(fmin[:, 0])


# ---------------------------------------------------------------------------
# Adversarial initial condition: dense scan of the feasible disk.


@dataclass(frozen=True)
class AicGridResult:
    points: np.ndarray          # (K, 2) disk points whose margin lies in the band
    margins: np.ndarray         # (K,) closed-form final-level response min_i g(tau_i)
    leader_point: np.ndarray    # optimistic choice: smallest x1 within the band
    min_margin: float


def aic_grid_oracle(scenario, step: float = 0.02, band: float = 0.3) -> AicGridResult:
    """Scan the start disk on a grid and evaluate the final-level response in closed form.

    For a start ``x`` the last player picks ``T = min_i g(tau_i)`` (infeasible
    if negative).  The second player, sharing ``x`` with the leader, drives
    ``T`` towards its minimum; the returned set holds grid points with
    ``0 <= T <= band`` and ``leader_point`` is the leader's favourite among
    them (largest trajectory length, i.e. smallest ``x1``).
    """
    from .problems import trajectory_margin

    cx, cy = scenario.center
    rad = scenario.region_radius
    xs = np.arange(cx - rad, cx + rad + step / 2, step)
    ys = np.arange(cy - rad, cy + rad + step / 2, step)
    P = level_grid(xs, ys)
    P = P[(P[:, 0] - cx) ** 2 + (P[:, 1] - cy) ** 2 <= rad ** 2]
    T = trajectory_margin(scenario, P)
    keep = (T >= 0) & (T <= band)
    pts, margins = P[keep], T[keep]
    if len(pts) == 0:
        raise ArgumentError("no grid point has a margin inside the band; refine the grid")
    leader = pts[np.argmin(pts[:, 0])]
    return AicGridResult(pts, margins, leader, float(T[T >= 0].min()))
