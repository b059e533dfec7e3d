"""Catalog of benchmark multilevel problems.

Every constructor returns a :class:`MultilevelProblem` whose callables accept
batches ``X[..., n]``.  Default sampling parameters on each level are the
settings the benchmark was run with; ``default_start`` is a feasible start
where one is known.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict

import numpy as np

from .errors import ArgumentError
from .oracles import pava_nonincreasing, toll_equilibrium
from .problem import KnownOptimum, LevelSpec, MultilevelProblem


def _stack(*cols):
    if all(np.ndim(c) == 0 for c in cols):
        return np.array(cols, dtype=float)
    return np.stack(np.broadcast_arrays(*cols), axis=-1)


# ---------------------------------------------------------------------------
# Nested toll setting


@dataclass(frozen=True)
class TollScenario:
    D: float = 6.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.sigma != 1.0:
            raise ArgumentError("only the unit congestion coefficient is supported")


def _toll_optimum(D):
    eq = toll_equilibrium(D)
    rays = f"; any larger {' and '.join(eq.free)} is equally good" if eq.free else ""
    return eq, f"closed-form reaction maps (smallest tolls reported{rays})"


def make_nested_toll(scenario: TollScenario = TollScenario(), samples=7, step=0.15) -> MultilevelProblem:
    """Toll setter over two sequential fleet splits, ``X = (t1, t2, p1, p2, p3)``."""
    D = float(scenario.D)

    def revenue(X):
        return X[..., 2] * X[..., 0] + X[..., 3] * X[..., 1]

    def revenue_grad(X):
        z = np.zeros_like(X[..., 0])
        return _stack(X[..., 2], X[..., 3], X[..., 0], X[..., 1], z)

    def first_split(X):
        p1 = X[..., 2]
        return p1 * (p1 + X[..., 0]) + (X[..., 3] + X[..., 4]) ** 2

    def first_split_grad(X):
        p1, rest = X[..., 2], X[..., 3] + X[..., 4]
        return _stack(p1, 0.0 * p1, 2 * p1 + X[..., 0], 2 * rest, 2 * rest)

    def second_split(X):
        p2, p3 = X[..., 3], X[..., 4]
        return p2 * (p2 + X[..., 1]) + p3 * (p3 + D)

    def second_split_grad(X):
        p2, p3 = X[..., 3], X[..., 4]
        z = 0.0 * p2
        return _stack(z, p2, z, 2 * p2 + X[..., 1], 2 * p3 + D)

    def conservation(X):
        return (X[..., 2] + X[..., 3] + X[..., 4] - 1.0)[..., None]

    def conservation_jac(X):
        return np.array([[0.0, 0.0, 1.0, 1.0, 1.0]])

    eq, note = _toll_optimum(D)
    levels = (
        LevelSpec(1, (0, 1), revenue, "max", lower=0.0, gradient=revenue_grad,
                  samples=samples, step=step),
        LevelSpec(2, (2,), first_split, "min", lower=0.0, upper=1.0, gradient=first_split_grad,
                  samples=samples, step=step),
        LevelSpec(3, (3, 4), second_split, "min", lower=0.0, upper=1.0, equalities=conservation,
                  gradient=second_split_grad, equality_jacobian=conservation_jac),
    )
    return MultilevelProblem(
        levels, 5, name="nested_toll", names=("t1", "t2", "p1", "p2", "p3"),
        optimum=KnownOptimum(eq.value, eq.point, note),
        default_start=np.array([0.0, 0.0, 1.0, 0.0, 0.0]),
        initial_guess=np.array([0.0, 0.0, 1.0, 0.0, 0.0]),
        params={"D": D},
    )


def make_nested_toll_bounded(scenario: TollScenario = TollScenario(), samples=7, step=0.15,
                             toll_cap=10.0) -> MultilevelProblem:
    """Toll game with ``p3 = 1 - p1 - p2`` substituted and tolls boxed in ``[0, toll_cap]``.

    ``X = (t1, t2, p1, p2)``; no equality constraints remain.
    """
    D = float(scenario.D)

    def revenue(X):
        return X[..., 2] * X[..., 0] + X[..., 3] * X[..., 1]

    def revenue_grad(X):
        return _stack(X[..., 2], X[..., 3], X[..., 0], X[..., 1])

    def first_split(X):
        p1 = X[..., 2]
        return p1 * (p1 + X[..., 0]) + (1.0 - p1) ** 2

    def first_split_grad(X):
        p1 = X[..., 2]
        z = 0.0 * p1
        return _stack(p1, z, 2 * p1 + X[..., 0] - 2 * (1.0 - p1), z)

    def second_split(X):
        p2 = X[..., 3]
        q = 1.0 - X[..., 2] - p2
        return p2 * (p2 + X[..., 1]) + q * (q + D)

    def second_split_grad(X):
        p2 = X[..., 3]
        q = 1.0 - X[..., 2] - p2
        dq = -(2 * q + D)
        return _stack(0.0 * p2, p2, dq, 2 * p2 + X[..., 1] + dq)

    def remaining_share(X):
        return (1.0 - X[..., 2] - X[..., 3])[..., None]

    def remaining_share_jac(X):
        return np.array([[0.0, 0.0, -1.0, -1.0]])

    eq, note = _toll_optimum(D)
    levels = (
        LevelSpec(1, (0, 1), revenue, "max", lower=0.0, upper=toll_cap, gradient=revenue_grad,
                  samples=samples, step=step),
        LevelSpec(2, (2,), first_split, "min", lower=0.0, upper=1.0, gradient=first_split_grad,
                  samples=samples, step=step),
        LevelSpec(3, (3,), second_split, "min", lower=0.0, upper=1.0, inequalities=remaining_share,
                  gradient=second_split_grad, inequality_jacobian=remaining_share_jac),
    )
    return MultilevelProblem(
        levels, 4, name="nested_toll_bounded", names=("t1", "t2", "p1", "p2"),
        optimum=KnownOptimum(eq.value, eq.point[:4], note),
        default_start=np.array([0.0, 0.0, 1.0, 0.0]),
        initial_guess=np.array([0.0, 0.0, 1.0, 0.0]),
        params={"D": D, "toll_cap": toll_cap},
    )


# ---------------------------------------------------------------------------
# Adversarial initial condition


@dataclass(frozen=True)
class PolicySpec:
    """Fixed trajectory policy: step ``delta`` along x1, optionally sinusoidal in x2."""

    kind: str = "linear"
    delta: float = 1.0
    amplitude: float = 0.0
    frequency: float = 0.0

    def __post_init__(self):
        if self.kind not in ("linear", "sinusoidal"):
            raise ArgumentError(f"unknown policy kind {self.kind!r}")
        for name in ("delta", "amplitude", "frequency"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.delta > 0:
            raise ArgumentError("policy step must be positive")

    def step(self, p: np.ndarray) -> np.ndarray:
        x1, x2 = p[..., 0], p[..., 1]
        nx1 = x1 + self.delta
        if self.kind == "linear":
            return _stack(nx1, x2)
        wave = self.amplitude * (np.sin(self.frequency * nx1) - np.sin(self.frequency * x1))
        return _stack(nx1, x2 + wave)

    def rollout(self, x: np.ndarray, n_points: int) -> np.ndarray:
        """``n_points`` successive applications of :meth:`step`, vectorized over the points.

        Running sums reproduce the sequential additions of repeated ``step`` calls.
        """
        shape = x.shape[:-1] + (n_points,)
        inc = np.full(shape, self.delta, dtype=float)
        inc[..., 0] = x[..., 0]
        x1 = np.cumsum(inc, axis=-1)
        if self.kind == "linear":
            x2 = np.broadcast_to(x[..., 1:2], shape)
        else:
            s = np.sin(self.frequency * x1)
            inc = np.empty(shape)
            inc[..., 0] = x[..., 1]
            inc[..., 1:] = self.amplitude * (s[..., 1:] - s[..., :-1])
            x2 = np.cumsum(inc, axis=-1)
        return np.stack([x1, x2], axis=-1)


def generate_trajectory(policy: PolicySpec, x, n_points: int) -> np.ndarray:
    """Roll ``policy`` out from ``x`` for ``n_points`` points (``x`` included).

    Shape ``x.shape[:-1] + (n_points, 2)``.
    """
    if n_points < 1:
        raise ArgumentError("trajectory needs at least one point")
    return policy.rollout(np.asarray(x, dtype=float), n_points)


@dataclass(frozen=True)
class AicScenario:
    obstacle: tuple = (15.0, 5.0)
    radius: float = 2.0
    center: tuple = (5.0, 5.0)
    region_radius: float = 5.0
    n_points: int = 20
    finish: float = 20.0
    policy: PolicySpec = field(default_factory=PolicySpec)

    def __post_init__(self):
        if not (self.radius > 0 and self.region_radius > 0) or self.n_points < 1:
            raise ArgumentError("need positive radii and at least one trajectory point")


def trajectory_margin(scenario: AicScenario, x) -> np.ndarray:
    """Closed-form final-level response: ``min_i ||o - tau_i||^2 - r^2``."""
    return np.min(_clearance(scenario, np.asarray(x, dtype=float)), axis=-1)


def _clearance(scenario, x):
    traj = generate_trajectory(scenario.policy, x, scenario.n_points)
    o = np.asarray(scenario.obstacle, dtype=float)
    return np.sum((traj - o) ** 2, axis=-1) - scenario.radius ** 2


def make_aic(scenario: AicScenario = AicScenario(), samples=(2, 10), step=3.0) -> MultilevelProblem:
    """Adversarial start for a fixed policy, ``X = (x1, x2, T)``.

    The leader maximizes the horizontal length ``finish - x1``; the second
    player, sharing ``x``, minimizes the clearance ``T``; the last player sets
    ``T`` to the smallest obstacle clearance along the trajectory.
    """
    o = np.asarray(scenario.obstacle, dtype=float)
    c = np.asarray(scenario.center, dtype=float)
    pol = scenario.policy

    def length(X):
        return scenario.finish - X[..., 0]

    def length_grad(X):
        z = 0.0 * X[..., 0]
        return _stack(z - 1.0, z, z)

    def clearance_level(X):
        return X[..., 2]

    def in_region(X):
        d = X[..., :2] - c
        return (scenario.region_radius ** 2 - np.sum(d ** 2, axis=-1))[..., None]

    def in_region_jac(X):
        d = X[..., :2] - c
        return _stack(-2 * d[..., 0], -2 * d[..., 1], 0.0 * d[..., 0])[..., None, :]

    def clear_of_obstacle(X):
        return _clearance(scenario, X[..., :2]) - X[..., 2:3]

    def clear_of_obstacle_jac(X):
        traj = generate_trajectory(pol, X[..., :2], scenario.n_points)
        diff = traj - o
        d_tau2_dx1 = 0.0
        if pol.kind == "sinusoidal":
            B, A = pol.frequency, pol.amplitude
            d_tau2_dx1 = A * B * (np.cos(B * traj[..., 0]) - np.cos(B * X[..., None, 0]))
        dx1 = 2 * diff[..., 0] + 2 * diff[..., 1] * d_tau2_dx1
        dx2 = 2 * diff[..., 1]
        return _stack(dx1, dx2, -np.ones_like(dx1))

    def clearance_grad(X):
        z = 0.0 * X[..., 0]
        return _stack(z, z, z + 1.0)

    n1, n2 = samples
    levels = (
        LevelSpec(1, (0, 1), length, "max", gradient=length_grad, samples=n1, step=step),
        LevelSpec(2, (0, 1), clearance_level, "min", inequalities=in_region,
                  inequality_jacobian=in_region_jac, samples=n2, step=step),
        LevelSpec(3, (2,), clearance_level, "max", lower=0.0, inequalities=clear_of_obstacle,
                  gradient=clearance_grad, inequality_jacobian=clear_of_obstacle_jac),
    )
    return MultilevelProblem(
        levels, 3, name="aic", names=("x1", "x2", "T"),
        start_weights=(1e5, 1e-5, 1.0),
        # off the obstacle's symmetry line, where the clearance has a saddle
        initial_guess=np.array([c[0], c[1] - 0.6 * scenario.region_radius, 0.0]),
        params={"scenario": scenario},
    )


# ---------------------------------------------------------------------------
# Trilevel problems from the literature

_SINHA_A = np.array([
    [1.0, 1.0, 1.0, 1.0],
    [1.0, 1.0, -1.0, -1.0],
    [-1.0, -1.0, -1.0, 0.0],
    [-1.0, 1.0, 1.0, 0.0],
    [1.0, -1.0, 1.0, 2.0],
    [1.0, 0.0, 2.0, 3.0],
    [0.0, 0.0, 0.0, 1.0],
    [-1.0, 0.0, 0.0, 0.0],
    [0.0, -1.0, 0.0, 0.0],
    [0.0, 0.0, -1.0, 0.0],
    [0.0, 0.0, 0.0, -1.0],
])
_SINHA_B = np.array([5.0, 2.0, -1.0, 1.0, 4.0, 3.0, 2.0, 0.0, 0.0, 0.0, 0.0])


def _linear(c):
    c = np.asarray(c, dtype=float)
    return (lambda X: X @ c), (lambda X: np.broadcast_to(c, np.shape(X)).copy())


def make_sinha(samples=(6, 3), step=1.0) -> MultilevelProblem:
    """Trilevel linear program, all levels maximizing; ``X = (x1, x2, x3, x4)``.

    The common constraint region (rows of ``A x <= b``, nonnegativity
    included) is attached to every level.
    """
    def common(X):
        return _SINHA_B - X @ _SINHA_A.T

    def common_jac(X):
        return -_SINHA_A

    f1, g1 = _linear([7, 3, -4, 2])
    f2, g2 = _linear([0, 1, 3, 4])
    f3, g3 = _linear([2, 1, 1, 1])
    n1, n2 = samples
    levels = (
        LevelSpec(1, (0, 1), f1, "max", inequalities=common, inequality_jacobian=common_jac,
                  gradient=g1, samples=n1, step=step),
        LevelSpec(2, (2,), f2, "max", inequalities=common, inequality_jacobian=common_jac,
                  gradient=g2, samples=n2, step=step),
        LevelSpec(3, (3,), f3, "max", inequalities=common, inequality_jacobian=common_jac,
                  lower=0.0, upper=2.0, gradient=g3),
    )
    return MultilevelProblem(
        levels, 4, name="sinha", names=("x1", "x2", "x3", "x4"),
        optimum=KnownOptimum(16.25, np.array([2.25, 0.0, 0.0, 0.25]), "reported in the literature"),
        default_start=np.full(4, 0.4),
        params={},
    )


def make_tilahun(samples=(5, 5), step=0.2) -> MultilevelProblem:
    """Trilevel problem with a concave last level, ``X = (x, y, z)``.

    The last player minimizes ``-z^2 + y`` over ``0 <= z <= x``; its solve
    restarts from the box endpoints because a warm start at ``z = 0`` is a
    stationary but non-optimal bound point.
    """
    def leader(X):
        return -X[..., 0] + 4 * X[..., 1]

    def leader_con(X):
        return (1.0 - X[..., 0] - X[..., 1])[..., None]

    def middle(X):
        return 2 * X[..., 1] + X[..., 2]

    def middle_con(X):
        return (2 * X[..., 0] - X[..., 1] - X[..., 2])[..., None]

    def last(X):
        return -X[..., 2] ** 2 + X[..., 1]

    def last_grad(X):
        z = X[..., 2]
        return _stack(0.0 * z, 1.0 + 0.0 * z, -2 * z)

    def last_con(X):
        x, y, z = X[..., 0], X[..., 1], X[..., 2]
        return _stack(x - z, x, 0.5 - x, y, 1.0 - y)

    def last_con_jac(X):
        return np.array([[1.0, 0.0, -1.0], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0],
                         [0.0, 1.0, 0.0], [0.0, -1.0, 0.0]])

    n1, n2 = samples
    levels = (
        LevelSpec(1, (0,), leader, "min", inequalities=leader_con,
                  inequality_jacobian=lambda X: np.array([[-1.0, -1.0, 0.0]]),
                  gradient=lambda X: np.array([-1.0, 4.0, 0.0]), samples=n1, step=step),
        LevelSpec(2, (1,), middle, "min", inequalities=middle_con,
                  inequality_jacobian=lambda X: np.array([[2.0, -1.0, -1.0]]),
                  gradient=lambda X: np.array([0.0, 2.0, 1.0]), samples=n2, step=step),
        LevelSpec(3, (2,), last, "min", inequalities=last_con, inequality_jacobian=last_con_jac,
                  lower=0.0, upper=1.0, gradient=last_grad, multistart=True),
    )
    return MultilevelProblem(
        levels, 3, name="tilahun", names=("x", "y", "z"),
        optimum=KnownOptimum(-0.5, np.array([0.5, 0.0, 0.5]),
                             "corrected minimizer; the literature's (0.5, 0, 0.0095) is not a last-level optimum"),
        default_start=np.zeros(3),
        params={},
    )


# ---------------------------------------------------------------------------
# Norm chain and the shared-variable toy


def make_norm_chain(w, samples=6, step=1.0) -> MultilevelProblem:
    """One level per coordinate; level ``l`` minimizes ``sum_{j>=l} (x_j - w_j)^2``
    subject to ``x_l <= x_{l-1}``.

    Squared norms are used; the hierarchy collapses to projecting ``w`` onto
    the nonincreasing cone.
    """
    w = np.asarray(w, dtype=float).reshape(-1)
    n = w.size
    if n < 2 or not np.all(np.isfinite(w)):
        raise ArgumentError("norm chain needs at least two finite weights")

    def tail_objective(l):
        def f(X):
            return np.sum((X[..., l - 1:] - w[l - 1:]) ** 2, axis=-1)

        def grad(X):
            g = 2 * (X - w)
            g[..., :l - 1] = 0.0
            return g
        return f, grad

    def below_previous(l):
        row = np.zeros(n)
        row[l - 2], row[l - 1] = 1.0, -1.0
        return (lambda X: (X[..., l - 2] - X[..., l - 1])[..., None]), (lambda X: row[None, :])

    levels = []
    for l in range(1, n + 1):
        f, grad = tail_objective(l)
        con, jac = below_previous(l) if l >= 2 else (None, None)
        levels.append(LevelSpec(l, (l - 1,), f, "min", inequalities=con, inequality_jacobian=jac,
                                gradient=grad, samples=samples, step=step))
    x_star = pava_nonincreasing(w)
    return MultilevelProblem(
        tuple(levels), n, name="norm_chain", names=tuple(f"x{i + 1}" for i in range(n)),
        optimum=KnownOptimum(float(np.sum((x_star - w) ** 2)), x_star, "monotone projection of w"),
        default_start=np.zeros(n),
        params={"w": tuple(w)},
    )


def make_shared_toy(lower=0.0, upper=1.0, samples=4, step=0.5) -> MultilevelProblem:
    """Leader maximizes ``x``, follower minimizes the same ``x`` on ``[lower, upper]``."""
    if not lower < upper:
        raise ArgumentError("need lower < upper")

    def ident(X):
        return X[..., 0]

    levels = (
        LevelSpec(1, (0,), ident, "max", gradient=lambda X: np.ones(1), samples=samples, step=step),
        LevelSpec(2, (0,), ident, "min", lower=lower, upper=upper, gradient=lambda X: np.ones(1)),
    )
    return MultilevelProblem(
        levels, 1, name="shared_toy", names=("x",),
        optimum=KnownOptimum(float(lower), np.array([float(lower)]), "follower overrides the leader"),
        default_start=np.array([0.5 * (lower + upper)]),
        params={"lower": lower, "upper": upper},
    )


# ---------------------------------------------------------------------------
# Name-based access for the CLI


def _floats(value):
    if isinstance(value, str):
        return tuple(float(v) for v in value.replace(" ", "").split(",") if v)
    return tuple(float(v) for v in np.atleast_1d(value))


def _build_toll(params, bounded=False):
    scenario = TollScenario(D=float(params.pop("D", 6.0)))
    kw = {}
    if "samples" in params:
        kw["samples"] = int(params.pop("samples"))
    if "step" in params:
        kw["step"] = float(params.pop("step"))
    if bounded and "toll_cap" in params:
        kw["toll_cap"] = float(params.pop("toll_cap"))
    return (make_nested_toll_bounded if bounded else make_nested_toll)(scenario, **kw)


def _build_aic(params):
    policy = PolicySpec(
        kind=str(params.pop("policy", "linear")),
        delta=float(params.pop("delta", 1.0)),
        amplitude=float(params.pop("amplitude", 0.0)),
        frequency=float(params.pop("frequency", 0.0)),
    )
    scenario = AicScenario(
        obstacle=_floats(params.pop("obstacle", "15,5")),
        radius=float(params.pop("radius", 2.0)),
        center=_floats(params.pop("center", "5,5")),
        region_radius=float(params.pop("region_radius", 5.0)),
        n_points=int(params.pop("n_points", 20)),
        finish=float(params.pop("finish", 20.0)),
        policy=policy,
    )
    return make_aic(scenario)


def _build_norm_chain(params):
    w = _floats(params.pop("w", "3,8,7,7,3"))
    if "levels" in params:
        levels = int(params.pop("levels"))
        w = tuple(w[i % len(w)] for i in range(levels))
    return make_norm_chain(w)


def _build_toy(params):
    return make_shared_toy(float(params.pop("lower", 0.0)), float(params.pop("upper", 1.0)))


CATALOG: Dict[str, Callable[[dict], MultilevelProblem]] = {
    "nested_toll": _build_toll,
    "nested_toll_bounded": lambda p: _build_toll(p, bounded=True),
    "aic": _build_aic,
    "sinha": lambda p: make_sinha(),
    "tilahun": lambda p: make_tilahun(),
    "norm_chain": _build_norm_chain,
    "shared_toy": _build_toy,
}


def make_problem(name: str, params: dict = None) -> MultilevelProblem:
    """Build catalog entry ``name``; string parameter values are parsed.

    Raises ``KeyError`` for unknown names and ``ArgumentError`` for unused or
    malformed parameters.
    """
    if name not in CATALOG:
        raise KeyError(f"unknown problem {name!r}; catalog: {', '.join(sorted(CATALOG))}")
    remaining = dict(params or {})
    try:
        problem = CATALOG[name](remaining)
    except ValueError as exc:
        raise ArgumentError(f"bad parameter for {name}: {exc}") from exc
    if remaining:
        raise ArgumentError(f"unknown parameters for {name}: {', '.join(sorted(remaining))}")
    return problem
