"""Local NLP solver used for the final level and for whole-space start solves.

Method: augmented Lagrangian (Powell-Hestenes-Rockafellar form) over the
free coordinates.  General inequalities and equalities enter the penalty
term; box bounds on free coordinates are kept exactly by projection.  Each
subproblem is minimized by a projected Newton method whose Hessian comes
from differences of gradients, with negative curvature flipped so every
step is a descent step.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .errors import EvaluationError
from .problem import MultilevelProblem

SOLVED = "solved"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration-limit"

_MAX_CORNERS = 64
_DIVERGED = 1e12


@dataclass(frozen=True)
class SolverSettings:
    stationarity_tol: float = 1e-8
    constraint_tol: float = 1e-8
    max_outer: int = 50
    max_inner: int = 200
    penalty_growth: float = 10.0
    fd_step: float = 1e-6
    initial_penalty: float = 100.0
    max_penalty: float = 1e10
    # None defers to the level's own multistart flag.
    multistart: Optional[bool] = None

    def __post_init__(self):
        for name in ("stationarity_tol", "constraint_tol", "fd_step", "initial_penalty"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.penalty_growth <= 1:
            raise ValueError("penalty_growth must exceed 1")


@dataclass(frozen=True, eq=False)
class NlpSpec:
    """``min objective(X)`` over ``X[free]`` subject to ``ineq >= 0``, ``eq == 0``, bounds.

    Callables take the full vector; coordinates outside ``free`` stay frozen.
    Derivative callables, when given, return derivatives w.r.t. the full vector.
    """

    objective: Callable
    free: tuple
    inequalities: Optional[Callable] = None
    equalities: Optional[Callable] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    gradient: Optional[Callable] = None
    inequality_jacobian: Optional[Callable] = None
    equality_jacobian: Optional[Callable] = None

    def __post_init__(self):
        free = tuple(int(i) for i in self.free)
        if not free:
            raise ValueError("free index set must be non-empty")
        object.__setattr__(self, "free", free)
        k = len(free)
        lo = np.full(k, -np.inf) if self.lower is None else np.broadcast_to(np.asarray(self.lower, float), (k,)).copy()
        hi = np.full(k, np.inf) if self.upper is None else np.broadcast_to(np.asarray(self.upper, float), (k,)).copy()
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)


@dataclass(frozen=True)
class SolverResult:
    point: np.ndarray
    status: str
    stationarity: float
    violation: float
    objective: float
    outer_iterations: int = 0

    @property
    def solved(self) -> bool:
        return self.status == SOLVED


def finite_diff_gradient(f: Callable, X: np.ndarray, free, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` over the coordinates in ``free``."""
    if not h > 0:
        raise ValueError("step must be positive")
    X = np.array(X, dtype=float)
    free = list(free)
    grad = np.empty(len(free))
    for j, i in enumerate(free):
        xi = X[i]
        X[i] = xi + h
        fp = float(f(X))
        X[i] = xi - h
        fm = float(f(X))
        X[i] = xi
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise EvaluationError(f"non-finite value while differencing coordinate {i}", point=X.copy())
        grad[j] = (fp - fm) / (2 * h)
    return grad


def _fd_jacobian(fun: Callable, X: np.ndarray, free, h: float) -> np.ndarray:
    X = np.array(X, dtype=float)
    cols = []
    for i in free:
        xi = X[i]
        X[i] = xi + h
        fp = np.atleast_1d(np.asarray(fun(X), dtype=float))
        X[i] = xi - h
        fm = np.atleast_1d(np.asarray(fun(X), dtype=float))
        X[i] = xi
        cols.append((fp - fm) / (2 * h))
    return np.stack(cols, axis=-1)


class _Evaluator:
    """Objective/constraint values and derivatives restricted to the free coordinates."""

    def __init__(self, nlp: NlpSpec, X0: np.ndarray, h: float):
        self.nlp = nlp
        self.X = np.array(X0, dtype=float)
        self.free = list(nlp.free)
        self.h = h

    def full(self, z: np.ndarray) -> np.ndarray:
        X = self.X.copy()
        X[self.free] = z
        return X

    def f(self, X) -> float:
        return float(self.nlp.objective(X))

    def grad_f(self, X) -> np.ndarray:
        if self.nlp.gradient is not None:
            return np.asarray(self.nlp.gradient(X), dtype=float)[self.free]
        return finite_diff_gradient(self.nlp.objective, X, self.free, self.h)

    def g(self, X) -> np.ndarray:
        if self.nlp.inequalities is None:
            return np.zeros(0)
        return np.atleast_1d(np.asarray(self.nlp.inequalities(X), dtype=float))

    def h_eq(self, X) -> np.ndarray:
        if self.nlp.equalities is None:
            return np.zeros(0)
        return np.atleast_1d(np.asarray(self.nlp.equalities(X), dtype=float))

    def jac_g(self, X) -> np.ndarray:
        if self.nlp.inequalities is None:
            return np.zeros((0, len(self.free)))
        if self.nlp.inequality_jacobian is not None:
            return np.atleast_2d(np.asarray(self.nlp.inequality_jacobian(X), dtype=float))[:, self.free]
        return _fd_jacobian(self.nlp.inequalities, X, self.free, self.h).reshape(-1, len(self.free))

    def jac_h(self, X) -> np.ndarray:
        if self.nlp.equalities is None:
            return np.zeros((0, len(self.free)))
        if self.nlp.equality_jacobian is not None:
            return np.atleast_2d(np.asarray(self.nlp.equality_jacobian(X), dtype=float))[:, self.free]
        return _fd_jacobian(self.nlp.equalities, X, self.free, self.h).reshape(-1, len(self.free))


class _AugmentedLagrangian:
    def __init__(self, ev: _Evaluator, mu, lam, rho):
        self.ev, self.mu, self.lam, self.rho = ev, mu, lam, rho

    def value(self, z) -> float:
        ev, rho = self.ev, self.rho
        X = ev.full(z)
        v = ev.f(X)
        g = ev.g(X)
        if g.size:
            s = np.maximum(0.0, self.mu - rho * g)
            v += float(s @ s - self.mu @ self.mu) / (2 * rho)
        h = ev.h_eq(X)
        if h.size:
            v += float(-self.lam @ h + 0.5 * rho * h @ h)
        return v if np.isfinite(v) else np.inf

    def gradient(self, z) -> np.ndarray:
        ev, rho = self.ev, self.rho
        X = ev.full(z)
        grad = ev.grad_f(X)
        g = ev.g(X)
        if g.size:
            s = np.maximum(0.0, self.mu - rho * g)
            if s.any():
                grad = grad - ev.jac_g(X).T @ s
        h = ev.h_eq(X)
        if h.size:
            grad = grad + ev.jac_h(X).T @ (rho * h - self.lam)
        return grad

    def hessian(self, z, step) -> np.ndarray:
        k = z.size
        H = np.empty((k, k))
        for j in range(k):
            zp = z.copy()
            zm = z.copy()
            zp[j] += step
            zm[j] -= step
            H[:, j] = (self.gradient(zp) - self.gradient(zm)) / (2 * step)
        return 0.5 * (H + H.T)


def _projected_gradient(z, grad, lo, hi) -> np.ndarray:
    return z - np.clip(z - grad, lo, hi)


def _descent_direction(H: np.ndarray, grad: np.ndarray) -> np.ndarray:
    if H.shape[0] == 1:
        curv = abs(H[0, 0])
        return -grad / max(curv, 1e-8 * max(1.0, abs(grad[0])), 1e-12)
    w, V = np.linalg.eigh(H)
    w = np.abs(w)
    w = np.maximum(w, max(1e-8 * w.max(initial=0.0), 1e-12))
    return -V @ ((V.T @ grad) / w)


def _minimize_box(al: _AugmentedLagrangian, z, lo, hi, tol, max_iter):
    """Projected Newton on the augmented Lagrangian; returns ``(z, value, grad)``."""
    val = al.value(z)
    grad = al.gradient(z)
    hstep = 1e-5 * max(1.0, float(np.max(np.abs(z), initial=0.0)))
    for _ in range(max_iter):
        pg = _projected_gradient(z, grad, lo, hi)
        if np.max(np.abs(pg)) <= tol:
            break
        active = ((z <= lo) & (grad > 0)) | ((z >= hi) & (grad < 0))
        d = np.zeros_like(z)
        inactive = ~active
        if inactive.any():
            H = al.hessian(z, hstep)[np.ix_(inactive, inactive)]
            d[inactive] = _descent_direction(H, grad[inactive])
        z_new, val_new = _line_search(al, z, val, grad, d, lo, hi)
        if z_new is None:
            z_new, val_new = _line_search(al, z, val, grad, -pg, lo, hi)
            if z_new is None:
                break
        moved = float(np.max(np.abs(z_new - z)))
        z, val = z_new, val_new
        if np.max(np.abs(z)) > _DIVERGED:
            break
        grad = al.gradient(z)
        # at large penalties roundoff keeps the gradient above tol; stop once steps vanish
        if moved <= 1e-13 * (1.0 + float(np.max(np.abs(z)))):
            break
    return z, val, grad


def _line_search(al, z, val, grad, d, lo, hi):
    t = 1.0
    for _ in range(40):
        z_new = np.clip(z + t * d, lo, hi)
        step = z_new - z
        if not step.any():
            return None, None
        val_new = al.value(z_new)
        if val_new <= val + 1e-4 * float(grad @ step):
            return z_new, val_new
        t *= 0.5
    return None, None


def _polish(ev: _Evaluator, z, mu, lam, lo, hi, settings: SolverSettings):
    """Newton-KKT solve on the active set guessed by the last multiplier update.

    Returns a verified ``SolverResult`` or ``None`` when the guess does not
    yield a KKT point within tolerance.
    """
    z = z.copy()
    act = mu > 0
    fixed = (z <= lo) | (z >= hi)
    F = ~fixed
    nu = np.concatenate([mu[act], lam])
    ctol, stol = settings.constraint_tol, settings.stationarity_tol

    def lagrangian_grad(zz, nu):
        X = ev.full(zz)
        grad = ev.grad_f(X)
        J = np.vstack([ev.jac_g(X)[act], ev.jac_h(X)])
        return grad - J.T @ nu, J

    converged = False
    prev = np.inf
    for _ in range(8):
        X = ev.full(z)
        c = np.concatenate([ev.g(X)[act], ev.h_eq(X)])
        gL, J = lagrangian_grad(z, nu)
        scale = max(1.0, abs(ev.f(X)))
        c_norm = float(np.max(np.abs(c), initial=0.0))
        g_norm = float(np.max(np.abs(gL[F]), initial=0.0))
        if c_norm <= 0.1 * ctol and g_norm <= stol * scale:
            converged = True
            break
        # Newton on the right active set converges fast; slow progress means a wrong guess
        if max(c_norm, g_norm / scale) > 0.5 * prev:
            break
        prev = max(c_norm, g_norm / scale)
        if not F.any():
            break
        kf = int(F.sum())
        step = 1e-5 * max(1.0, float(np.max(np.abs(z))))
        H = np.empty((kf, kf))
        for col, j in enumerate(np.flatnonzero(F)):
            zp, zm = z.copy(), z.copy()
            zp[j] += step
            zm[j] -= step
            H[:, col] = ((lagrangian_grad(zp, nu)[0] - lagrangian_grad(zm, nu)[0]) / (2 * step))[F]
        H = 0.5 * (H + H.T)
        m = c.size
        K = np.zeros((kf + m, kf + m))
        K[:kf, :kf] = H
        K[:kf, kf:] = -J[:, F].T
        K[kf:, :kf] = J[:, F]
        # solve for the step and the new multipliers directly
        rhs = np.concatenate([-(gL[F] + J[:, F].T @ nu), -c])
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        z[F] += sol[:kf]
        nu = sol[kf:]
        if not np.all(np.isfinite(z)):
            return None
    if not converged:
        return None
    X = ev.full(z)
    if np.any(z < lo) or np.any(z > hi):
        return None
    g, h = ev.g(X), ev.h_eq(X)
    viol = max(float(np.max(-g, initial=0.0)), float(np.max(np.abs(h), initial=0.0)))
    n_act = int(act.sum())
    scale = max(1.0, abs(ev.f(X)))
    if viol > ctol or np.any(nu[:n_act] < -stol * scale):
        return None
    gL, _ = lagrangian_grad(z, nu)
    # bound multipliers must push against their bounds
    if np.any(gL[z <= lo] < -stol * scale) or np.any(gL[z >= hi] > stol * scale):
        return None
    stat = float(np.max(np.abs(_projected_gradient(z, gL, lo, hi)), initial=0.0))
    return SolverResult(X, SOLVED, stat, viol, ev.f(X))


def _solve_from(nlp: NlpSpec, X: np.ndarray, settings: SolverSettings) -> SolverResult:
    ev = _Evaluator(nlp, X, settings.fd_step)
    lo, hi = nlp.lower, nlp.upper
    z = np.clip(ev.X[ev.free], lo, hi)
    X0 = ev.full(z)
    mu = np.zeros(ev.g(X0).size)
    lam = np.zeros(ev.h_eq(X0).size)
    rho = settings.initial_penalty
    prev_viol = np.inf
    stalled = 0
    raised = []
    status = ITERATION_LIMIT
    stat = viol = np.inf
    outer = 0
    for outer in range(1, settings.max_outer + 1):
        al = _AugmentedLagrangian(ev, mu, lam, rho)
        z, _, grad_al = _minimize_box(al, z, lo, hi, settings.stationarity_tol, settings.max_inner)
        Xz = ev.full(z)
        if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > _DIVERGED:
            break
        g, h = ev.g(Xz), ev.h_eq(Xz)
        viol = max(float(np.max(-g, initial=0.0)), float(np.max(np.abs(h), initial=0.0)))
        mu = np.maximum(0.0, mu - rho * g)
        lam = lam - rho * h
        # with the updated multipliers, grad of the AL equals grad of the Lagrangian
        stat = float(np.max(np.abs(_projected_gradient(z, grad_al, lo, hi)), initial=0.0))
        compl = float(np.max(np.abs(np.minimum(g, mu)), initial=0.0))
        scale = max(1.0, abs(ev.f(Xz)))
        if viol <= settings.constraint_tol and stat <= settings.stationarity_tol * scale \
                and compl <= settings.constraint_tol * max(1.0, float(np.max(mu, initial=0.0))):
            status = SOLVED
            break
        if g.size or h.size:
            polished = _polish(ev, z, mu, lam, lo, hi, settings)
            if polished is not None:
                return replace(polished, outer_iterations=outer)
        if viol > settings.constraint_tol and viol > 0.25 * prev_viol:
            raised.append(viol)
            # a clearly positive violation unmoved across three penalty increases: locally infeasible
            if len(raised) >= 4 and viol > 0.99 * raised[-4] and viol > np.sqrt(settings.constraint_tol):
                status = INFEASIBLE
                break
            if rho >= settings.max_penalty:
                stalled += 1
                if stalled >= 2:
                    status = INFEASIBLE
                    break
            rho = min(rho * settings.penalty_growth, settings.max_penalty)
        prev_viol = viol
    Xz = ev.full(z)
    obj = ev.f(Xz) if np.all(np.isfinite(z)) else np.inf
    if status == ITERATION_LIMIT and viol > settings.constraint_tol and rho >= settings.max_penalty:
        status = INFEASIBLE
    return SolverResult(Xz, status, stat, viol, obj, outer)


def _corner_starts(nlp: NlpSpec, X: np.ndarray):
    options = []
    for j, i in enumerate(nlp.free):
        ends = [b for b in (nlp.lower[j], nlp.upper[j]) if np.isfinite(b)]
        options.append(ends or [X[i]])
    for corner in itertools.islice(itertools.product(*options), _MAX_CORNERS):
        start = np.array(X, dtype=float)
        start[list(nlp.free)] = corner
        yield start


def solve_nlp(nlp: NlpSpec, X: np.ndarray, settings: SolverSettings = SolverSettings(),
              multistart: bool = False) -> SolverResult:
    """Solve ``nlp`` locally from the warm start ``X``.

    With ``multistart`` the solve is repeated from every corner of the free
    coordinates' box and the best solved result wins (warm start on ties).
    """
    best = _solve_from(nlp, X, settings)
    if not multistart:
        return best
    for start in _corner_starts(nlp, X):
        res = _solve_from(nlp, start, settings)
        if res.solved and (not best.solved or res.objective < best.objective):
            best = res
    return best


@lru_cache(maxsize=128)
def final_level_nlp(problem: MultilevelProblem) -> NlpSpec:
    """The final level's NLP in canonical (minimization) form."""
    spec = problem.final
    sign = spec.sign
    objective = spec.objective if sign > 0 else (lambda X: -spec.objective(X))
    gradient = spec.gradient
    if gradient is not None and sign < 0:
        gradient = lambda X: -np.asarray(spec.gradient(X))  # noqa: E731
    return NlpSpec(
        objective=objective,
        free=spec.block,
        inequalities=spec.inequalities,
        equalities=spec.equalities,
        lower=spec.lower,
        upper=spec.upper,
        gradient=gradient,
        inequality_jacobian=spec.inequality_jacobian,
        equality_jacobian=spec.equality_jacobian,
    )


def solve_full(problem: MultilevelProblem, X: np.ndarray,
               settings: SolverSettings = SolverSettings()) -> SolverResult:
    """Fully solve the final level over its block, warm-started at ``X``."""
    multistart = problem.final.multistart if settings.multistart is None else settings.multistart
    return solve_nlp(final_level_nlp(problem), X, settings, multistart=multistart)


def with_overrides(settings: SolverSettings, **overrides) -> SolverSettings:
    return replace(settings, **overrides)
