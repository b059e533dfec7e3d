"""Run configurations, single experiments, parameter sweeps and their output files.

A configuration is a flat INI file (the ``[run]`` header is optional)::

    problem = nested_toll
    problem.D = 6
    method = mcmo
    maxiter = 100
    k = 10
    seed = 0
    N = 7,7
    alpha = 0.15,0.15
    start = default

Keys prefixed ``problem.`` are passed to the catalog constructor and keys
prefixed ``solver.`` override :class:`SolverSettings` fields.
"""

from __future__ import annotations

import configparser
import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .baselines import bounded_random_search, iterative_best_response
from .engine import EngineParams, find_feasible_start, run_mcmo, solves_per_iteration, weighted_start
from .errors import ArgumentError, ConfigError, MCMOError
from .oracles import aic_grid_oracle, pava_nonincreasing, toll_equilibrium
from .problem import DEFAULT_TOL, MultilevelProblem, check_point, feasible_all, objective_values
from .problems import CATALOG, make_problem, trajectory_margin
from .solver import SolverSettings

METHODS = ("mcmo", "ibr", "bounded_search", "oracle")
START_MODES = ("default", "feasible", "weighted")


@dataclass(frozen=True)
class RunConfig:
    problem: str
    problem_params: dict = field(default_factory=dict)
    method: str = "mcmo"
    maxiter: int = 100
    k: int = 10
    seed: int = 0
    eps: float = DEFAULT_TOL
    samples: Optional[tuple] = None
    iterations: Optional[tuple] = None
    steps: Optional[tuple] = None
    start: object = "default"
    weights: Optional[tuple] = None
    rounds: int = 20
    search_samples: int = 1000
    search_iters: int = 100
    lower: Optional[tuple] = None
    upper: Optional[tuple] = None
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.problem not in CATALOG:
            raise ConfigError(f"unknown problem {self.problem!r}; catalog: {', '.join(sorted(CATALOG))}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if isinstance(self.start, str) and self.start not in START_MODES:
            raise ConfigError(f"start must be one of {', '.join(START_MODES)} or a comma list of numbers")
        if self.maxiter < 0 or self.k < 1 or self.rounds < 1 or self.search_samples < 0 or self.search_iters < 0:
            raise ConfigError("maxiter, search_samples, search_iters must be >= 0; k, rounds must be >= 1")


_INT_KEYS = {"maxiter", "k", "seed", "rounds", "search_samples", "search_iters"}
_LIST_KEYS = {"N": ("samples", int), "M": ("iterations", int), "alpha": ("steps", float),
              "weights": ("weights", float), "lower": ("lower", float), "upper": ("upper", float)}


def _numbers(text: str, kind=float) -> tuple:
    try:
        return tuple(kind(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError as exc:
        raise ConfigError(f"cannot parse number list {text!r}") from exc


def parse_config(text: str) -> RunConfig:
    """Parse INI text into a :class:`RunConfig`; raises ``ConfigError``."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from exc
    if "run" not in parser:
        raise ConfigError("configuration needs a [run] section")
    kw, problem_params, solver = {}, {}, {}
    solver_fields = {f.name: f.type for f in fields(SolverSettings)}
    for key, value in parser["run"].items():
        if key.startswith("problem."):
            problem_params[key[len("problem."):]] = value
        elif key.startswith("solver."):
            name = key[len("solver."):]
            if name not in solver_fields:
                raise ConfigError(f"unknown solver setting {name!r}")
            solver[name] = value
        elif key in _INT_KEYS:
            try:
                kw[key] = int(value)
            except ValueError as exc:
                raise ConfigError(f"{key} must be an integer, got {value!r}") from exc
        elif key == "eps":
            kw[key] = float(_numbers(value)[0])
        elif key in _LIST_KEYS:
            name, kind = _LIST_KEYS[key]
            kw[name] = _numbers(value, kind)
        elif key == "start":
            kw[key] = value if value in START_MODES else _numbers(value)
        elif key in ("problem", "method"):
            kw[key] = value
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
    if "problem" not in kw:
        raise ConfigError("configuration must name a problem")
    return RunConfig(problem_params=problem_params, solver=solver, **kw)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    return parse_config(text)


def config_text(cfg: RunConfig) -> str:
    """Resolved configuration in the same INI format (round-trips through ``parse_config``)."""
    def join(values):
        return ",".join(repr(v) for v in values)

    lines = ["[run]", f"problem = {cfg.problem}"]
    lines += [f"problem.{k} = {v}" for k, v in sorted(cfg.problem_params.items())]
    lines += [f"method = {cfg.method}", f"maxiter = {cfg.maxiter}", f"k = {cfg.k}",
              f"seed = {cfg.seed}", f"eps = {cfg.eps!r}"]
    for key, (name, _) in _LIST_KEYS.items():
        value = getattr(cfg, name)
        if value is not None:
            lines.append(f"{key} = {join(value)}")
    start = cfg.start if isinstance(cfg.start, str) else join(cfg.start)
    lines += [f"start = {start}", f"rounds = {cfg.rounds}", f"search_samples = {cfg.search_samples}",
              f"search_iters = {cfg.search_iters}"]
    lines += [f"solver.{k} = {v}" for k, v in sorted(cfg.solver.items())]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Resolution helpers


def build_problem(cfg: RunConfig) -> MultilevelProblem:
    try:
        return make_problem(cfg.problem, dict(cfg.problem_params))
    except (KeyError, ArgumentError) as exc:
        raise ConfigError(str(exc.args[0] if exc.args else exc)) from exc


def solver_settings(cfg: RunConfig) -> SolverSettings:
    kw = {}
    for f in fields(SolverSettings):
        if f.name in cfg.solver:
            raw = str(cfg.solver[f.name])
            try:
                if f.name == "multistart":
                    kw[f.name] = None if raw.lower() == "none" else raw.lower() in ("1", "true", "yes")
                elif f.name in ("max_outer", "max_inner"):
                    kw[f.name] = int(raw)
                else:
                    kw[f.name] = float(raw)
            except ValueError as exc:
                raise ConfigError(f"bad solver setting {f.name} = {raw!r}") from exc
    try:
        return SolverSettings(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def engine_params(cfg: RunConfig, problem: MultilevelProblem) -> EngineParams:
    try:
        params = EngineParams(maxiter=cfg.maxiter, k=min(cfg.k, max(cfg.maxiter, 1)), seed=cfg.seed,
                              eps=cfg.eps, samples=cfg.samples, iterations=cfg.iterations,
                              steps=cfg.steps, solver=solver_settings(cfg))
        for l in range(1, problem.L):
            params.level_settings(problem, l)
    except ArgumentError as exc:
        raise ConfigError(str(exc)) from exc
    return params


def resolve_start(cfg: RunConfig, problem: MultilevelProblem) -> np.ndarray:
    if not isinstance(cfg.start, str):
        try:
            return check_point(problem, cfg.start)
        except ArgumentError as exc:
            raise ConfigError(f"explicit start: {exc}") from exc
    if cfg.start == "default" and problem.default_start is not None:
        return np.array(problem.default_start, dtype=float)
    if cfg.start == "weighted":
        try:
            return weighted_start(problem, cfg.weights, solver_settings(cfg), cfg.eps)
        except ArgumentError as exc:
            raise ConfigError(str(exc)) from exc
    return find_feasible_start(problem, solver_settings(cfg), cfg.eps)


# ---------------------------------------------------------------------------
# Single runs


@dataclass
class Trace:
    """Method-independent record of a run, one entry per written history row."""

    points: list
    wall_ms: list
    solve_calls: list
    x_star: np.ndarray
    extra: dict = field(default_factory=dict)


def _run_mcmo(cfg, problem, start):
    params = engine_params(cfg, problem)
    history, x_star = run_mcmo(problem, start, params)
    return Trace(history.points, history.wall_ms, history.solve_calls, x_star,
                 {"null_iterations": int(sum(history.null)),
                  "solves_per_iteration": solves_per_iteration(problem, params)})


def _run_ibr(cfg, problem, start):
    t0 = time.perf_counter()
    res = iterative_best_response(problem, cfg.rounds, cfg.seed, solver_settings(cfg))
    ms = 1e3 * (time.perf_counter() - t0)
    n = len(res.trace)
    return Trace(res.trace, [0.0] * (n - 1) + [ms], list(range(n)), res.point, {"rounds": cfg.rounds})


def _run_search(cfg, problem, start):
    if cfg.lower is None or cfg.upper is None:
        raise ConfigError("bounded_search needs lower and upper box bounds")
    t0 = time.perf_counter()
    try:
        res = bounded_random_search(problem, (cfg.lower, cfg.upper), cfg.search_samples,
                                    cfg.search_iters, cfg.seed, cfg.eps)
    except ArgumentError as exc:
        raise ConfigError(str(exc)) from exc
    ms = 1e3 * (time.perf_counter() - t0)
    n = len(res.trace)
    return Trace(res.trace, [0.0] * (n - 1) + [ms], [0] * n, res.point,
                 {"search_samples": cfg.search_samples, "search_iters": cfg.search_iters})


def oracle_solution(problem: MultilevelProblem):
    """Independent reference solution: ``(point, leader value, source)``."""
    name = problem.name
    if name in ("nested_toll", "nested_toll_bounded"):
        eq = toll_equilibrium(problem.params["D"])
        return eq.point[:problem.n], eq.value, "toll reaction maps"
    if name == "norm_chain":
        w = np.asarray(problem.params["w"], dtype=float)
        x = pava_nonincreasing(w)
        return x, float(np.sum((x - w) ** 2)), "pool adjacent violators"
    if name == "aic":
        scenario = problem.params["scenario"]
        res = aic_grid_oracle(scenario)
        x = np.array([res.leader_point[0], res.leader_point[1], 0.0])
        x[2] = float(trajectory_margin(scenario, x[:2]))
        return x, float(problem.level(1).objective(x)), "disk grid scan"
    if problem.optimum is not None:
        return np.asarray(problem.optimum.point, float), float(problem.optimum.value), problem.optimum.note
    raise ConfigError(f"no oracle available for {name}")


def _run_oracle(cfg, problem, start):
    t0 = time.perf_counter()
    x, value, source = oracle_solution(problem)
    ms = 1e3 * (time.perf_counter() - t0)
    return Trace([x], [ms], [0], x, {"oracle_source": source, "oracle_value": value})


_RUNNERS = {"mcmo": _run_mcmo, "ibr": _run_ibr, "bounded_search": _run_search, "oracle": _run_oracle}


def _fmt(v: float) -> str:
    return repr(float(v))


def write_history(path: Path, problem: MultilevelProblem, trace: Trace):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "wall_ms", "solve_full_calls"]
                        + [f"x_{i}" for i in range(problem.n)]
                        + [f"f_{l}" for l in range(1, problem.L + 1)])
        for i, (X, ms, calls) in enumerate(zip(trace.points, trace.wall_ms, trace.solve_calls)):
            writer.writerow([i, f"{ms:.3f}", calls] + [_fmt(v) for v in X]
                            + [_fmt(v) for v in objective_values(problem, X)])


def relative_error(value: float, reference: float) -> float:
    return abs(value - reference) / max(abs(reference), 1e-12)


def run_experiment(cfg: RunConfig, out_dir) -> dict:
    """Execute ``cfg`` and write ``history.csv``, ``summary.json`` and ``config.ini`` to ``out_dir``.

    Returns the summary dictionary.
    """
    problem = build_problem(cfg)
    if cfg.method in ("mcmo",):
        start = resolve_start(cfg, problem)
    else:
        start = None
    t0 = time.perf_counter()
    trace = _RUNNERS[cfg.method](cfg, problem, start)
    seconds = time.perf_counter() - t0
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_history(out / "history.csv", problem, trace)
    x_star = trace.x_star
    leader = float(problem.level(1).objective(x_star))
    summary = {
        "problem": problem.name,
        "method": cfg.method,
        "seed": cfg.seed,
        "x_star": [float(v) for v in x_star],
        "leader_value": leader,
        "objectives": [float(v) for v in objective_values(problem, x_star)],
        "feasible": bool(feasible_all(problem, x_star, cfg.eps)),
        "optimum": None,
        "relative_error": None,
        "total_seconds": seconds,
        "solve_full_calls": int(trace.solve_calls[-1]),
        "iterations": len(trace.points) - 1,
    }
    if start is not None:
        summary["start"] = [float(v) for v in start]
    if problem.optimum is not None:
        summary["optimum"] = {"leader_value": float(problem.optimum.value),
                              "point": [float(v) for v in problem.optimum.point],
                              "note": problem.optimum.note}
        summary["relative_error"] = relative_error(leader, float(problem.optimum.value))
    summary.update(trace.extra)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    (out / "config.ini").write_text(config_text(cfg))
    return summary


# ---------------------------------------------------------------------------
# Sweeps


def _norm_chain_cfg(cfg: RunConfig, levels: int, N: int, alpha: float) -> RunConfig:
    params = dict(cfg.problem_params)
    params["levels"] = str(levels)
    return replace(cfg, problem_params=params, samples=(N,) * (levels - 1),
                   iterations=(1,) * (levels - 1), steps=(alpha,) * (levels - 1))


def _timing_cell(args):
    cfg, levels, N, alpha, repeats = args
    row = {"levels": levels, "N": N, "seconds": "", "solve_full_calls": "", "calls_per_iteration": "",
           "expected_calls_per_iteration": "", "leader_value": "", "error": ""}
    try:
        cell = _norm_chain_cfg(cfg, levels, N, alpha)
        problem = build_problem(cell)
        params = engine_params(cell, problem)
        row["expected_calls_per_iteration"] = solves_per_iteration(problem, params)
        start = resolve_start(cell, problem)
        best = np.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            history, x_star = run_mcmo(problem, start, params)
            best = min(best, time.perf_counter() - t0)
        row["seconds"] = f"{best:.6f}"
        row["solve_full_calls"] = history.solve_calls[-1]
        row["calls_per_iteration"] = history.solve_calls[-1] // max(params.maxiter, 1)
        row["leader_value"] = _fmt(problem.level(1).objective(x_star))
    except MCMOError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _pool_map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def sweep_timing(cfg: RunConfig, levels: Sequence[int], Ns: Sequence[int], out_dir,
                 workers: int = 1, repeats: int = 1) -> list:
    """Time norm-chain runs over a grid of depths and sample counts; writes ``timing.csv``.

    Uses ``cfg.maxiter`` iterations, ``M = 1`` and the first entry of
    ``cfg.steps`` (default 0.25) as the step on every level.  Each cell is
    run ``repeats`` times and the fastest wall time is kept.  Failed cells
    carry an ``error`` message and the sweep continues.  Wall times of cells
    run with ``workers > 1`` share the machine and are only comparable
    within the same sweep.
    """
    if cfg.problem != "norm_chain":
        raise ConfigError("timing sweeps run on the norm_chain family")
    if repeats < 1:
        raise ConfigError("repeats must be at least 1")
    alpha = cfg.steps[0] if cfg.steps else 0.25
    jobs = [(cfg, int(L), int(N), alpha, int(repeats)) for L in levels for N in Ns]
    rows = _pool_map(_timing_cell, jobs, workers)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "timing.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    return rows


def _convergence_cell(args):
    cfg, vary, value, seed = args
    cfg = replace(cfg, seed=seed)
    problem = build_problem(cfg)
    L = problem.L
    if vary == "N":
        cfg = replace(cfg, samples=(int(value),) * (L - 1))
    else:
        cfg = replace(cfg, steps=(float(value),) * (L - 1))
    params = engine_params(cfg, problem)
    history, _ = run_mcmo(problem, resolve_start(cfg, problem), params)
    leader = [problem.level(1).objective(X) for X in history.points]
    return [vary, value, seed] + [_fmt(v) for v in leader]


def sweep_convergence(cfg: RunConfig, vary: str, values: Sequence, out_dir, seeds: Sequence[int] = None,
                      workers: int = 1) -> list:
    """Leader value per outer iteration while varying ``N`` or ``alpha``; writes ``convergence.csv``.

    One row per (setting, seed) with columns ``f1_0 .. f1_<maxiter>``.
    """
    if vary not in ("N", "alpha"):
        raise ConfigError("vary must be N or alpha")
    if cfg.method != "mcmo":
        raise ConfigError("convergence sweeps run the mcmo method")
    seeds = [cfg.seed] if seeds is None else list(seeds)
    jobs = [(cfg, vary, v, s) for v in values for s in seeds]
    rows = _pool_map(_convergence_cell, jobs, workers)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "convergence.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["vary", "value", "seed"] + [f"f1_{i}" for i in range(cfg.maxiter + 1)])
        writer.writerows(rows)
    return rows


def run_oracle(cfg: RunConfig, out_dir) -> dict:
    """Reference solution of the configured problem, written as ``oracle.json``."""
    problem = build_problem(cfg)
    x, value, source = oracle_solution(problem)
    result = {"problem": problem.name, "point": [float(v) for v in x], "leader_value": value, "source": source}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "oracle.json").write_text(json.dumps(result, indent=2) + "\n")
    return result
