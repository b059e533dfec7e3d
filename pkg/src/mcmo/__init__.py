"""Monte-Carlo search for approximate Stackelberg equilibria of multilevel problems."""

from .baselines import bounded_random_search, iterative_best_response
from .engine import (EngineParams, RunHistory, argmin_candidates, find_feasible_start, optimize, run_mcmo,
                     smoothen, solves_per_iteration, weighted_start)
from .errors import (ArgumentError, BaselineFailure, ConfigError, EvaluationError, MCMOError,
                     NoFeasibleStartError, PreconditionError)
from .problem import (DEFAULT_TOL, FeasibilityReport, KnownOptimum, LevelSpec, MultilevelProblem,
                      embed_block, feasibility_report, objective_value)
from .problems import CATALOG, make_problem
from .sampler import RngStream, candidate_set, rand_directions
from .solver import NlpSpec, SolverResult, SolverSettings, finite_diff_gradient, solve_full, solve_nlp

__version__ = "0.1.0"
