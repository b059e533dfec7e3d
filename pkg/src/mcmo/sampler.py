"""Random perturbation directions and candidate points.

Randomness is counter based: a stream is identified by a seed and a path of
non-negative integers (outer iteration, then one pair per recursion level).
The same seed and path always reproduce the same draws, independently of the
order in which candidates are evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import MultilevelProblem


@dataclass(frozen=True)
class RngStream:
    seed: int
    path: tuple = ()

    def child(self, *index: int) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(int(i) for i in index))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed % 2**64, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(seq))


def rand_directions(count: int, dim: int, rng: RngStream) -> np.ndarray:
    """``count`` directions drawn uniformly from the unit hypercube ``[-0.5, 0.5]^dim``.

    Returns an array of shape ``(count, dim)``.
    """
    if count < 0 or dim < 1:
        raise ValueError("need count >= 0 and dim >= 1")
    if count == 0:
        return np.empty((0, dim))
    return rng.generator().random((count, dim)) - 0.5


def candidate_set(problem: MultilevelProblem, X: np.ndarray, level: int, N: int,
                  alpha: float, rng: RngStream) -> np.ndarray:
    """``X`` plus ``N`` perturbations of edge ``alpha`` along ``level``'s block.

    Row 0 is ``X`` itself (the zero direction); shape ``(N + 1, n)``.
    """
    block = list(problem.level(level).block)
    out = np.tile(np.asarray(X, dtype=float), (N + 1, 1))
    out[1:, block] += alpha * rand_directions(N, len(block), rng)
    return out
