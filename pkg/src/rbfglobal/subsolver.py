"""Heuristic optimizers for the auxiliary search problems.

Two subsolvers are provided: a simple genetic algorithm and a pure
sampling scheme.  Both draw candidates uniformly in the original space
(where uniform sampling over the finite categorical ranges is easy) and
map them to the extended space.  Objectives act on whole batches: they
receive a 2-D array of extended points and return one score per row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import problem


@dataclass(frozen=True)
class GaConfig:
    base_population: int = None
    iterations: int = None
    intensive: bool = False

    def __post_init__(self):
        set_ = object.__setattr__
        if self.base_population is None:
            set_(self, "base_population", 5000 if self.intensive else 400)
        if self.iterations is None:
            set_(self, "iterations", 40 if self.intensive else 20)
        if self.base_population < 4:
            raise ValueError("population must be at least 4")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


@dataclass(frozen=True)
class SamplingConfig:
    samples_per_dimension: int = None
    intensive: bool = False

    def __post_init__(self):
        if self.samples_per_dimension is None:
            object.__setattr__(
                self, "samples_per_dimension", 3000 if self.intensive else 1000
            )
        if self.samples_per_dimension < 1:
            raise ValueError("samples_per_dimension must be >= 1")


def _rint(v):
    return int(math.floor(v + 0.5))


def _segments(spec):
    """Extended-space gene segments: single slots for continuous, integer
    and binary-categorical coordinates, whole blocks for unary ones."""
    segs = [(j, 1) for j in range(spec.n_continuous + spec.n_integer)]
    segs += list(spec.cat_slots)
    return segs


def _mutate(best, spec, mutation_age, rng):
    """Perturb some entries of the best individual.  The number of mutated
    variables grows with the iteration count; the noise applied to
    continuous entries shrinks with it."""
    segs = _segments(spec)
    n_vars = len(segs)
    count = min(n_vars, 1 + mutation_age)
    child = best.copy()
    nb = spec.n_continuous + spec.n_integer
    half_width = 0.1 * 2.0 ** (-mutation_age / 5.0)
    for si in rng.choice(n_vars, size=count, replace=False):
        start, width = segs[si]
        if start < spec.n_continuous:
            span = spec.ext_upper[start] - spec.ext_lower[start]
            child[start] = np.clip(
                child[start] + rng.uniform(-1, 1) * half_width * span,
                spec.ext_lower[start],
                spec.ext_upper[start],
            )
        elif start < nb:
            child[start] = rng.integers(
                int(spec.ext_lower[start]), int(spec.ext_upper[start]) + 1
            )
        elif width == 1:
            child[start] = rng.integers(0, 2)
        else:
            child[start:start + width] = 0.0
            child[start + rng.integers(0, width)] = 1.0
    return child


def ga_next_population(current, scores, spec, mutation_age, rng):
    """One generation: keep the best quarter, mate a quarter from random
    pairs of survivors, add one mutant of the best individual, and fill
    the remainder with fresh uniform points.  Population size is
    preserved exactly."""
    current = np.asarray(current, dtype=float)
    scores = np.asarray(scores, dtype=float)
    size = current.shape[0]
    n_surv = _rint(0.25 * size)
    n_off = _rint(0.25 * size)
    n_rand = size - n_surv - n_off - 1

    order = np.argsort(scores, kind="stable")
    survivors = current[order[:n_surv]]

    segs = _segments(spec)
    parents = survivors[rng.integers(0, n_surv, size=(n_off, 2))]
    pick = rng.integers(0, 2, size=(n_off, len(segs)))
    offspring = np.empty((n_off, spec.ext_dim))
    for si, (start, width) in enumerate(segs):
        stop = start + width
        offspring[:, start:stop] = np.where(
            pick[:, si, None] == 0,
            parents[:, 0, start:stop],
            parents[:, 1, start:stop],
        )

    mutant = _mutate(survivors[0], spec, mutation_age, rng)
    fresh = problem.sample_uniform(spec, n_rand, rng)
    return np.vstack([survivors, offspring, mutant[None, :], fresh])


def _ga_run(objective, spec, config, rng):
    size = config.base_population + spec.ext_dim // 5
    pop = problem.sample_uniform(spec, size, rng)
    scores = np.asarray(objective(pop), dtype=float)
    best_i = int(np.argmin(scores))
    best_x, best_v = pop[best_i].copy(), float(scores[best_i])
    for age in range(config.iterations):
        pop = ga_next_population(pop, scores, spec, age, rng)
        scores = np.asarray(objective(pop), dtype=float)
        i = int(np.argmin(scores))
        if scores[i] < best_v:
            best_x, best_v = pop[i].copy(), float(scores[i])
    return best_x, best_v, pop, scores


def ga_minimize(objective, spec, config, rng):
    """Minimize a batch objective over the extended space with the genetic
    algorithm; returns the best point seen over all generations."""
    best_x, best_v, _, _ = _ga_run(objective, spec, config, rng)
    return best_x, best_v


def _sample_run(objective, spec, config, rng):
    count = max(1, config.samples_per_dimension * spec.ext_dim)
    samples = problem.sample_uniform(spec, count, rng)
    scores = np.asarray(objective(samples), dtype=float)
    i = int(np.argmin(scores))
    return samples[i].copy(), float(scores[i]), samples, scores


def sample_minimize(objective, spec, config, rng):
    """Draw ``samples_per_dimension * n`` uniform points and return the
    best one along with the full sample (used as the reference set by the
    distance-weighted search strategy)."""
    x, val, samples, _ = _sample_run(objective, spec, config, rng)
    return x, val, samples


@dataclass(frozen=True)
class Subsolver:
    """Engine-facing handle bundling the method choice and its settings."""

    method: str = "ga"  # or "sampling"
    ga: GaConfig = field(default_factory=GaConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)

    def __post_init__(self):
        if self.method not in ("ga", "sampling"):
            raise ValueError(f"unknown subsolver {self.method!r}")

    def minimize(self, objective, spec, rng):
        """Returns ``(best_point, best_value, pool, pool_scores)`` where
        the pool is the final population (GA) or the full sample."""
        if self.method == "ga":
            return _ga_run(objective, spec, self.ga, rng)
        return _sample_run(objective, spec, self.sampling, rng)
