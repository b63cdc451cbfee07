"""Initial experimental designs.

The initial sample count follows a piecewise formula in the problem
dimension with separate serial and parallel branches.  Points come from
a maximin latin hypercube: among a pool of random stratified designs the
one with the largest minimum pairwise distance is kept.  For kernels
with a degree-1 tail the design is regenerated until the reduced tail
matrix is numerically full rank.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import problem, rbf
from .exceptions import DesignError

#: number of random candidate designs scored for the maximin criterion
MAXIMIN_CANDIDATES = 50
#: smallest acceptable singular value of the reduced tail matrix
RANK_TOL = 1e-6


@dataclass(frozen=True)
class InitConfig:
    threads: int = 1
    max_regeneration_attempts: int = 20

    def __post_init__(self):
        if self.max_regeneration_attempts < 1:
            raise ValueError("max_regeneration_attempts must be >= 1")


def _rint(v):
    # round half away from zero (v is always positive here)
    return int(math.floor(v + 0.5))


def initial_sample_count(n, threads=1):
    """Number of initial sample points for an ``n``-dimensional problem."""
    if threads >= 2:
        if n <= 20:
            return n + 1
        if n <= 50:
            return _rint(0.75 * (n + 1))
        return _rint(0.5 * (n + 1))
    if n <= 20:
        return _rint(0.5 * (n + 1))
    return _rint(0.4 * (n + 1))


def _grid_strata(count, m, rng):
    """Balanced stratified draw of ``count`` values from a grid of ``m``:
    a randomly shifted comb keeps per-value counts within one of each
    other (values repeat once count exceeds m)."""
    idx = np.floor((np.arange(count) + rng.uniform()) * m / count)
    idx = np.minimum(idx, m - 1).astype(int)
    rng.shuffle(idx)
    return idx


def _one_lhd(spec, count, rng):
    """A single latin hypercube draw in original space."""
    pts = np.empty((count, spec.orig_dim))
    nb = spec.n_continuous + spec.n_integer
    for j in range(spec.orig_dim):
        if j < spec.n_continuous:
            strata = (rng.permutation(count) + rng.uniform(size=count)) / count
            pts[:, j] = spec.lower[j] + strata * (spec.upper[j] - spec.lower[j])
        elif j < nb:
            m = int(spec.upper[j] - spec.lower[j]) + 1
            pts[:, j] = spec.lower[j] + _grid_strata(count, m, rng)
        else:
            pts[:, j] = 1 + _grid_strata(count, spec.cat_sizes[j - nb], rng)
    return pts


def _min_pairwise(scaled):
    if scaled.shape[0] < 2:
        return np.inf
    from . import _kernels

    d = _kernels.pairwise_dist(scaled, scaled)
    np.fill_diagonal(d, np.inf)
    return d.min()


def latin_hypercube(spec, count, rng, config=InitConfig()):
    """Maximin latin hypercube design, returned as encoded extended points.

    Each continuous dimension is stratified into ``count`` equal bins with
    one sample per bin; discrete dimensions stratify over their value
    grids.  Designs containing coincident points are regenerated up to the
    configured number of attempts.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    for _ in range(config.max_regeneration_attempts):
        best, best_sep = None, -np.inf
        for _ in range(MAXIMIN_CANDIDATES):
            cand = _one_lhd(spec, count, rng)
            enc = problem.encode_batch(cand, spec)
            sep = _min_pairwise(spec.scale(enc))
            if sep > best_sep:
                best, best_sep = enc, sep
        if best_sep > problem.COINCIDENCE_TOL or count == 1:
            return best
    raise DesignError(
        f"could not draw {count} distinct design points in "
        f"{config.max_regeneration_attempts} attempts"
    )


def affine_rank_ok(points, spec, kind):
    """Whether the reduced tail matrix of the given (scaled) points has
    acceptable rank for a degree-1 tail; always true for other tails."""
    if kind.degree != 1:
        return True
    points = np.atleast_2d(np.asarray(points, dtype=float))
    tail, _ = rbf._tail_matrix(points, spec, kind)
    sv = np.linalg.svd(tail, compute_uv=False)
    k, cols = tail.shape
    needed = min(k, cols)
    return bool(sv[needed - 1] > RANK_TOL)


def initial_design(spec, count, kind, rng, config=InitConfig()):
    """A maximin LHD regenerated until the tail-rank check passes."""
    for _ in range(config.max_regeneration_attempts):
        pts = latin_hypercube(spec, count, rng, config)
        if affine_rank_ok(spec.scale(pts), spec, kind):
            return pts
    raise DesignError("initial design stayed rank deficient; giving up")
