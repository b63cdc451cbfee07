"""Next-point selection: cyclic search state, target-value scoring and
distance-weighted scoring.

Both strategies proceed in cycles of ``kappa + 2`` steps (``kappa + 1``
when the pure-exploration step is disabled): an optional exploration
step, ``kappa`` progressively more exploitative global steps, and a
local step.  The auxiliary problems are handed to a subsolver that works
on uniform samples in the original space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels, problem, rbf
from .exceptions import SearchError

#: candidates closer than this (scaled) to a node are never returned
NODE_TOL = rbf.NODE_TOL
#: floor applied to the signed bumpiness coefficient before inversion
MU_FLOOR = 1e-16


@dataclass
class CycleState:
    """Position within the search cycle plus cached quantities."""

    kappa: int = 5
    infstep_enabled: bool = False
    step: int = field(default=None)
    f_min: float = math.inf
    f_max: float = -math.inf
    y_star: Optional[tuple] = None  # (scaled point, surrogate value)

    def __post_init__(self):
        if self.step is None:
            self.step = -1 if self.infstep_enabled else 0

    def at_cycle_start(self):
        return self.step == (-1 if self.infstep_enabled else 0)

    def advance(self):
        """Move to the next step; returns True when a new cycle starts."""
        if self.step >= self.kappa:
            self.step = -1 if self.infstep_enabled else 0
            return True
        self.step += 1
        return False

    def phase(self):
        if self.step == -1:
            return "infstep"
        return "local" if self.step == self.kappa else "global"


@dataclass(frozen=True)
class MsrsmScoreInput:
    reference_points: np.ndarray
    weight: float
    variant: str = "unit_second_term"  # or "one_minus_alpha"


def gutmann_target(state):
    """Target value for the current cycle step: -inf on the exploration
    step, an interpolation between the surrogate minimum and the worst
    observed value on global steps, the surrogate minimum on the local
    step."""
    if state.step == -1:
        return -math.inf
    s_star = state.y_star[1]
    if state.step >= state.kappa:
        return s_star
    frac = 1.0 - state.step / state.kappa
    return s_star - frac * frac * (state.f_max - s_star)


def gutmann_h(f_star, mu, s_value, d):
    """Inverse bumpiness score of a candidate; 0 at evaluated nodes."""
    if mu is None or (isinstance(mu, float) and math.isnan(mu)):
        return 0.0
    signed = (-1.0) ** (d + 1) * mu
    return 1.0 / (max(signed, MU_FLOOR) * (s_value - f_star) ** 2)


def msrsm_weight(state):
    """Distance weight for the current cycle step."""
    if state.step == -1:
        return math.inf
    if state.step >= state.kappa:
        return 0.0
    return max(1.0 - (state.step + 1) / state.kappa, 0.05)


def _score_batch(dist, svals, alpha, variant):
    """Distance-weighted scores of candidates given their min distance to
    the nodes and surrogate values, normalized over the same batch (which
    doubles as the reference set)."""
    if alpha == math.inf:
        return -dist
    score = np.zeros_like(dist)
    drange = dist.max() - dist.min()
    if alpha > 0 and drange > 0:
        score += alpha * (dist.max() - dist) / drange
    w2 = 1.0 - alpha if variant == "one_minus_alpha" else 1.0
    srange = svals.max() - svals.min()
    if w2 != 0 and srange > 0:
        score += w2 * (svals - svals.min()) / srange
    return score


def msrsm_score(x, model, nodes, inp):
    """Score of a single candidate against an explicit reference set."""
    ref = np.atleast_2d(np.asarray(inp.reference_points, dtype=float))
    if ref.shape[0] == 0:
        raise ValueError("reference set must not be empty")
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    x = np.asarray(x, dtype=float)
    dist_x = _kernels.min_dist(x[None, :], nodes)[0]
    if inp.weight == math.inf:
        return -dist_x
    dist_r = _kernels.min_dist(ref, nodes)
    s_x = rbf.predict(model, x)
    s_r = rbf.predict(model, ref)
    score = 0.0
    drange = dist_r.max() - dist_r.min()
    if inp.weight > 0 and drange > 0:
        score += inp.weight * (dist_r.max() - dist_x) / drange
    w2 = 1.0 - inp.weight if inp.variant == "one_minus_alpha" else 1.0
    srange = s_r.max() - s_r.min()
    if w2 != 0 and srange > 0:
        score += w2 * (s_x - s_r.min()) / srange
    return float(score)


def _minimize_surrogate(model, spec, subsolver, rng):
    def objective(pts):
        return rbf.predict(model, spec.scale(pts))

    x, val, _, _ = subsolver.minimize(objective, spec, rng)
    return spec.scale(x), val


def _pick(scaled_candidates, scores, nodes):
    """Best-scoring candidate that does not coincide with a node."""
    order = np.argsort(scores, kind="stable")
    dist = _kernels.min_dist(scaled_candidates, nodes)
    for i in order:
        if dist[i] > NODE_TOL:
            return scaled_candidates[i]
    return None


def next_point(
    algorithm,
    state,
    model,
    spec,
    subsolver,
    rng,
    msrsm_variant="unit_second_term",
    shortcut_rtol=1e-10,
    target_margin=1e-2,
):
    """Select the next evaluation point (in scaled coordinates).

    First refreshes the cached surrogate minimizer (lazily: the
    distance-weighted strategy only consumes it on the local step, the
    target-value strategy on every step).  On the local step the
    minimizer is accepted outright when it undercuts the best observed
    value; otherwise the step's auxiliary problem is solved with the
    subsolver.  The returned point is guaranteed to be distinct from all
    interpolation nodes.
    """
    d = model.kind.degree
    nodes = model.nodes
    if algorithm == "gutmann" or state.step >= state.kappa:
        y_star, s_star = _minimize_surrogate(model, spec, subsolver, rng)
        state.y_star = (y_star, s_star)

    if state.step >= state.kappa:
        if s_star < state.f_min - shortcut_rtol * abs(state.f_min):
            if _kernels.min_dist(y_star[None, :], nodes)[0] > NODE_TOL:
                return y_star

    if algorithm == "gutmann":
        if state.step >= state.kappa:
            f_star = state.f_min - target_margin * abs(state.f_min)
        else:
            f_star = gutmann_target(state)

        if f_star == -math.inf:

            def objective(pts):
                scaled = spec.scale(pts)
                mu = rbf.bumpiness_mu_batch(model, scaled, spec)
                signed = np.maximum((-1.0) ** (d + 1) * mu, MU_FLOOR)
                score = -1.0 / signed
                score[np.isnan(mu)] = 0.0
                return score

        else:

            def objective(pts):
                scaled = spec.scale(pts)
                mu = rbf.bumpiness_mu_batch(model, scaled, spec)
                svals = rbf.predict(model, scaled)
                signed = np.maximum((-1.0) ** (d + 1) * mu, MU_FLOOR)
                with np.errstate(divide="ignore"):
                    h = 1.0 / (signed * (svals - f_star) ** 2)
                h[np.isnan(mu)] = 0.0
                return -h

    elif algorithm == "msrsm":
        alpha = msrsm_weight(state)
        if state.step >= state.kappa:
            alpha = 0.05

        def objective(pts):
            scaled = spec.scale(pts)
            dist = _kernels.min_dist(scaled, nodes)
            svals = rbf.predict(model, scaled) if alpha != math.inf else None
            return _score_batch(dist, svals, alpha, msrsm_variant)

    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")

    x, _, pool, pool_scores = subsolver.minimize(objective, spec, rng)
    x_scaled = spec.scale(x)
    if _kernels.min_dist(x_scaled[None, :], nodes)[0] > NODE_TOL:
        return x_scaled
    chosen = _pick(spec.scale(np.atleast_2d(pool)), pool_scores, nodes)
    if chosen is not None:
        return chosen
    # perturbation retry: rescore a fresh uniform sample
    retry = problem.sample_uniform(spec, max(1000, 100 * spec.ext_dim), rng)
    chosen = _pick(spec.scale(retry), objective(retry), nodes)
    if chosen is None:
        raise SearchError("all candidate points coincide with existing nodes")
    return chosen
