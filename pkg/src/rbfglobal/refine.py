"""Local refinement around the incumbent.

Periodically the engine descends a linear model fitted to the n+1
evaluated points nearest the incumbent, with a doubling/halving step
radius, QR-based repair when the sample set loses affine independence,
and probabilistic rounding of discrete coordinates.  Everything here
works in scaled coordinates; evaluation of the true objective is
delegated to a callback so both the serial engine and the parallel
optimizer can drive the same state machine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import qr

from . import _kernels

NODE_TOL = 1e-10


@dataclass(frozen=True)
class RefineConfig:
    min_radius: float = 1e-3          # smallest useful search radius (scaled)
    radius_init_exponent: float = 1.0  # log2 multiplier applied at startup
    shrink_threshold: float = 0.25     # decrease ratio at or below which rho halves
    expand_threshold: float = 0.75     # decrease ratio at or above which rho doubles
    accept_threshold: float = 0.0      # decrease ratio needed to move the iterate
    trigger_cycles: int = 3            # full search cycles between refinements
    max_iterations: int = 5            # consecutive refinement iterations
    gradient_floor: float = 1e-3       # stop when the model gradient is shorter
    rounding_trials: int = 10

    def __post_init__(self):
        if not 0 <= self.accept_threshold <= self.shrink_threshold:
            raise ValueError("need 0 <= accept <= shrink threshold")
        if self.shrink_threshold >= self.expand_threshold:
            raise ValueError("shrink threshold must be below expand threshold")
        if self.min_radius <= 0 or self.max_iterations < 1:
            raise ValueError("bad radius or iteration limit")


@dataclass
class RefinementState:
    points: np.ndarray          # sample set S, one row per point (scaled)
    values: np.ndarray
    x_bar: np.ndarray
    f_bar: float
    rho: float
    model: Optional[tuple] = None      # (c, b) of the current linear fit
    iterations_done: int = 0
    stop_reason: Optional[str] = None


def init_refinement(nodes, values, spec, config):
    """Build the initial refinement state from the evaluated points, or
    None when fewer than n+1 points are available."""
    nodes = np.asarray(nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    n = spec.ext_dim
    if nodes.shape[0] < n + 1:
        return None
    j = int(np.argmin(values))
    x_bar = nodes[j].copy()
    dist = np.linalg.norm(nodes - x_bar, axis=1)
    order = np.argsort(dist, kind="stable")[:n + 1]
    mid = order[math.ceil((n + 1) / 2) - 1]
    rho = max(
        float(np.linalg.norm(x_bar - nodes[mid])),
        config.min_radius * 2.0 ** config.radius_init_exponent,
    )
    return RefinementState(
        points=nodes[order].copy(),
        values=values[order].copy(),
        x_bar=x_bar,
        f_bar=float(values[j]),
        rho=rho,
    )


def project_discrete(x, spec):
    """Project a fractional scaled point onto the feasible grid: integer
    coordinates to the nearest grid value, unary blocks to the nearest
    one-hot vector in l1 distance."""
    out = np.clip(np.asarray(x, dtype=float).copy(), 0.0, 1.0)
    nc = spec.n_continuous
    nb = nc + spec.n_integer
    for j in range(nc, nb):
        span = spec.ext_span[j]
        native = spec.ext_lower[j] + out[j] * span
        out[j] = (np.round(native) - spec.ext_lower[j]) / span
    for h, (start, width) in enumerate(spec.cat_slots):
        if width == 1:
            out[start] = np.round(out[start])
        else:
            block = np.zeros(width)
            block[int(np.argmax(out[start:start + width]))] = 1.0
            out[start:start + width] = block
    return out


def _too_close(candidate, points):
    if len(points) == 0:
        return False
    return bool(
        _kernels.min_dist(
            np.asarray(candidate)[None, :], np.asarray(points)
        )[0] <= NODE_TOL
    )


def propose_geometry_point(state, spec, exclude=()):
    """Check affine independence of the sample set; when it fails, return
    ``(replace_index, new_point)`` repairing the geometry, else None.

    Candidate points are taken along the orthogonal null directions of
    the centered sample matrix (both orientations) and projected onto the
    feasible grid; directions whose projection collapses onto an existing
    or excluded point are skipped.  When no usable direction remains
    (typically because the deficiency lies entirely in unary blocks whose
    projections cannot move) the deficiency is marked degraded and None
    is returned so the caller continues with a least-squares model.
    """
    diffs = (state.points - state.x_bar).T  # columns are S_i - x_bar
    n = diffs.shape[0]
    sv = np.linalg.svd(diffs, compute_uv=False)
    if sv[n - 1] >= 1e-6 * state.rho:
        return None
    q_mat, r_mat, piv = qr(diffs, pivoting=True)
    diag = np.abs(np.diag(r_mat))
    tol = max(diffs.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int((diag > max(tol, 1e-12)).sum())
    # replace the least important (dependent) column, never the incumbent
    x_bar_rows = np.linalg.norm(state.points - state.x_bar, axis=1) <= NODE_TOL
    for idx in piv[::-1]:
        if not x_bar_rows[idx]:
            break
    else:
        idx = piv[-1]
    avoid = list(state.points) + list(exclude)
    for col in range(rank, n):
        for sign in (1.0, -1.0):
            candidate = project_discrete(
                state.x_bar + sign * state.rho * q_mat[:, col], spec
            )
            if not _too_close(candidate, avoid):
                return int(idx), candidate
    return None


def geometry_repair(state, spec, rng, evaluate, max_attempts=5):
    """Repair the sample-set geometry towards n+1 affinely independent
    points, evaluating each replacement point.  Returns the number of
    points evaluated; sets ``stop_reason`` after repeated failures.
    Unrepairable (purely discrete) deficiencies are left in place and the
    linear model falls back to least squares over the degenerate set."""
    evaluated = 0
    attempts = 0
    refused = []
    while True:
        prop = propose_geometry_point(state, spec, exclude=refused)
        if prop is None:
            return evaluated
        if attempts >= max_attempts:
            state.stop_reason = "geometry_failure"
            return evaluated
        attempts += 1
        idx, candidate = prop
        fval = evaluate(candidate)
        if fval is None:
            refused.append(np.asarray(candidate, dtype=float))
            continue
        evaluated += 1
        state.points[idx] = candidate
        state.values[idx] = fval
        if fval < state.f_bar:
            state.f_bar = fval
            state.x_bar = candidate.copy()


def fit_linear_model(points, values):
    """Least-squares linear model c^T x + b over the sample set."""
    a = np.column_stack([points, np.ones(points.shape[0])])
    sol, *_ = np.linalg.lstsq(a, values, rcond=None)
    return sol[:-1], float(sol[-1])


def _max_step(x_bar, c, rho):
    """Largest step length t in [0, rho] keeping x_bar - t c inside the
    unit box."""
    t = rho
    for j in range(x_bar.size):
        if c[j] > 0:
            t = min(t, x_bar[j] / c[j])
        elif c[j] < 0:
            t = min(t, (x_bar[j] - 1.0) / c[j])
    return max(t, 0.0)


def round_point(x, spec, model_c, trials, rng):
    """Probabilistic rounding of a fractional candidate.

    Integer coordinates round down with probability equal to the distance
    to the ceiling; unary blocks round to the one-hot vector e_i with
    probability proportional to their i-th entry.  Out of ``trials``
    independent draws the one with the lowest linear-model score wins.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    nc = spec.n_continuous
    nb = nc + spec.n_integer
    best, best_score = None, math.inf
    for _ in range(trials):
        cand = x.copy()
        for j in range(nc, nb):
            span = spec.ext_span[j]
            native = spec.ext_lower[j] + cand[j] * span
            lo = math.floor(native)
            frac = native - lo
            rounded = lo + (1 if rng.uniform() < frac else 0)
            cand[j] = (rounded - spec.ext_lower[j]) / span
        for h, (start, width) in enumerate(spec.cat_slots):
            if width == 1:
                cand[start] = 1.0 if rng.uniform() < cand[start] else 0.0
            else:
                block = np.maximum(cand[start:start + width], 0.0)
                total = block.sum()
                if total <= 0:
                    pick = rng.integers(0, width)
                else:
                    pick = rng.choice(width, p=block / total)
                cand[start:start + width] = 0.0
                cand[start + pick] = 1.0
        score = float(model_c @ cand)
        if score < best_score:
            best, best_score = cand, score
    return best


def propose_descent_point(state, spec, config, rng):
    """Fit the linear model and compute the next candidate iterate, or
    None when the model gradient is below the configured floor."""
    c, b = fit_linear_model(state.points, state.values)
    state.model = (c, b)
    if np.linalg.norm(c) < config.gradient_floor:
        state.stop_reason = "gradient"
        return None
    t = _max_step(state.x_bar, c, state.rho)
    candidate = state.x_bar - t * c
    if spec.ext_dim > spec.n_continuous:
        candidate = round_point(candidate, spec, c, config.rounding_trials, rng)
    return candidate


def apply_descent_result(state, candidate, f_new, config):
    """Update radius, iterate and sample set from an evaluated candidate.
    ``f_new`` may be None for a refused (duplicate) candidate, which
    counts as a failed step."""
    c, _ = state.model
    expected = float(c @ (state.x_bar - candidate))
    if f_new is None or expected <= 1e-15:
        ratio = -math.inf
    else:
        ratio = (state.f_bar - f_new) / expected
    if ratio <= config.shrink_threshold:
        state.rho /= 2.0
    elif ratio >= config.expand_threshold:
        state.rho *= 2.0
    if ratio >= config.accept_threshold and f_new is not None:
        state.x_bar = candidate.copy()
        state.f_bar = f_new
    if f_new is not None:
        dist = np.linalg.norm(state.points - state.x_bar, axis=1)
        far = int(np.argmax(dist))
        if np.linalg.norm(candidate - state.x_bar) < dist[far]:
            state.points[far] = candidate
            state.values[far] = f_new
    state.iterations_done += 1
    if state.rho < config.min_radius:
        state.stop_reason = "radius"
    elif state.iterations_done >= config.max_iterations:
        state.stop_reason = "iteration_limit"


def refinement_iteration(state, evaluate, spec, config, rng):
    """One full refinement iteration: propose, evaluate, update."""
    candidate = propose_descent_point(state, spec, config, rng)
    if candidate is None:
        return state
    apply_descent_result(state, candidate, evaluate(candidate), config)
    return state


def should_trigger(cycles_since_last, improved_since_last,
                   last_stop_was_iteration_limit, config):
    """Whether a refinement phase is due: enough full search cycles have
    passed and either a better point appeared since the last phase or the
    last phase ran into its iteration limit."""
    return cycles_since_last >= config.trigger_cycles and (
        improved_since_last or last_stop_was_iteration_limit
    )
