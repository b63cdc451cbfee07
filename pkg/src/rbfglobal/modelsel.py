"""Automatic kernel selection by order-based leave-one-out cross
validation.

Each fold refits the surrogate without one point and measures how far
the predicted value's insertion position in the sorted value list lands
from the point's true position.  Averages over the best 10% and best 70%
of points pick the kernels for local and global search respectively.
After a fixed number of executions the tallies freeze and the modal
winners are used from then on.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lstsq

from . import rbf
from .exceptions import DuplicateNodeError, UnsolvableSystemError

#: executions after which the kernel choice freezes
DEFAULT_MAX_EXECUTIONS = 20
#: below this many points, thin plate splines are used unconditionally
MIN_POINTS = 10

_FALLBACK = rbf.RbfKind("thin_plate_spline")


class NotEnoughPointsError(RuntimeError):
    pass


@dataclass
class ModelSelState:
    max_executions: int = DEFAULT_MAX_EXECUTIONS
    executions: int = 0
    win_counts_local: dict = field(default_factory=dict)
    win_counts_global: dict = field(default_factory=dict)
    frozen: bool = False
    current_local: rbf.RbfKind = _FALLBACK
    current_global: rbf.RbfKind = _FALLBACK
    history: list = field(default_factory=list)


def _fold_prediction(mat, values, j):
    """Refit the system without node ``j`` (0-based) and predict its
    value; the assembled full matrix is shared across folds, each refit
    solves its own subsystem.  Returns None for an unsolvable fold."""
    k = values.size
    p = mat.shape[0] - k
    keep = np.concatenate([np.arange(k) != j, np.ones(p, dtype=bool)])
    sub = mat[np.ix_(keep, keep)]
    rhs = np.concatenate([values[np.arange(k) != j], np.zeros(p)])
    fscale = max(1.0, np.abs(rhs).max())
    sol, direct = rbf.solve_square(sub, rhs)
    resid = np.abs(sub @ sol - rhs).max()
    if direct and resid > rbf.DIRECT_RTOL * fscale:
        sol = lstsq(sub, rhs, lapack_driver="gelsy", check_finite=False)[0]
        resid = np.abs(sub @ sol - rhs).max()
        direct = False
    if not direct and resid > rbf.UNSOLVABLE_RTOL * fscale:
        return None
    return float(mat[j, keep] @ sol)


def loo_rank_error(kind, nodes, values_sorted, j, spec):
    """Rank displacement of fold ``j`` (1-based): refit without point j,
    predict its value, and measure how far the predicted value's
    insertion position (leftmost on ties) sits from j."""
    nodes = np.asarray(nodes, dtype=float)
    values = np.asarray(values_sorted, dtype=float)
    mat, _, _ = rbf.assemble_system(kind, nodes, values, spec)
    pred = _fold_prediction(mat, values, j - 1)
    if pred is None:
        raise UnsolvableSystemError(f"fold {j} is unsolvable")
    remaining = np.delete(values, j - 1)
    pos = bisect.bisect_left(list(remaining), pred) + 1
    return abs(pos - j)


def cv_scores(kind, nodes, values, spec):
    """Average rank displacement over the best 10% and best 70% of the
    points (sorted by value).  Unsolvable folds are skipped and excluded
    from the averages."""
    values = np.asarray(values, dtype=float)
    k = values.size
    if k < MIN_POINTS:
        raise NotEnoughPointsError(f"need at least {MIN_POINTS} points, have {k}")
    order = np.argsort(values, kind="stable")
    nodes = np.asarray(nodes, dtype=float)[order]
    values = values[order]
    mat, _, _ = rbf.assemble_system(kind, nodes, values, spec)
    n10 = k // 10
    n70 = int(0.7 * k)
    errors = []
    for j in range(1, n70 + 1):
        pred = _fold_prediction(mat, values, j - 1)
        if pred is None:
            errors.append(None)
            continue
        remaining = np.delete(values, j - 1)
        pos = bisect.bisect_left(list(remaining), pred) + 1
        errors.append(abs(pos - j))
    head = [e for e in errors[:n10] if e is not None]
    body = [e for e in errors if e is not None]
    if not head or not body:
        raise UnsolvableSystemError("all cross-validation folds failed")
    return float(np.mean(head)), float(np.mean(body))


def _candidate_kinds(gamma_overrides=None):
    overrides = gamma_overrides or {}
    return [rbf.RbfKind(name, overrides.get(name, 0.0)) for name in rbf.KERNELS]


def choose_models(state, nodes, values, spec, gamma_overrides=None):
    """Kernels for the next cycle: ``(local, global)``.

    Before enough points exist the fallback thin plate spline is used
    without touching the state.  While unfrozen, every kernel is scored
    and the tallies updated; once the execution limit is reached the
    modal winners are locked in.
    """
    if len(values) < MIN_POINTS:
        return _FALLBACK, _FALLBACK
    if state.frozen:
        return state.current_local, state.current_global

    scored = []
    for kind in _candidate_kinds(gamma_overrides):
        try:
            q10, q70 = cv_scores(kind, nodes, values, spec)
            scored.append((kind, q10, q70))
        except (UnsolvableSystemError, NotEnoughPointsError):
            continue
    if not scored:
        return state.current_local, state.current_global

    local = min(scored, key=lambda t: t[1])[0]
    global_ = min(scored, key=lambda t: t[2])[0]
    state.win_counts_local[local.name] = state.win_counts_local.get(local.name, 0) + 1
    state.win_counts_global[global_.name] = (
        state.win_counts_global.get(global_.name, 0) + 1
    )
    state.executions += 1
    state.current_local, state.current_global = local, global_
    state.history.append((state.executions, local.name, global_.name))
    if state.executions >= state.max_executions:
        state.frozen = True
        state.current_local = _modal(state.win_counts_local, gamma_overrides)
        state.current_global = _modal(state.win_counts_global, gamma_overrides)
    return state.current_local, state.current_global


def _modal(counts, gamma_overrides=None):
    overrides = gamma_overrides or {}
    best = max(rbf.KERNELS, key=lambda name: (counts.get(name, 0), -rbf.KERNELS.index(name)))
    return rbf.RbfKind(best, overrides.get(best, 0.0))
