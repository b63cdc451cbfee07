"""Radial-basis-function surrogate models.

Builds and solves the interpolation system for the five supported kernel
families, including the reduced system used when unary categorical
blocks make the degree-1 polynomial tail rank deficient, a least-squares
fallback for systems that are singular or under-determined, and the
bumpiness coefficient used by the target-value search strategy.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgWarning, lapack, lstsq, lu_factor, lu_solve

from . import _kernels
from .exceptions import DuplicateNodeError, UnsolvableSystemError

#: kernel names in canonical table order
KERNELS = ("linear", "cubic", "multiquadric", "thin_plate_spline", "gaussian")

_DEGREE = {
    "linear": 0,
    "cubic": 1,
    "multiquadric": 0,
    "thin_plate_spline": 1,
    "gaussian": -1,
}
_DEFAULT_GAMMA = {"multiquadric": 0.1, "gaussian": 1.0}

#: condition-estimate threshold beyond which the direct solve is abandoned
COND_LIMIT = 1e12
#: relative residual limit past which the system counts as unsolvable
UNSOLVABLE_RTOL = 1e-3
#: relative residual expected of a direct solve
DIRECT_RTOL = 1e-6
#: nodes closer than this (in scaled coordinates) count as duplicates
NODE_TOL = 1e-10


@dataclass(frozen=True)
class RbfKind:
    """A kernel family plus its shape parameter (used by multiquadric and
    gaussian only; ignored by the other kernels)."""

    name: str
    gamma: float = 0.0

    def __post_init__(self):
        if self.name not in KERNELS:
            raise ValueError(f"unknown RBF kind {self.name!r}")
        if self.gamma == 0.0:
            object.__setattr__(self, "gamma", _DEFAULT_GAMMA.get(self.name, 1.0))
        elif self.gamma <= 0:
            raise ValueError("gamma must be positive")

    @property
    def degree(self):
        return _DEGREE[self.name]

    @property
    def code(self):
        return KERNELS.index(self.name)

    @property
    def phi_at_zero(self):
        if self.name == "multiquadric":
            return self.gamma
        return 1.0 if self.name == "gaussian" else 0.0


def kernel_eval(kind, r):
    """Evaluate the radial function phi(r) for scalar or array ``r``."""
    arr = np.asarray(r, dtype=float)
    if np.any(arr < 0):
        raise ValueError("r must be nonnegative")
    out = _kernels.phi(kind.code, kind.gamma, np.atleast_1d(arr))
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def eliminated_tail_columns(spec, kind):
    """Extended-space coordinate indices dropped from the degree-1 tail:
    the last slot of each unary block (binary-flagged blocks keep theirs)."""
    if kind.degree != 1:
        return ()
    return tuple(start + width - 1 for start, width in spec.unary_blocks)


def _tail_matrix(points, spec, kind):
    """Rows of the (reduced) polynomial tail for the given points."""
    k = points.shape[0]
    d = kind.degree
    if d == -1:
        return np.empty((k, 0)), ()
    if d == 0:
        return np.ones((k, 1)), ()
    dropped = eliminated_tail_columns(spec, kind)
    keep = [j for j in range(spec.ext_dim) if j not in dropped]
    return np.column_stack([points[:, keep], np.ones(k)]), dropped


def assemble_system(kind, nodes, values, spec):
    """Assemble the (reduced) interpolation system.

    Returns ``(matrix, rhs, eliminated_columns)`` where the matrix is the
    symmetric block system ``[[Phi, P], [P^T, 0]]`` with the tail columns
    for the last slot of each unary block removed when the kernel carries
    a degree-1 tail.
    """
    nodes = np.asarray(nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    k = nodes.shape[0]
    dmat = _kernels.pairwise_dist(nodes, nodes)
    if k > 1:
        off = dmat.copy()
        np.fill_diagonal(off, np.inf)
        if off.min() <= NODE_TOL:
            raise DuplicateNodeError("interpolation nodes are not pairwise distinct")
    phi = _kernels.phi(kind.code, kind.gamma, dmat)
    tail, dropped = _tail_matrix(nodes, spec, kind)
    p = tail.shape[1]
    mat = np.zeros((k + p, k + p))
    mat[:k, :k] = phi
    mat[:k, k:] = tail
    mat[k:, :k] = tail.T
    rhs = np.concatenate([values, np.zeros(p)])
    return mat, rhs, dropped


def _lu_factor_quiet(mat):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        return lu_factor(mat, check_finite=False)


def solve_square(mat, rhs):
    """Solve a square system directly when its estimated condition number
    is acceptable; otherwise return the minimum-norm least-squares
    solution.  Returns ``(solution, used_direct)``."""
    lu_piv = None
    try:
        lu_piv = _lu_factor_quiet(mat)
    except (ValueError, np.linalg.LinAlgError):
        pass
    if lu_piv is not None and np.isfinite(lu_piv[0]).all():
        anorm = np.linalg.norm(mat, 1)
        rcond, info = lapack.dgecon(lu_piv[0], anorm, norm="1")
        if info == 0 and rcond > 1.0 / COND_LIMIT:
            return lu_solve(lu_piv, rhs, check_finite=False), True
    sol = lstsq(mat, rhs, lapack_driver="gelsy", check_finite=False)[0]
    return sol, False


@dataclass(frozen=True, eq=False)
class Interpolant:
    """One fitted surrogate model over scaled extended-space nodes."""

    kind: RbfKind
    nodes: np.ndarray
    values: np.ndarray
    fit_values: np.ndarray
    lam: np.ndarray
    alpha_lin: np.ndarray
    alpha_const: float
    fit_method: str
    eliminated_columns: tuple
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def k(self):
        return self.nodes.shape[0]

    @property
    def dim(self):
        return self.nodes.shape[1]

    @property
    def alpha(self):
        """Tail coefficients in system order: length n+1 for degree 1
        (zeros at the eliminated columns), length 1 for degree 0, empty
        for degree -1."""
        d = self.kind.degree
        if d == 1:
            return np.concatenate([self.alpha_lin, [self.alpha_const]])
        if d == 0:
            return np.array([self.alpha_const])
        return np.empty(0)


def _clip_values(values):
    """Clip values above the median to the median when the spread is
    extreme; a cheap guard against wildly oscillating interpolants."""
    med = float(np.median(values))
    if values.max() / max(abs(med), 1e-10) > 1e3:
        return np.minimum(values, med)
    return values


def fit(kind, nodes, values, spec, clip_above_median=False):
    """Fit an RBF interpolant to the given nodes and values.

    Solves the (reduced) system directly when it is numerically
    nonsingular and falls back to least squares otherwise; the tail
    solution is extended by zeros at the eliminated columns.  Raises
    :class:`UnsolvableSystemError` when even the least-squares residual
    is unacceptable, which signals the caller to run restoration.
    """
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    values = np.asarray(values, dtype=float)
    if nodes.shape[0] != values.size or values.size < 1:
        raise ValueError("need one value per node")
    if not np.isfinite(values).all():
        raise ValueError("objective values must be finite")
    fit_values = _clip_values(values) if clip_above_median else values

    mat, rhs, dropped = assemble_system(kind, nodes, fit_values, spec)
    k = nodes.shape[0]
    fscale = max(1.0, np.abs(fit_values).max())
    sol, direct = solve_square(mat, rhs)
    if direct:
        resid = np.abs(mat @ sol - rhs).max()
        if resid > DIRECT_RTOL * fscale:
            sol = lstsq(mat, rhs, lapack_driver="gelsy", check_finite=False)[0]
            direct = False
    if not direct:
        resid = np.abs(mat @ sol - rhs).max()
        if resid > UNSOLVABLE_RTOL * fscale:
            raise UnsolvableSystemError(
                f"least-squares residual {resid:.3e} exceeds tolerance"
            )

    lam = sol[:k]
    alpha_lin = np.zeros(spec.ext_dim)
    alpha_const = 0.0
    if kind.degree == 1:
        keep = [j for j in range(spec.ext_dim) if j not in dropped]
        alpha_lin[keep] = sol[k:-1]
        alpha_const = float(sol[-1])
    elif kind.degree == 0:
        alpha_const = float(sol[-1])
    return Interpolant(
        kind=kind,
        nodes=nodes,
        values=values,
        fit_values=fit_values,
        lam=lam,
        alpha_lin=alpha_lin,
        alpha_const=alpha_const,
        fit_method="direct" if direct else "least_squares",
        eliminated_columns=dropped,
    )


def predict(model, x):
    """Evaluate the surrogate at one point or a batch of points."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    vals = _kernels.predict(
        np.atleast_2d(x),
        model.nodes,
        model.lam,
        model.alpha_lin,
        model.alpha_const,
        model.kind.code,
        model.kind.gamma,
    )
    return float(vals[0]) if single else vals


def _system_lu(model, spec):
    """LU factorization of the (reduced) system matrix, cached on the
    model; None when the matrix is too ill conditioned to factor."""
    if "lu" not in model._cache:
        mat, _, _ = assemble_system(model.kind, model.nodes, model.fit_values, spec)
        entry = None
        try:
            lu_piv = _lu_factor_quiet(mat)
            anorm = np.linalg.norm(mat, 1)
            rcond, info = lapack.dgecon(lu_piv[0], anorm, norm="1")
            if info == 0 and rcond > 1.0 / COND_LIMIT:
                entry = lu_piv
        except (ValueError, np.linalg.LinAlgError):
            pass
        model._cache["lu"] = entry
    return model._cache["lu"]


def system_condition_ok(kind, nodes, spec):
    """Whether the (reduced) system matrix for the given nodes is usable
    for a direct solve, judged by the same condition estimate as
    :func:`fit`."""
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    try:
        mat, _, _ = assemble_system(kind, nodes, np.zeros(nodes.shape[0]), spec)
    except DuplicateNodeError:
        return False
    try:
        lu_piv = _lu_factor_quiet(mat)
    except (ValueError, np.linalg.LinAlgError):
        return False
    anorm = np.linalg.norm(mat, 1)
    rcond, info = lapack.dgecon(lu_piv[0], anorm, norm="1")
    return bool(info == 0 and rcond > 1.0 / COND_LIMIT)


def _augmented_mu(kind, nodes, y, spec):
    """mu by explicitly solving the augmented system for nodes + [y]."""
    pts = np.vstack([nodes, y])
    k = pts.shape[0]
    unit = np.zeros(k)
    unit[-1] = 1.0
    mat, rhs, _ = assemble_system(kind, pts, unit, spec)
    sol, _ = solve_square(mat, rhs)
    return float(sol[k - 1])


def bumpiness_mu(model_nodes, kind, y, spec):
    """Coefficient at ``y`` of the interpolant through the nodes with
    values (0, ..., 0, 1); returns None when ``y`` coincides with a node
    (the caller scores such points as zero)."""
    nodes = np.atleast_2d(np.asarray(model_nodes, dtype=float))
    y = np.asarray(y, dtype=float)
    if _kernels.min_dist(y[None, :], nodes)[0] <= NODE_TOL:
        return None
    return _augmented_mu(kind, nodes, y, spec)


def bumpiness_mu_batch(model, ys, spec):
    """Vectorized bumpiness coefficients for a batch of query points.

    Uses the Schur complement of the fitted system when its LU
    factorization is usable (one factorization, one pair of triangular
    solves per query); falls back to per-point augmented solves
    otherwise.  Points coinciding with a node get NaN.
    """
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    at_node = _kernels.min_dist(ys, model.nodes) <= NODE_TOL
    mu = np.full(ys.shape[0], np.nan)
    free = ~at_node
    if not free.any():
        return mu
    lu_piv = _system_lu(model, spec)
    if lu_piv is not None:
        u = _kernels.phi(
            model.kind.code,
            model.kind.gamma,
            _kernels.pairwise_dist(model.nodes, ys[free]),
        )
        tail, _ = _tail_matrix(ys[free], spec, model.kind)
        w = np.vstack([u, tail.T])
        aw = lu_solve(lu_piv, w, check_finite=False)
        denom = model.kind.phi_at_zero - np.einsum("ij,ij->j", w, aw)
        with np.errstate(divide="ignore"):
            mu[free] = 1.0 / denom
    else:
        idx = np.flatnonzero(free)
        for i in idx:
            mu[i] = _augmented_mu(model.kind, model.nodes, ys[i], spec)
    return mu
