"""Hot numeric inner loops, with optional numba acceleration.

Every kernel has a pure-numpy implementation and a numba ``@njit``
version compiled lazily on first use.  The backend is chosen once at
import time: numba is used when it is importable, unless the
environment variable ``RBFGLOBAL_NUMBA`` is set to ``0``/``false``/``off``.
``benchmarks/bench_kernels.py`` compares the two paths.
"""

from __future__ import annotations

import math
import os

import numpy as np

# Kernel codes shared with the numba kernels (keep in sync with rbf.KERNELS).
LINEAR, CUBIC, MULTIQUADRIC, THIN_PLATE_SPLINE, GAUSSIAN = range(5)

_TINY_LOG = 1e-300


def _want_numba() -> bool:
    flag = os.environ.get("RBFGLOBAL_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


# ---------------------------------------------------------------------------
# pure numpy implementations
# ---------------------------------------------------------------------------

def _np_pairwise_dist(a, b):
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _np_min_dist(x, nodes):
    return _np_pairwise_dist(x, nodes).min(axis=1)


def _np_phi(code, gamma, r):
    if code == LINEAR:
        return r.copy()
    if code == CUBIC:
        return r * r * r
    if code == MULTIQUADRIC:
        return np.sqrt(r * r + gamma * gamma)
    if code == THIN_PLATE_SPLINE:
        # r^2 log r, with the limit value 0 at r = 0.
        return r * r * np.log(np.maximum(r, _TINY_LOG)) * (r > 0)
    if code == GAUSSIAN:
        return np.exp(-gamma * r * r)
    raise ValueError(f"unknown kernel code {code}")


def _np_predict(x, nodes, lam, alpha_lin, alpha_const, code, gamma):
    phi = _np_phi(code, gamma, _np_pairwise_dist(x, nodes))
    return phi @ lam + x @ alpha_lin + alpha_const


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

def _build_numba():
    from numba import njit

    @njit(cache=True)
    def nb_pairwise_dist(a, b):
        na, dim = a.shape
        nb = b.shape[0]
        out = np.empty((na, nb))
        for i in range(na):
            for j in range(nb):
                acc = 0.0
                for d in range(dim):
                    diff = a[i, d] - b[j, d]
                    acc += diff * diff
                out[i, j] = math.sqrt(acc)
        return out

    @njit(cache=True)
    def nb_min_dist(x, nodes):
        m, dim = x.shape
        k = nodes.shape[0]
        out = np.empty(m)
        for i in range(m):
            best = np.inf
            for j in range(k):
                acc = 0.0
                for d in range(dim):
                    diff = x[i, d] - nodes[j, d]
                    acc += diff * diff
                if acc < best:
                    best = acc
            out[i] = math.sqrt(best)
        return out

    @njit(cache=True)
    def nb_phi(code, gamma, r):
        out = np.empty_like(r)
        flat_r = r.ravel()
        flat_o = out.ravel()
        for i in range(flat_r.size):
            v = flat_r[i]
            if code == 0:
                flat_o[i] = v
            elif code == 1:
                flat_o[i] = v * v * v
            elif code == 2:
                flat_o[i] = math.sqrt(v * v + gamma * gamma)
            elif code == 3:
                flat_o[i] = v * v * math.log(v) if v > 0.0 else 0.0
            else:
                flat_o[i] = math.exp(-gamma * v * v)
        return out

    @njit(cache=True)
    def nb_predict(x, nodes, lam, alpha_lin, alpha_const, code, gamma):
        m, dim = x.shape
        k = nodes.shape[0]
        out = np.empty(m)
        for i in range(m):
            acc = alpha_const
            for d in range(dim):
                acc += x[i, d] * alpha_lin[d]
            for j in range(k):
                sq = 0.0
                for d in range(dim):
                    diff = x[i, d] - nodes[j, d]
                    sq += diff * diff
                v = math.sqrt(sq)
                if code == 0:
                    p = v
                elif code == 1:
                    p = v * v * v
                elif code == 2:
                    p = math.sqrt(v * v + gamma * gamma)
                elif code == 3:
                    p = v * v * math.log(v) if v > 0.0 else 0.0
                else:
                    p = math.exp(-gamma * v * v)
                acc += lam[j] * p
            out[i] = acc
        return out

    return nb_pairwise_dist, nb_min_dist, nb_phi, nb_predict


USING_NUMBA = False
if _want_numba():
    try:
        pairwise_dist, min_dist, phi, predict = _build_numba()
        USING_NUMBA = True
    except ImportError:
        pass
if not USING_NUMBA:
    pairwise_dist = _np_pairwise_dist
    min_dist = _np_min_dist
    phi = _np_phi
    predict = _np_predict

numpy_backend = {
    "pairwise_dist": _np_pairwise_dist,
    "min_dist": _np_min_dist,
    "phi": _np_phi,
    "predict": _np_predict,
}


def warmup():
    """Trigger JIT compilation on tiny inputs so later calls are not charged
    the compile time.  A no-op on the numpy backend."""
    a = np.zeros((2, 2))
    b = np.ones((3, 2))
    pairwise_dist(a, b)
    min_dist(a, b)
    for code in range(5):
        phi(code, 1.0, np.array([[0.0, 1.0]]))
    predict(a, b, np.zeros(3), np.zeros(2), 0.0, CUBIC, 1.0)
