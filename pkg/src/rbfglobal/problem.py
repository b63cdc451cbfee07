"""Mixed-variable problem model and the maps between original and
extended space.

A problem has ``n_continuous`` real variables, ``n_integer`` integer
variables (both box-bounded) and a list of categorical value sets.  In
the *original space* a point is a vector of length
``n_continuous + n_integer + n_categorical`` whose categorical entries
are 1-based indices into the value sets.  In the *extended space* each
categorical variable with three or more values becomes a unary (one-hot)
block of 0/1 slots summing to one; a two-valued categorical collapses to
a single 0/1 slot.
"""

from __future__ import annotations

import json
import shlex
import subprocess
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exceptions import InvalidPointError

COINCIDENCE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Variable counts, bounds, categorical value sets and the objective
    oracle.  Immutable; safe to share between threads."""

    lower: np.ndarray
    upper: np.ndarray
    n_continuous: int
    n_integer: int
    categories: tuple = ()
    objective: Callable = None
    objective_thread_safe: bool = True
    name: str = ""

    # derived layout, filled in by __post_init__
    cat_sizes: tuple = field(init=False, default=())
    as_binary: tuple = field(init=False, default=())
    ext_dim: int = field(init=False, default=0)
    orig_dim: int = field(init=False, default=0)
    ext_lower: np.ndarray = field(init=False, default=None)
    ext_upper: np.ndarray = field(init=False, default=None)
    unary_blocks: tuple = field(init=False, default=())
    cat_slots: tuple = field(init=False, default=())

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        nb = self.n_continuous + self.n_integer
        if lower.shape != (nb,) or upper.shape != (nb,):
            raise ValueError(f"bound vectors must have length {nb}")
        if not (np.isfinite(lower).all() and np.isfinite(upper).all()):
            raise ValueError("bounds must be finite")
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        ints = slice(self.n_continuous, nb)
        if np.any(lower[ints] != np.round(lower[ints])) or np.any(
            upper[ints] != np.round(upper[ints])
        ):
            raise ValueError("integer variable bounds must be integral")
        cats = tuple(tuple(s) for s in self.categories)
        sizes = tuple(len(s) for s in cats)
        if any(m < 2 for m in sizes):
            raise ValueError("categorical sets need at least two values")

        # Extended-space layout: continuous block, integer block, then one
        # slot per two-valued categorical or one unary block otherwise.
        as_binary = tuple(m == 2 for m in sizes)
        blocks = []
        slots = []
        pos = nb
        for m, binary in zip(sizes, as_binary):
            if binary:
                slots.append((pos, 1))
                pos += 1
            else:
                slots.append((pos, m))
                blocks.append((pos, m))
                pos += m
        ext_lower = np.concatenate([lower, np.zeros(pos - nb)])
        ext_upper = np.concatenate([upper, np.ones(pos - nb)])

        set_ = object.__setattr__
        set_(self, "lower", lower)
        set_(self, "upper", upper)
        set_(self, "categories", cats)
        set_(self, "cat_sizes", sizes)
        set_(self, "as_binary", as_binary)
        set_(self, "ext_dim", pos)
        set_(self, "orig_dim", nb + len(cats))
        set_(self, "ext_lower", ext_lower)
        set_(self, "ext_upper", ext_upper)
        set_(self, "unary_blocks", tuple(blocks))
        set_(self, "cat_slots", tuple(slots))

    @property
    def n_categorical(self):
        return len(self.categories)

    @property
    def ext_span(self):
        return np.maximum(self.ext_upper - self.ext_lower, 1e-30)

    def scale(self, x):
        """Map extended-space coordinates onto the unit box.  Unary and
        binary slots already live in [0, 1] and are left unchanged."""
        return (np.asarray(x, dtype=float) - self.ext_lower) / self.ext_span

    def unscale(self, z, snap_discrete=True):
        """Inverse of :meth:`scale`.  Discrete coordinates are snapped back
        onto their native grid to remove floating-point fuzz."""
        x = self.ext_lower + np.asarray(z, dtype=float) * self.ext_span
        if snap_discrete and self.ext_dim > self.n_continuous:
            disc = np.s_[..., self.n_continuous:]
            x[disc] = np.round(x[disc])
        return x

    def categorical_value(self, h, index):
        """Label of the ``index``-th (1-based) value of categorical ``h``."""
        return self.categories[h][int(index) - 1]


def _check_original(p, spec):
    p = np.asarray(p, dtype=float)
    if p.shape != (spec.orig_dim,):
        raise InvalidPointError(
            f"expected original-space point of length {spec.orig_dim}"
        )
    nb = spec.n_continuous + spec.n_integer
    if np.any(p[:nb] < spec.lower - 1e-12) or np.any(p[:nb] > spec.upper + 1e-12):
        raise InvalidPointError("point outside the variable bounds")
    ints = p[spec.n_continuous:nb]
    if np.any(ints != np.round(ints)):
        raise InvalidPointError("integer variable has a fractional value")
    for h, m in enumerate(spec.cat_sizes):
        v = p[nb + h]
        if v != round(v) or not 1 <= v <= m:
            raise InvalidPointError(
                f"categorical {h} must be an index in [1, {m}], got {v}"
            )
    return p


def encode(p, spec):
    """Map an original-space point to extended space (unary encoding)."""
    p = _check_original(p, spec)
    nb = spec.n_continuous + spec.n_integer
    x = np.zeros(spec.ext_dim)
    x[:nb] = p[:nb]
    for h, (start, width) in enumerate(spec.cat_slots):
        v = int(p[nb + h])
        if spec.as_binary[h]:
            x[start] = v - 1
        else:
            x[start + v - 1] = 1.0
    return x


def decode(x, spec):
    """Map an extended-space point back to original space.

    Raises :class:`InvalidPointError` when a unary block does not contain
    exactly one entry equal to 1.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.ext_dim,):
        raise InvalidPointError(f"expected extended point of length {spec.ext_dim}")
    nb = spec.n_continuous + spec.n_integer
    p = np.zeros(spec.orig_dim)
    p[:nb] = x[:nb]
    for h, (start, width) in enumerate(spec.cat_slots):
        block = x[start:start + width]
        if np.any(np.abs(block - np.round(block)) > 1e-9):
            raise InvalidPointError(f"unary block {h} has non-binary entries")
        block = np.round(block)
        if spec.as_binary[h]:
            p[nb + h] = block[0] + 1
        else:
            if block.sum() != 1:
                raise InvalidPointError(f"unary block {h} does not sum to 1")
            p[nb + h] = int(np.argmax(block)) + 1
    return p


def sample_original(spec, count, rng):
    """Uniform sample over the original-space box, one row per point."""
    nb = spec.n_continuous + spec.n_integer
    out = np.empty((count, spec.orig_dim))
    if count == 0:
        return out
    nc = spec.n_continuous
    out[:, :nc] = rng.uniform(spec.lower[:nc], spec.upper[:nc], size=(count, nc))
    for j in range(spec.n_integer):
        lo, hi = spec.lower[nc + j], spec.upper[nc + j]
        out[:, nc + j] = rng.integers(int(lo), int(hi) + 1, size=count)
    for h, m in enumerate(spec.cat_sizes):
        out[:, nb + h] = rng.integers(1, m + 1, size=count)
    return out


def encode_batch(pts, spec):
    """Vectorized :func:`encode` for a matrix of valid original-space
    points (one per row); no per-point validation."""
    pts = np.asarray(pts, dtype=float)
    count = pts.shape[0]
    nb = spec.n_continuous + spec.n_integer
    out = np.zeros((count, spec.ext_dim))
    out[:, :nb] = pts[:, :nb]
    for h, (start, width) in enumerate(spec.cat_slots):
        idx = np.round(pts[:, nb + h]).astype(int) - 1
        if width == 1:
            out[:, start] = idx
        else:
            out[np.arange(count), start + idx] = 1.0
    return out


def sample_uniform(spec, count, rng):
    """Uniform sample in the original-space box, returned encoded.

    Sampling happens in the original space, where uniformity over the
    finite categorical ranges is straightforward, and the points are then
    mapped to the extended space.
    """
    return encode_batch(sample_original(spec, count, rng), spec)


def distance(a, b):
    """Euclidean distance between two extended-space points."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch")
    return float(np.linalg.norm(a - b))


# ---------------------------------------------------------------------------
# problem definition files
# ---------------------------------------------------------------------------

def _command_objective(command, spec):
    argv = shlex.split(command)

    def run(p):
        nb = spec.n_continuous + spec.n_integer
        parts = [repr(float(v)) for v in p[:spec.n_continuous]]
        parts += [str(int(round(v))) for v in p[spec.n_continuous:nb]]
        parts += [str(int(round(v))) for v in p[nb:]]
        proc = subprocess.run(
            argv, input=" ".join(parts) + "\n", capture_output=True, text=True
        )
        if proc.returncode != 0:
            raise RuntimeError(
                f"objective command failed with status {proc.returncode}"
            )
        return float(proc.stdout.split()[0])

    return run


def load_problem(path):
    """Read a problem definition file (JSON).

    Schema::

        {
          "continuous":  [{"lower": 0.0, "upper": 1.0}, ...],
          "integer":     [{"lower": 0, "upper": 10}, ...],
          "categorical": [["red", "green", "blue"], ...],
          "objective":   "<builtin instance name or external command>"
        }

    A builtin name resolves against the test-function registry; anything
    else is treated as an external command that receives the original-space
    point whitespace-separated on stdin and prints one real number.
    """
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError("problem file must contain a JSON object")

    def bound_list(key):
        entries = raw.get(key, [])
        if not isinstance(entries, list):
            raise ValueError(f"field '{key}' must be a list")
        lows, highs = [], []
        for i, e in enumerate(entries):
            try:
                lows.append(float(e["lower"]))
                highs.append(float(e["upper"]))
            except (TypeError, KeyError) as exc:
                raise ValueError(f"field '{key}[{i}]' needs lower/upper") from exc
        return lows, highs

    clo, chi = bound_list("continuous")
    ilo, ihi = bound_list("integer")
    cats = raw.get("categorical", [])
    if not isinstance(cats, list) or any(not isinstance(c, list) for c in cats):
        raise ValueError("field 'categorical' must be a list of value lists")
    objective = raw.get("objective")
    if not isinstance(objective, str) or not objective:
        raise ValueError("field 'objective' must be a non-empty string")

    spec = ProblemSpec(
        lower=np.array(clo + ilo, dtype=float),
        upper=np.array(chi + ihi, dtype=float),
        n_continuous=len(clo),
        n_integer=len(ilo),
        categories=tuple(tuple(c) for c in cats),
        name=raw.get("name", objective),
    )

    from . import testbed

    if objective in testbed.registry():
        fn = testbed.builtin(objective).spec.objective
    else:
        fn = _command_objective(objective, spec)
    object.__setattr__(spec, "objective", fn)
    return spec


def continuous_spec(objective, lower, upper, name=""):
    """Convenience constructor for a purely continuous problem."""
    lower = np.asarray(lower, dtype=float)
    return ProblemSpec(
        lower=lower,
        upper=np.asarray(upper, dtype=float),
        n_continuous=lower.size,
        n_integer=0,
        objective=objective,
        name=name,
    )
