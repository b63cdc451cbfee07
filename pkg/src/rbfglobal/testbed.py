"""Analytic test instances.

A registry of well-known closed-form global-optimization functions plus
three mechanical instance transformations: ``<name>_int`` restricts a
share of the coordinates to integers, ``<name>_cat`` adds categorical
variables selecting among outer transforms of the objective (the
reference choice reproduces the base function exactly), and
``<name>@s<k>`` multiplies the dimension by ``k`` by summing disjoint
copies of the function plus one copy acting on linear combinations of
all variables, preserving the optimal value.
"""

from __future__ import annotations

import math
import re
import zlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .problem import ProblemSpec


@dataclass(frozen=True)
class TestInstance:
    name: str
    spec: ProblemSpec
    known_best: Optional[float] = None
    best_point: Optional[np.ndarray] = None  # original-space witness
    base_name: str = ""
    multiplier: int = 1


# ---------------------------------------------------------------------------
# closed-form functions
# ---------------------------------------------------------------------------

def _branin(p):
    x1, x2 = p
    b = 5.1 / (4 * math.pi ** 2)
    c = 5 / math.pi
    t = 1 / (8 * math.pi)
    return (x2 - b * x1 ** 2 + c * x1 - 6) ** 2 + 10 * (1 - t) * math.cos(x1) + 10


def _camel(p):
    x1, x2 = p
    return (
        (4 - 2.1 * x1 ** 2 + x1 ** 4 / 3) * x1 ** 2
        + x1 * x2
        + (-4 + 4 * x2 ** 2) * x2 ** 2
    )


def _goldsteinprice(p):
    x, y = p
    f1 = 1 + (x + y + 1) ** 2 * (
        19 - 14 * x + 3 * x ** 2 - 14 * y + 6 * x * y + 3 * y ** 2
    )
    f2 = 30 + (2 * x - 3 * y) ** 2 * (
        18 - 32 * x + 12 * x ** 2 + 48 * y - 36 * x * y + 27 * y ** 2
    )
    return f1 * f2


_HARTMAN3_A = np.array(
    [[3, 10, 30], [0.1, 10, 35], [3, 10, 30], [0.1, 10, 35]], dtype=float
)
_HARTMAN3_P = 1e-4 * np.array(
    [[3689, 1170, 2673], [4699, 4387, 7470], [1091, 8732, 5547], [381, 5743, 8828]]
)
_HARTMAN6_A = np.array(
    [
        [10, 3, 17, 3.5, 1.7, 8],
        [0.05, 10, 17, 0.1, 8, 14],
        [3, 3.5, 1.7, 10, 17, 8],
        [17, 8, 0.05, 10, 0.1, 14],
    ]
)
_HARTMAN6_P = 1e-4 * np.array(
    [
        [1312, 1696, 5569, 124, 8283, 5886],
        [2329, 4135, 8307, 3736, 1004, 9991],
        [2348, 1451, 3522, 2883, 3047, 6650],
        [4047, 8828, 8732, 5743, 1091, 381],
    ]
)
_HARTMAN_C = np.array([1.0, 1.2, 3.0, 3.2])


def _hartman(a, pmat):
    def fn(p):
        x = np.asarray(p, dtype=float)
        inner = (a * (x - pmat) ** 2).sum(axis=1)
        return float(-(_HARTMAN_C * np.exp(-inner)).sum())

    return fn


_SHEKEL_C = np.array(
    [
        [4, 1, 8, 6, 3, 2, 5, 8, 6, 7],
        [4, 1, 8, 6, 7, 9, 3, 1, 2, 3.6],
        [4, 1, 8, 6, 3, 2, 5, 8, 6, 7],
        [4, 1, 8, 6, 7, 9, 3, 1, 2, 3.6],
    ],
    dtype=float,
)
_SHEKEL_B = np.array([1, 2, 2, 4, 4, 6, 3, 7, 5, 5]) / 10.0


def _shekel(m):
    def fn(p):
        x = np.asarray(p, dtype=float)
        denom = ((x[:, None] - _SHEKEL_C[:, :m]) ** 2).sum(axis=0) + _SHEKEL_B[:m]
        return float(-(1.0 / denom).sum())

    return fn


def _rbrock(p):
    x1, x2 = p
    return 100 * (x2 - x1 ** 2) ** 2 + (1 - x1) ** 2


def _schaffer_f7(shift):
    def fn(p):
        x = np.asarray(p, dtype=float) - shift
        s = np.sqrt(np.sqrt(x[:-1] ** 2 + x[1:] ** 2))
        term = s * (np.sin(50.0 * s ** 0.4) ** 2 + 1.0)
        return float((term.sum() / (x.size - 1)) ** 2)

    return fn


_SCHAFFER_SHIFT_2 = np.array(
    [12.5, -7.0, 3.5, -21.0, 30.0, -2.5, 17.0, -33.5, 8.0, 26.5, -15.0, 5.5]
)

_BASES = {
    "branin": dict(
        fn=_branin, lower=[-5, 0], upper=[10, 15],
        best=0.39788735772973816, best_at=[math.pi, 2.275],
    ),
    "camel": dict(
        fn=_camel, lower=[-3, -2], upper=[3, 2],
        best=-1.0316284534898774, best_at=[0.08984201368301331, -0.7126564032704135],
    ),
    "goldsteinprice": dict(
        fn=_goldsteinprice, lower=[-2, -2], upper=[2, 2], best=3.0, best_at=[0, -1],
    ),
    "hartman3": dict(
        fn=_hartman(_HARTMAN3_A, _HARTMAN3_P), lower=[0] * 3, upper=[1] * 3,
        best=-3.8627797869493365,
        best_at=[0.11461434, 0.55564885, 0.85254695],
    ),
    "hartman6": dict(
        fn=_hartman(_HARTMAN6_A, _HARTMAN6_P), lower=[0] * 6, upper=[1] * 6,
        best=-3.3223680114155156,
        best_at=[0.20168952, 0.15001069, 0.47687398, 0.27533243, 0.31165162, 0.65730054],
    ),
    "shekel5": dict(
        fn=_shekel(5), lower=[0] * 4, upper=[10] * 4,
        best=-10.15319967905822,
        best_at=[4.000037148797729, 4.000133272626347,
                 4.000037148797729, 4.000133272626347],
    ),
    "shekel7": dict(
        fn=_shekel(7), lower=[0] * 4, upper=[10] * 4,
        best=-10.402915336777736,
        best_at=[4.000572814501552, 3.9996062048508105,
                 4.000572814501552, 3.9996062048508105],
    ),
    "shekel10": dict(
        fn=_shekel(10), lower=[0] * 4, upper=[10] * 4,
        best=-10.53644315348352,
        best_at=[4.000746863529737, 3.9995094748960436,
                 4.000746863529737, 3.9995094748960436],
    ),
    "rbrock": dict(
        fn=_rbrock, lower=[-5, -5], upper=[10, 10], best=0.0, best_at=[1, 1],
    ),
    "schaeffer_f7_12_1": dict(
        fn=_schaffer_f7(np.zeros(12)), lower=[-50] * 12, upper=[50] * 12,
        best=0.0, best_at=[0.0] * 12,
    ),
    "schaeffer_f7_12_2": dict(
        fn=_schaffer_f7(_SCHAFFER_SHIFT_2), lower=[-50] * 12, upper=[50] * 12,
        best=0.0, best_at=list(_SCHAFFER_SHIFT_2),
    ),
}


def registry():
    """All addressable instance names (integer and categorical variants
    included; any of them also accepts an ``@s<k>`` enlargement suffix)."""
    names = []
    for name in _BASES:
        names += [name, name + "_int", name + "_cat"]
    return names


def _base_instance(name):
    entry = _BASES[name]
    lower = np.asarray(entry["lower"], dtype=float)
    spec = ProblemSpec(
        lower=lower,
        upper=np.asarray(entry["upper"], dtype=float),
        n_continuous=lower.size,
        n_integer=0,
        objective=entry["fn"],
        name=name,
    )
    return TestInstance(
        name=name,
        spec=spec,
        known_best=entry["best"],
        best_point=np.asarray(entry["best_at"], dtype=float),
        base_name=name,
    )


def _int_variant(base):
    """Restrict the leading quarter of the coordinates (at least one) to
    integers.  The integer block moves behind the remaining continuous
    coordinates to keep the canonical variable order; the objective floors
    the restricted coordinates defensively before evaluating."""
    spec = base.spec
    d = spec.orig_dim
    m = max(1, d // 4)
    fn = spec.objective

    def objective(p):
        p = np.asarray(p, dtype=float)
        q = np.concatenate([np.floor(p[d - m:]), p[:d - m]])
        return fn(q)

    new_spec = ProblemSpec(
        lower=np.concatenate([spec.lower[m:], np.ceil(spec.lower[:m])]),
        upper=np.concatenate([spec.upper[m:], np.floor(spec.upper[:m])]),
        n_continuous=d - m,
        n_integer=m,
        objective=objective,
        name=base.name + "_int",
    )
    return TestInstance(name=base.name + "_int", spec=new_spec, base_name=base.name)


#: per-choice transforms for each added categorical variable: an outer
#: affine map of the objective value plus a reflection of part of the
#: box (none / every coordinate / the first coordinate), so different
#: choices both rescale the function and move its landscape.  The first
#: choice is the identity and reproduces the base function.
_CAT_TRANSFORMS = (
    (1.0, 0.0, "none"),
    (1.25, 0.75, "all"),
    (0.8, -0.45, "first"),
)


def _reflect_mask(spec, which):
    nb = spec.n_continuous + spec.n_integer
    mask = np.zeros(nb, dtype=bool)
    if which == "all":
        mask[:] = True
    elif which == "first" and nb:
        mask[0] = True
    return mask


def make_categorical_variant(base, n_cats=1):
    """Add ``n_cats`` categorical variables (three values each) that
    modify the function: every choice applies an affine map to the
    objective value and reflects part of the box, so category landscapes
    differ in both value and optimum location.  Choosing the first value
    everywhere reproduces the base function exactly, which keeps the
    variant's optimum computable whenever the base optimum is known."""
    spec = base.spec
    fn = spec.objective
    base_dim = spec.orig_dim
    nb = spec.n_continuous + spec.n_integer
    masks = [_reflect_mask(spec, which) for _, _, which in _CAT_TRANSFORMS]
    mid = spec.lower + spec.upper

    def objective(p):
        p = np.asarray(p, dtype=float)
        q = p[:base_dim].copy()
        flip = np.zeros(nb, dtype=bool)
        for h in range(n_cats):
            flip ^= masks[int(p[base_dim + h]) - 1]
        q[:nb] = np.where(flip, mid - q[:nb], q[:nb])
        val = fn(q)
        for h in range(n_cats):
            a, b, _ = _CAT_TRANSFORMS[int(p[base_dim + h]) - 1]
            val = a * val + b
        return val

    new_spec = ProblemSpec(
        lower=spec.lower,
        upper=spec.upper,
        n_continuous=spec.n_continuous,
        n_integer=spec.n_integer,
        categories=spec.categories
        + tuple(("g1", "g2", "g3") for _ in range(n_cats)),
        objective=objective,
        name=base.name + "_cat",
    )
    known_best = None
    best_point = None
    if base.known_best is not None and base.best_point is not None:
        best_combo, best_val = None, math.inf
        for combo in np.ndindex(*(len(_CAT_TRANSFORMS),) * n_cats):
            val = base.known_best
            for c in combo:
                a, b, _ = _CAT_TRANSFORMS[c]
                val = a * val + b
            if val < best_val:
                best_val, best_combo = val, combo
        known_best = best_val
        # the reflections are involutions, so the witness point is the
        # base optimum with the winning combo's combined reflection applied
        flip = np.zeros(nb, dtype=bool)
        for c in best_combo:
            flip ^= masks[c]
        witness = np.asarray(base.best_point, dtype=float).copy()
        witness[:nb] = np.where(flip, mid - witness[:nb], witness[:nb])
        best_point = np.concatenate([witness, [c + 1 for c in best_combo]])
    return TestInstance(
        name=base.name + "_cat",
        spec=new_spec,
        known_best=known_best,
        best_point=best_point,
        base_name=base.name,
    )


def _coord_domain(spec, j):
    """Bounds of original-space coordinate j (categoricals span their
    1-based index range)."""
    nb = spec.n_continuous + spec.n_integer
    if j < nb:
        return float(spec.lower[j]), float(spec.upper[j])
    return 1.0, float(spec.cat_sizes[j - nb])


def _pinned_affine(t_w, t_min, t_max, target, lo, hi):
    """Affine map sending t_w to target while keeping the image of
    [t_min, t_max] inside [lo, hi]; of the two slope orientations the
    steeper feasible one is used."""

    def limit(num, den):
        return math.inf if den <= 1e-12 else num / den

    k_pos = min(limit(target - lo, t_w - t_min), limit(hi - target, t_max - t_w))
    k_neg = min(limit(hi - target, t_w - t_min), limit(target - lo, t_max - t_w))
    candidates = []
    if math.isfinite(k_pos):
        candidates.append(k_pos)
    if math.isfinite(k_neg):
        candidates.append(-k_neg)
    slope = 0.0
    if candidates:
        slope = max(candidates, key=abs)
    return slope, target - slope * t_w


def enlarge(base, s, rng):
    """Multiply the instance dimension by ``s``.

    The enlarged objective is a convex combination of ``s`` copies of the
    base function on disjoint variable blocks plus one copy applied to
    affine images of linear combinations of all variables.  The affine
    maps are pinned so that the block-optimum witness evaluates exactly to
    the base optimum, which the generator verifies before returning.
    """
    if s < 2:
        raise ValueError("multiplier must be at least 2")
    if base.best_point is None or base.known_best is None:
        raise ValueError(f"cannot enlarge {base.name}: no known optimum")
    spec = base.spec
    n = spec.orig_dim
    nb = spec.n_continuous + spec.n_integer
    fn = spec.objective

    weights = rng.uniform(0.1, 1.0, size=s + 1)
    weights /= weights.sum()

    # Flat layout: coordinate i*n + j is base coordinate j of copy i.  The
    # enlarged spec permutes variables within each type class (the
    # canonical order keeps continuous, integer and categorical blocks
    # contiguous).
    flat_cont = np.array(
        [i * n + j for j in range(spec.n_continuous) for i in range(s)]
    )
    flat_int = np.array(
        [i * n + spec.n_continuous + j for j in range(spec.n_integer) for i in range(s)]
    )
    flat_cat = np.array([i * n + nb + j for j in range(spec.n_categorical) for i in range(s)])
    perm_map = np.concatenate([
        rng.permutation(flat_cont) if flat_cont.size else flat_cont,
        rng.permutation(flat_int) if flat_int.size else flat_int,
        rng.permutation(flat_cat) if flat_cat.size else flat_cat,
    ]).astype(int)

    groups = rng.permutation(s * n).reshape(n, s)
    a_coef = rng.uniform(0.5, 1.5, size=(n, s))

    flat_witness = np.tile(np.asarray(base.best_point, dtype=float), s)
    flat_lo = np.array([_coord_domain(spec, g % n)[0] for g in range(s * n)])
    flat_hi = np.array([_coord_domain(spec, g % n)[1] for g in range(s * n)])

    lines = []
    for j in range(n):
        lo, hi = _coord_domain(spec, j)
        t_w = float(a_coef[j] @ flat_witness[groups[j]])
        t_min = float(a_coef[j] @ flat_lo[groups[j]])
        t_max = float(a_coef[j] @ flat_hi[groups[j]])
        lines.append(
            _pinned_affine(t_w, t_min, t_max, float(base.best_point[j]), lo, hi)
        )

    def combo_point(flat):
        out = np.empty(n)
        for j in range(n):
            slope, icept = lines[j]
            v = slope * float(a_coef[j] @ flat[groups[j]]) + icept
            if j >= spec.n_continuous:
                v = round(v)
            lo, hi = _coord_domain(spec, j)
            out[j] = min(max(v, lo), hi)
        return out

    def objective(p):
        flat = np.empty(s * n)
        flat[perm_map] = np.asarray(p, dtype=float)
        val = 0.0
        for i in range(s):
            val += weights[i] * fn(flat[i * n:(i + 1) * n])
        return val + weights[s] * fn(combo_point(flat))

    new_spec = ProblemSpec(
        lower=flat_lo[perm_map[: s * nb]],
        upper=flat_hi[perm_map[: s * nb]],
        n_continuous=s * spec.n_continuous,
        n_integer=s * spec.n_integer,
        categories=tuple(
            spec.categories[(g % n) - nb] for g in perm_map[s * nb:]
        ),
        objective=objective,
        name=f"{base.name}@s{s}",
    )
    witness = flat_witness[perm_map]
    inst = TestInstance(
        name=f"{base.name}@s{s}",
        spec=new_spec,
        known_best=base.known_best,
        best_point=witness,
        base_name=base.name,
        multiplier=s,
    )
    got = new_spec.objective(witness)
    if abs(got - base.known_best) > 1e-6:
        raise RuntimeError(
            f"enlargement witness check failed: {got} vs {base.known_best}"
        )
    return inst


def builtin(name):
    """Look up an instance by name.  Understands the ``_int`` and ``_cat``
    suffixes and the ``@s<k>`` enlargement suffix (deterministic per
    name)."""
    match = re.fullmatch(r"(?P<stem>[a-z0-9_]+?)(?:@s(?P<s>\d+))?", name)
    if not match:
        raise KeyError(f"unknown instance {name!r}")
    stem = match.group("stem")
    inner = stem
    cat = inner.endswith("_cat")
    if cat:
        inner = inner[:-4]
    if inner not in _BASES and inner.removesuffix("_int") not in _BASES:
        raise KeyError(f"unknown instance {name!r}")
    if inner.endswith("_int"):
        inst = _int_variant(_base_instance(inner.removesuffix("_int")))
    else:
        inst = _base_instance(inner)
    if cat:
        inst = make_categorical_variant(inst)
    if match.group("s"):
        s = int(match.group("s"))
        rng = np.random.default_rng(zlib.crc32(name.encode()))
        inst = enlarge(inst, s, rng)
    return inst
