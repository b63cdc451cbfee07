"""Acceptance suite.

Each test covers one numbered acceptance criterion at its stated
tolerance and prints one PASS line on success (pytest -s shows them).
The long end-to-end criteria replicate runs over 20 seeds and aggregate
per-evaluation medians; independent replicate runs are distributed over
a small process pool.
"""

import math
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest

from rbfglobal import (
    bench,
    design,
    engine,
    modelsel,
    parallel,
    problem,
    rbf,
    search,
    testbed,
)
from rbfglobal.engine import OptimizerConfig
from rbfglobal.exceptions import UnsolvableSystemError

SEEDS = list(range(20))
TAU = 1e-2


def _report(num, text):
    print(f"\nACCEPTANCE {num:02d}: PASS - {text}")


# ---------------------------------------------------------------------------
# replicate-run machinery
# ---------------------------------------------------------------------------

def _padded_curve(trace, budget):
    curve = trace.best_curve()
    if curve.size < budget:
        curve = np.concatenate([curve, np.full(budget - curve.size, curve[-1])])
    return curve


def _named_job(args):
    name, config, budget = args
    inst = testbed.builtin(name)
    best, value, trace = engine.run(inst.spec, config)
    return _padded_curve(trace, budget)


def _space_job(args):
    """Run a categorical instance in extended or original space with a
    shared initial design generated in extended space."""
    name, seed, space, budget = args
    inst = testbed.builtin(name)
    spec_ext = inst.spec
    n_init = design.initial_sample_count(spec_ext.ext_dim)
    rng = np.random.default_rng([seed, 0])
    pts_ext = design.initial_design(
        spec_ext, n_init, rbf.RbfKind("thin_plate_spline"), rng
    )
    initial = tuple(problem.decode(p, spec_ext) for p in pts_ext)
    config = OptimizerConfig(seed=seed, budget=budget, initial_points=initial)
    if space == "extended":
        best, value, trace = engine.run(spec_ext, config)
    else:
        nb = spec_ext.n_continuous + spec_ext.n_integer
        spec_orig = problem.ProblemSpec(
            lower=np.concatenate([spec_ext.lower, np.ones(spec_ext.n_categorical)]),
            upper=np.concatenate(
                [spec_ext.upper, np.asarray(spec_ext.cat_sizes, dtype=float)]
            ),
            n_continuous=spec_ext.n_continuous,
            n_integer=spec_ext.n_integer + spec_ext.n_categorical,
            objective=spec_ext.objective,
            name=inst.name + "__origspace",
        )
        best, value, trace = engine.run(spec_orig, config)
    return _padded_curve(trace, budget)


def _parallel_job(args):
    name, seed, budget = args
    inst = testbed.builtin(name)
    cfg = OptimizerConfig(
        seed=seed, budget=budget, simulate_latency=(3.0, 0.5, 300.0)
    )
    _, _, serial_trace = engine.run(inst.spec, cfg)
    _, _, par_trace = parallel.run_parallel(
        inst.spec, cfg, workers=4, executor="simulated"
    )
    return (
        serial_trace.records[-1].wall_clock,
        par_trace.meta["makespan"],
        par_trace.meta["stats"],
        len(par_trace),
    )


def _pool_map(fn, jobs):
    workers = min(2, multiprocessing.cpu_count())
    if workers < 2 or len(jobs) < 2:
        return [fn(j) for j in jobs]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(fn, jobs))


def _median_curves(names, config_for, seeds=SEEDS):
    """Median best-so-far curve per instance name."""
    jobs, keys = [], []
    budgets = {}
    for name in names:
        inst = testbed.builtin(name)
        budgets[name] = 50 * (inst.spec.orig_dim + 1)
        for seed in seeds:
            jobs.append((name, config_for(name, seed), budgets[name]))
            keys.append(name)
    curves = _pool_map(_named_job, jobs)
    grouped = {}
    for key, curve in zip(keys, curves):
        grouped.setdefault(key, []).append(curve)
    return {
        name: np.median(np.stack(cs), axis=0) for name, cs in grouped.items()
    }, budgets


def _solved(curve, known_best, tau=TAU):
    return bench.converged(curve[0], curve[-1], known_best, tau)


MINI_SUITE = ("branin", "camel", "hartman3", "rbrock")

_cache = {}


def _mini_medians():
    if "mini" not in _cache:
        t0 = time.perf_counter()
        medians, budgets = _median_curves(
            MINI_SUITE, lambda name, seed: OptimizerConfig(
                seed=seed, budget=50 * (testbed.builtin(name).spec.orig_dim + 1)
            ),
        )
        _cache["mini"] = (medians, budgets, time.perf_counter() - t0)
    return _cache["mini"]


# ---------------------------------------------------------------------------
# randomized instance generators (criteria 1-3, 5)
# ---------------------------------------------------------------------------

def _draw_direct_continuous(rng, kernel_index):
    """Random continuous instance whose fit solves directly; numerically
    singular draws (clustered-node gaussians) are redrawn."""
    while True:
        kind = rbf.RbfKind(rbf.KERNELS[kernel_index % 5])
        n = int(rng.integers(1, 9))
        k = int(rng.integers(5, 31))
        spec = problem.continuous_spec(None, [0.0] * n, [1.0] * n)
        nodes = rng.uniform(size=(k, n))
        values = rng.normal(size=k)
        try:
            model = rbf.fit(kind, nodes, values, spec)
        except UnsolvableSystemError:
            continue
        if model.fit_method == "direct":
            return model, values, spec


def _draw_direct_categorical(rng, kernel_names):
    while True:
        kind = rbf.RbfKind(kernel_names[int(rng.integers(len(kernel_names)))])
        n_r = int(rng.integers(1, 3))
        sizes = [int(rng.integers(3, 5)) for _ in range(int(rng.integers(1, 3)))]
        spec = problem.ProblemSpec(
            lower=np.zeros(n_r), upper=np.ones(n_r), n_continuous=n_r,
            n_integer=0,
            categories=tuple(tuple(f"v{i}" for i in range(m)) for m in sizes),
            objective=None,
        )
        k = int(rng.integers(spec.ext_dim + 2, spec.ext_dim + 12))
        nodes = problem.sample_uniform(spec, k, rng)
        d = np.linalg.norm(nodes[:, None] - nodes[None, :], axis=2)
        np.fill_diagonal(d, np.inf)
        if d.min() <= 1e-8:
            continue
        values = rng.normal(size=k)
        try:
            model = rbf.fit(kind, nodes, values, spec)
        except UnsolvableSystemError:
            continue
        if model.fit_method == "direct":
            return model, values, spec


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

def test_criterion_01_interpolation_exactness():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(100):
        model, values, spec = _draw_direct_continuous(rng, i)
        resid = np.abs(rbf.predict(model, model.nodes) - values).max()
        worst = max(worst, resid / max(1.0, np.abs(values).max()))
        assert resid <= 1e-6 * max(1.0, np.abs(values).max())
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    _report(1, f"100 direct fits, worst residual {worst:.2e}, {elapsed:.2f}s")


def test_criterion_02_permutation_invariance():
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(50):
        model, values, spec = _draw_direct_categorical(rng, rbf.KERNELS)
        perm = np.arange(spec.ext_dim)
        for start, width in spec.unary_blocks:
            perm[start:start + width] = start + rng.permutation(width)
        permuted = rbf.fit(model.kind, model.nodes[:, perm], values, spec)
        queries = problem.sample_uniform(spec, 100, rng)
        diff = np.abs(
            rbf.predict(model, queries) - rbf.predict(permuted, queries[:, perm])
        ).max()
        worst = max(worst, diff)
        assert diff <= 1e-8
    _report(2, f"50 categorical instances, worst prediction shift {worst:.2e}")


def test_criterion_03_reduced_system_equivalence():
    rng = np.random.default_rng(103)
    worst = 0.0
    for _ in range(50):
        model, values, spec = _draw_direct_categorical(
            rng, ("cubic", "thin_plate_spline")
        )
        nodes = model.nodes
        k = nodes.shape[0]
        dmat = np.linalg.norm(nodes[:, None] - nodes[None, :], axis=2)
        phi = rbf.kernel_eval(model.kind, dmat)
        p_full = np.column_stack([nodes, np.ones(k)])
        zeros = np.zeros((spec.ext_dim + 1, spec.ext_dim + 1))
        full = np.vstack(
            [np.hstack([phi, p_full]), np.hstack([p_full.T, zeros])]
        )
        sol = np.concatenate([model.lam, model.alpha])
        rhs = np.concatenate([model.fit_values, np.zeros(spec.ext_dim + 1)])
        resid = np.abs(full @ sol - rhs).max()
        worst = max(worst, resid)
        assert resid <= 1e-8
        assert all(model.alpha[c] == 0.0 for c in model.eliminated_columns)
    _report(3, f"50 zero-extended solutions, worst full-system residual {worst:.2e}")


def test_criterion_04_initial_sample_count_table():
    def rint(v):
        return int(math.floor(v + 0.5))

    for n in range(1, 101):
        serial = rint(0.5 * (n + 1)) if n <= 20 else rint(0.4 * (n + 1))
        assert design.initial_sample_count(n, 1) == serial
        if n <= 20:
            par = n + 1
        elif n <= 50:
            par = rint(0.75 * (n + 1))
        else:
            par = rint(0.5 * (n + 1))
        assert design.initial_sample_count(n, 4) == par
    _report(4, "sample-count formula matches for n in [1,100], threads {1,4}")


def test_criterion_05_bumpiness_sign():
    rng = np.random.default_rng(105)
    worst = math.inf
    for i in range(50):
        model, values, spec = _draw_direct_continuous(rng, i)
        ys = rng.uniform(size=(20, spec.ext_dim))
        mu = rbf.bumpiness_mu_batch(model, ys, spec)
        signed = (-1.0) ** (model.kind.degree + 1) * mu[~np.isnan(mu)]
        worst = min(worst, signed.min())
        assert signed.min() >= -1e-10
    _report(5, f"50 node sets x 20 queries, min signed coefficient {worst:.2e}")


def test_criterion_06_cyclic_formulas():
    for kappa in (3, 5, 10):
        s_star, f_min, f_max = -1.25, -2.0, 4.5
        state = search.CycleState(kappa=kappa, infstep_enabled=True, step=-1)
        state.f_min, state.f_max = f_min, f_max
        state.y_star = (None, s_star)
        assert search.gutmann_target(state) == -math.inf
        assert search.msrsm_weight(state) == math.inf
        for step in range(kappa):
            state.step = step
            assert search.gutmann_target(state) == s_star - (
                1 - step / kappa
            ) ** 2 * (f_max - s_star)
            assert search.msrsm_weight(state) == max(1 - (step + 1) / kappa, 0.05)
        state.step = kappa
        assert search.gutmann_target(state) == s_star
        assert search.msrsm_weight(state) == 0.0
    _report(6, "target values and distance weights match for kappa in {3,5,10}")


def test_criterion_07_cross_validation_oracle():
    import bisect

    rng = np.random.default_rng(107)

    def oracle(kind, nodes, values, j, spec):
        mask = np.arange(values.size) != j - 1
        model = rbf.fit(kind, nodes[mask], values[mask], spec)
        pred = rbf.predict(model, nodes[j - 1])
        return abs(bisect.bisect_left(sorted(values[mask]), pred) + 1 - j)

    for i in range(20):
        k = int(rng.integers(10, 31))
        n = int(rng.integers(1, 4))
        spec = problem.continuous_spec(None, [0.0] * n, [1.0] * n)
        nodes = rng.uniform(size=(k, n))
        values = np.sort(rng.normal(size=k))
        kind = rbf.RbfKind(("linear", "cubic", "multiquadric",
                            "thin_plate_spline")[i % 4])
        qs = []
        for j in range(1, int(0.7 * k) + 1):
            got = modelsel.loo_rank_error(kind, nodes, values, j, spec)
            assert got == oracle(kind, nodes, values, j, spec)
            qs.append(got)
        q10, q70 = modelsel.cv_scores(kind, nodes, values, spec)
        assert q10 == np.mean(qs[: k // 10])
        assert q70 == np.mean(qs)
    _report(7, "rank errors and averages equal the brute-force oracle")


@pytest.mark.slow
def test_criterion_08_end_to_end_quality():
    medians, budgets, elapsed = _mini_medians()
    solved = {}
    for name in MINI_SUITE:
        inst = testbed.builtin(name)
        curve = medians[name]
        solved[name] = _solved(curve, inst.known_best)
        assert solved[name], (
            f"{name}: median run closed "
            f"{(curve[0] - curve[-1]) / (curve[0] - inst.known_best):.4f} of the gap"
        )
    assert elapsed <= 900.0
    _report(
        8,
        "median of 20 seeds closes 99% of the gap on "
        + ", ".join(MINI_SUITE)
        + f" in {elapsed:.0f}s",
    )


@pytest.mark.slow
def test_criterion_09_refinement_benefit():
    mini_medians, _, _ = _mini_medians()
    extra = ("branin@s2", "camel@s2")
    on_extra, _ = _median_curves(
        extra, lambda name, seed: OptimizerConfig(
            seed=seed, budget=50 * (testbed.builtin(name).spec.orig_dim + 1)
        ),
    )
    off_medians, _ = _median_curves(
        MINI_SUITE + extra, lambda name, seed: OptimizerConfig(
            seed=seed, refine_enabled=False,
            budget=50 * (testbed.builtin(name).spec.orig_dim + 1),
        ),
    )
    on_count = off_count = 0
    for name in MINI_SUITE + extra:
        known = testbed.builtin(name).known_best
        on_curve = mini_medians[name] if name in mini_medians else on_extra[name]
        on_count += _solved(on_curve, known)
        off_count += _solved(off_medians[name], known)
    assert on_count >= off_count
    _report(
        9,
        f"refinement on solves {on_count}/6 vs {off_count}/6 without it",
    )


@pytest.mark.slow
def test_criterion_10_extended_vs_original_space():
    names = ("branin_cat", "camel_cat", "hartman3_cat", "goldsteinprice_cat")
    jobs, keys = [], []
    for name in names:
        inst = testbed.builtin(name)
        budget = 50 * (inst.spec.orig_dim + 1)
        for space in ("extended", "original"):
            for seed in SEEDS:
                jobs.append((name, seed, space, budget))
                keys.append((name, space))
    curves = _pool_map(_space_job, jobs)
    grouped = {}
    for key, curve in zip(keys, curves):
        grouped.setdefault(key, []).append(curve)
    ext_count = orig_count = 0
    detail = []
    for name in names:
        known = testbed.builtin(name).known_best
        ext_curve = np.median(np.stack(grouped[(name, "extended")]), axis=0)
        orig_curve = np.median(np.stack(grouped[(name, "original")]), axis=0)
        # shared designs make the first evaluated point identical
        assert ext_curve[0] == orig_curve[0]
        e = _solved(ext_curve, known)
        o = _solved(orig_curve, known)
        ext_count += e
        orig_count += o
        detail.append(f"{name}: ext={'Y' if e else 'n'} orig={'Y' if o else 'n'}")
    assert ext_count >= orig_count, "; ".join(detail)
    _report(
        10,
        f"extended space solves {ext_count}/4 vs {orig_count}/4 in original space",
    )


@pytest.mark.slow
def test_criterion_11_parallel_correctness():
    inst = testbed.builtin("camel")
    budget = 50 * (inst.spec.orig_dim + 1)
    results = _pool_map(
        _parallel_job, [("camel", seed, budget) for seed in SEEDS]
    )
    speedups = []
    for serial_clock, makespan, stats, n_evals in results:
        assert stats["concurrent_duplicates"] == 0
        assert stats["temps_created"] == stats["temps_resolved"]
        assert stats["max_inflight_evals"] <= 4
        assert n_evals <= budget
        assert makespan <= serial_clock
        speedups.append(serial_clock / makespan)
    mean_speedup = float(np.mean(speedups))
    assert mean_speedup >= 1.4
    _report(
        11,
        f"20 seeds: no concurrent duplicates, temp accounting clean, "
        f"mean speedup {mean_speedup:.2f} at 4 workers",
    )


def test_criterion_12_profile_machinery():
    times = np.array([
        [10.0, 20.0, 30.0],
        [40.0, 20.0, math.inf],
        [math.inf, math.inf, math.inf],
    ])
    table = bench.ProfileTable(
        problems=["p1", "p2", "p3"], dims=[1, 3, 2],
        algorithms=["a", "b", "c"], times=times, tau=TAU,
    )
    d = bench.data_profile(table)
    # hand computation with scales (n_p + 1) = [2, 4, 3]:
    # a: 10/2=5, 40/4=10; b: 20/2=10, 20/4=5; c: 30/2=15, rest unsolved
    assert bench.profile_value(*d["a"], 5.0) == pytest.approx(1 / 3)
    assert bench.profile_value(*d["a"], 4.9) == 0.0
    assert bench.profile_value(*d["a"], 10.0) == pytest.approx(2 / 3)
    assert bench.profile_value(*d["b"], 5.0) == pytest.approx(1 / 3)
    assert bench.profile_value(*d["b"], 9.9) == pytest.approx(1 / 3)
    assert bench.profile_value(*d["b"], 10.0) == pytest.approx(2 / 3)
    assert bench.profile_value(*d["c"], 15.0) == pytest.approx(1 / 3)
    assert bench.profile_value(*d["c"], 1000.0) == pytest.approx(1 / 3)
    p = bench.performance_profile(table)
    assert bench.profile_value(*p["a"], 1.0) == pytest.approx(1 / 3)
    assert bench.profile_value(*p["a"], 2.0) == pytest.approx(2 / 3)
    assert bench.profile_value(*p["b"], 1.0) == pytest.approx(1 / 3)
    assert bench.profile_value(*p["b"], 2.0) == pytest.approx(2 / 3)
    assert bench.profile_value(*p["c"], 3.0) == pytest.approx(1 / 3)
    assert bench.shifted_geomean([0.0, 3.0]) == pytest.approx(1.0)
    _report(12, "profiles match hand computation; shifted geomean([0,3]) = 1")


@pytest.mark.slow
def test_criterion_13_serial_determinism(tmp_path):
    inst = testbed.builtin("branin")
    cfg = OptimizerConfig(seed=12, budget=80)
    blobs = []
    for tag in ("a", "b"):
        best, value, trace = engine.run(inst.spec, cfg)
        path = tmp_path / f"{tag}.csv"
        trace.to_csv(path)
        blobs.append(path.read_bytes())
    assert blobs[0] == blobs[1]
    _report(13, "identical seeds produce byte-identical trace CSVs")
