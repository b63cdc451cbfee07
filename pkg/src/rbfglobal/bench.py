"""Benchmark harness: convergence test, data and performance profiles,
median-over-seeds aggregation, and report generation.

A run *solves* an instance at tolerance tau once it closes a fraction
``1 - tau`` of the gap between the first evaluated point and the best
known value.  Every (instance, algorithm) pair is replicated over a
shared list of seeds; the per-evaluation median of the best-so-far
curves feeds the profiles.  Plots are emitted as self-contained SVG step
plots next to their raw CSV data.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import engine, testbed


def converged(f_x0, f_best_so_far, f_star, tau):
    """Whether the gap between the starting value and the target has been
    closed up to tolerance tau."""
    gap = f_x0 - f_star
    if gap <= 0:
        return True
    return f_x0 - f_best_so_far >= (1.0 - tau) * gap


@dataclass
class ProfileTable:
    problems: list
    dims: list           # variable count n_p per problem
    algorithms: list
    times: np.ndarray    # evaluations to solve, inf when failed
    tau: float


def _step_curve(xs, fracs):
    return np.asarray(xs, dtype=float), np.asarray(fracs, dtype=float)


def profile_value(xs, fracs, alpha):
    """Evaluate a right-continuous step curve at ``alpha``."""
    idx = np.searchsorted(xs, alpha, side="right") - 1
    return 0.0 if idx < 0 else float(fracs[idx])


def data_profile(table):
    """Fraction of problems solved within ``alpha * (n_p + 1)``
    evaluations, as a step curve per algorithm."""
    n_prob = len(table.problems)
    scale = np.asarray(table.dims, dtype=float) + 1.0
    out = {}
    for j, alg in enumerate(table.algorithms):
        ratios = table.times[:, j] / scale
        finite = np.sort(ratios[np.isfinite(ratios)])
        xs, fracs = [], []
        for x in finite:
            if xs and x == xs[-1]:
                continue
            xs.append(float(x))
            fracs.append(float((ratios <= x).sum()) / n_prob)
        out[alg] = _step_curve(xs, fracs)
    return out


def performance_profile(table):
    """Fraction of problems on which each algorithm is within a factor
    ``alpha`` of the best algorithm's evaluation count.  Problems solved
    by nobody are excluded from the ratios (they never enter a curve)."""
    if len(table.algorithms) < 2:
        raise ValueError("performance profiles need at least two algorithms")
    n_prob = len(table.problems)
    best = table.times.min(axis=1)
    out = {}
    for j, alg in enumerate(table.algorithms):
        with np.errstate(invalid="ignore"):
            ratios = np.where(
                np.isfinite(best), table.times[:, j] / best, math.inf
            )
        finite = np.sort(ratios[np.isfinite(ratios)])
        xs, fracs = [], []
        for x in finite:
            if xs and x == xs[-1]:
                continue
            xs.append(float(x))
            fracs.append(float((ratios <= x).sum()) / n_prob)
        out[alg] = _step_curve(xs, fracs)
    return out


def shifted_geomean(times):
    """Shifted geometric mean ``(prod (t_i + 1))**(1/k) - 1``."""
    arr = np.asarray(times, dtype=float)
    if arr.size == 0:
        raise ValueError("need at least one time")
    return float(np.expm1(np.mean(np.log1p(arr))))


# ---------------------------------------------------------------------------
# suite runner
# ---------------------------------------------------------------------------

def _run_one(instance_name, config):
    inst = testbed.builtin(instance_name)
    t0 = time.monotonic()
    best, value, trace = engine.run(inst.spec, config)
    elapsed = time.monotonic() - t0
    return trace.best_curve(), elapsed


def _pad(curve, length):
    if curve.size >= length:
        return curve[:length]
    return np.concatenate([curve, np.full(length - curve.size, curve[-1])])


def run_suite(
    instances,
    algorithms,
    seeds,
    tau_list,
    out_dir,
    budget_multiplier=50,
    workers=1,
):
    """Run every (instance, algorithm, seed) combination and build reports.

    ``instances`` is a list of registry names; ``algorithms`` maps a label
    to an :class:`~rbfglobal.engine.OptimizerConfig` (its seed and budget
    fields are overridden per run).  Returns a dict with the profile
    tables; writes trace CSVs, profile CSVs, SVG plots and a summary JSON
    under ``out_dir``.
    """
    out = Path(out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    (out / "profiles").mkdir(parents=True, exist_ok=True)
    seed_list = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    if not seed_list:
        raise ValueError("need at least one seed")
    alg_names = list(algorithms)

    jobs = []
    for name in instances:
        inst = testbed.builtin(name)
        n_p = inst.spec.orig_dim
        budget = budget_multiplier * (n_p + 1)
        for alg in alg_names:
            for seed in seed_list:
                cfg = replace(algorithms[alg], seed=seed, budget=budget)
                jobs.append((name, alg, seed, budget, cfg))

    results = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                (name, alg, seed): pool.submit(_run_one, name, cfg)
                for name, alg, seed, _, cfg in jobs
            }
            for key, fut in futures.items():
                results[key] = fut.result()
    else:
        for name, alg, seed, _, cfg in jobs:
            results[(name, alg, seed)] = _run_one(name, cfg)

    dims = {name: testbed.builtin(name).spec.orig_dim for name in instances}
    budgets = {name: budget_multiplier * (dims[name] + 1) for name in instances}
    known = {name: testbed.builtin(name).known_best for name in instances}

    medians = {}
    wall_times = {alg: [] for alg in alg_names}
    for name in instances:
        for alg in alg_names:
            curves = []
            for seed in seed_list:
                curve, elapsed = results[(name, alg, seed)]
                curves.append(_pad(curve, budgets[name]))
                wall_times[alg].append(elapsed)
            medians[(name, alg)] = np.median(np.stack(curves), axis=0)

    tables = {}
    for tau in tau_list:
        times = np.full((len(instances), len(alg_names)), math.inf)
        for i, name in enumerate(instances):
            f_star = known[name]
            if f_star is None:
                f_star = min(medians[(name, alg)][-1] for alg in alg_names)
            f_x0 = medians[(name, alg_names[0])][0]
            for j, alg in enumerate(alg_names):
                curve = medians[(name, alg)]
                for idx, value in enumerate(curve):
                    if converged(f_x0, value, f_star, tau):
                        times[i, j] = float(idx + 1)
                        break
        tables[tau] = ProfileTable(
            problems=list(instances),
            dims=[dims[n] for n in instances],
            algorithms=alg_names,
            times=times,
            tau=tau,
        )

    _write_reports(out, tables, medians, wall_times, seed_list)
    return tables


def _write_reports(out, tables, medians, wall_times, seed_list):
    for (name, alg), curve in medians.items():
        path = out / "traces" / f"{name.replace('@', '_at_')}__{alg}__median.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["evaluation", "best_median"])
            for i, v in enumerate(curve, start=1):
                writer.writerow([i, repr(float(v))])

    summary = {
        "seeds": seed_list,
        "wall_clock_sgm": {
            alg: shifted_geomean(ts) for alg, ts in wall_times.items()
        },
        "tau": {},
    }
    for tau, table in tables.items():
        d_curves = data_profile(table)
        label = f"{tau:g}"
        _write_profile_csv(out / "profiles" / f"data_tau{label}.csv", d_curves)
        _write_svg(
            out / "profiles" / f"data_tau{label}.svg",
            d_curves,
            x_label="budget / (n+1)",
        )
        if len(table.algorithms) >= 2:
            p_curves = performance_profile(table)
            _write_profile_csv(out / "profiles" / f"perf_tau{label}.csv", p_curves)
            _write_svg(
                out / "profiles" / f"perf_tau{label}.svg",
                p_curves,
                x_label="performance ratio",
            )
        _write_times_csv(out / "profiles" / f"table_tau{label}.csv", table)
        summary["tau"][label] = {
            "solved": {
                alg: int(np.isfinite(table.times[:, j]).sum())
                for j, alg in enumerate(table.algorithms)
            },
        }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)


def _write_profile_csv(path, curves):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["algorithm", "alpha", "fraction"])
        for alg, (xs, fracs) in curves.items():
            for x, f in zip(xs, fracs):
                writer.writerow([alg, repr(float(x)), repr(float(f))])


def load_profile_csv(path):
    curves = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for alg, x, f in reader:
            curves.setdefault(alg, ([], []))
            curves[alg][0].append(float(x))
            curves[alg][1].append(float(f))
    return {alg: _step_curve(xs, fs) for alg, (xs, fs) in curves.items()}


def _write_times_csv(path, table):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["problem", "n"] + list(table.algorithms))
        for i, name in enumerate(table.problems):
            row = [name, table.dims[i]]
            row += [
                "inf" if math.isinf(t) else repr(float(t))
                for t in table.times[i]
            ]
            writer.writerow(row)


_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _write_svg(path, curves, x_label="", width=640, height=420):
    """Self-contained SVG step plot (no plotting dependency)."""
    pad = 50
    x_max = max(
        (float(xs[-1]) for xs, _ in curves.values() if len(xs)), default=1.0
    )
    x_max = max(x_max, 1e-9)

    def px(x):
        return pad + (width - 2 * pad) * min(x, x_max) / x_max

    def py(y):
        return height - pad - (height - 2 * pad) * y

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height-pad}" x2="{width-pad}" '
        f'y2="{height-pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height-pad}" '
        f'stroke="black"/>',
        f'<text x="{width/2:.1f}" y="{height-12}" text-anchor="middle" '
        f'font-size="13">{x_label}</text>',
        f'<text x="14" y="{height/2:.1f}" font-size="13" '
        f'transform="rotate(-90 14 {height/2:.1f})" '
        f'text-anchor="middle">fraction solved</text>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(
            f'<text x="{pad-6}" y="{py(tick)+4:.1f}" text-anchor="end" '
            f'font-size="11">{tick:g}</text>'
        )
    for i, (alg, (xs, fracs)) in enumerate(curves.items()):
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        pts = [f"{px(0):.2f},{py(0):.2f}"]
        prev = 0.0
        for x, f in zip(xs, fracs):
            pts.append(f"{px(x):.2f},{py(prev):.2f}")
            pts.append(f"{px(x):.2f},{py(f):.2f}")
            prev = f
        pts.append(f"{px(x_max):.2f},{py(prev):.2f}")
        parts.append(
            f'<polyline points="{" ".join(pts)}" fill="none" '
            f'stroke="{color}" stroke-width="1.6"/>'
        )
        parts.append(
            f'<text x="{width-pad-4}" y="{pad+16*i+4}" text-anchor="end" '
            f'font-size="12" fill="{color}">{alg}</text>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))
