"""Serial optimization engine.

Orchestrates the meta-algorithm: initial maximin design, cyclic
iteration steps with per-cycle kernel selection, periodic refinement,
restoration of numerically unsolvable interpolation systems, and
restarts when restoration fails.  All surrogate arithmetic happens in
scaled coordinates; oracle calls receive original-space points.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels, design, modelsel, problem, rbf, refine, search
from .exceptions import DuplicateNodeError, UnsolvableSystemError
from .refine import RefineConfig
from .subsolver import GaConfig, SamplingConfig, Subsolver

PHASES = ("init", "global", "local", "infstep", "refine", "restore")


@dataclass(frozen=True)
class OptimizerConfig:
    algorithm: str = "msrsm"            # or "gutmann"
    subsolver: str = "ga"               # or "sampling"
    budget: Optional[int] = None        # default 50 * (n + 1)
    wall_clock_limit: Optional[float] = None
    seed: int = 0
    rbf: str = "auto"                   # or a fixed kernel name
    kappa: int = 5
    infstep: Optional[bool] = None      # None: on for gutmann, off for msrsm
    refine_enabled: bool = True
    refine: RefineConfig = field(default_factory=RefineConfig)
    ga: GaConfig = field(default_factory=GaConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    msrsm_variant: str = "unit_second_term"
    clip_codomain: bool = True
    shortcut_rtol: float = 1e-10
    target_margin: float = 1e-2
    model_select_max: int = modelsel.DEFAULT_MAX_EXECUTIONS
    max_restarts: int = 3
    simulate_latency: Optional[tuple] = None  # (mu, sigma, cap) of log-normal
    initial_points: Optional[tuple] = None    # original-space override

    def resolved_infstep(self):
        if self.infstep is None:
            return self.algorithm == "gutmann"
        return self.infstep


@dataclass
class TraceRecord:
    index: int
    original: np.ndarray
    extended: np.ndarray
    value: float
    best: float
    wall_clock: float
    phase: str


class EvaluationTrace:
    """Ordered record of every oracle evaluation."""

    def __init__(self):
        self.records = []
        self.meta = {}

    def append(self, original, extended, value, wall_clock, phase):
        best = value if not self.records else min(self.records[-1].best, value)
        self.records.append(
            TraceRecord(
                index=len(self.records) + 1,
                original=np.asarray(original, dtype=float),
                extended=np.asarray(extended, dtype=float),
                value=float(value),
                best=float(best),
                wall_clock=float(wall_clock),
                phase=phase,
            )
        )
        return self.records[-1]

    def __len__(self):
        return len(self.records)

    def best_record(self):
        return min(self.records, key=lambda r: (r.value, r.index))

    def best_curve(self):
        return np.array([r.best for r in self.records])

    def to_csv(self, path):
        dim = self.records[0].original.size if self.records else 0
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["index", "phase", "f", "best", "wall_clock"]
                + [f"p{i}" for i in range(dim)]
            )
            for r in self.records:
                writer.writerow(
                    [r.index, r.phase, repr(r.value), repr(r.best),
                     repr(r.wall_clock)]
                    + [repr(float(v)) for v in r.original]
                )


class _BudgetExhausted(Exception):
    pass


class _Aborted(Exception):
    pass


class _Run:
    def __init__(self, spec, config):
        self.spec = spec
        self.config = config
        n = spec.ext_dim
        self.budget = config.budget or 50 * (n + 1)
        self.rng_search = np.random.default_rng([config.seed, 1])
        self.rng_latency = np.random.default_rng([config.seed, 2])
        self.subsolver = Subsolver(config.subsolver, config.ga, config.sampling)
        self.trace = EvaluationTrace()
        self.nodes = []        # scaled points backing the surrogate
        self.values = []
        self.best_value = math.inf
        self.best_original = None
        self.clock = 0.0
        self.restarts = 0
        self.start_time = time.monotonic()
        self.fixed_kind = None if config.rbf == "auto" else rbf.RbfKind(config.rbf)
        self.selector = modelsel.ModelSelState(max_executions=config.model_select_max)

    # -- evaluation ---------------------------------------------------

    def _out_of_time(self):
        limit = self.config.wall_clock_limit
        return limit is not None and time.monotonic() - self.start_time > limit

    def evaluate(self, x_scaled, phase):
        if len(self.trace) >= self.budget:
            raise _BudgetExhausted
        original = problem.decode(self.spec.unscale(x_scaled), self.spec)
        try:
            value = float(self.spec.objective(original))
        except Exception:
            value = math.inf
        if not math.isfinite(value):
            value = math.inf
        if self.config.simulate_latency is not None:
            mu, sigma, cap = self.config.simulate_latency
            self.clock += min(float(self.rng_latency.lognormal(mu, sigma)), cap)
        self.trace.append(original, x_scaled, value, self.clock, phase)
        if math.isfinite(value):
            self.nodes.append(np.asarray(x_scaled, dtype=float))
            self.values.append(value)
            if value < self.best_value:
                self.best_value = value
                self.best_original = original
        return value

    # -- kernel choice ------------------------------------------------

    def _rank_check_kind(self):
        return self.fixed_kind or rbf.RbfKind("thin_plate_spline")

    def _cycle_kernels(self):
        if self.fixed_kind is not None:
            return self.fixed_kind, self.fixed_kind
        return modelsel.choose_models(
            self.selector, np.array(self.nodes), np.array(self.values), self.spec
        )

    # -- fitting with restoration / restart ----------------------------

    def _fit(self, kind):
        while True:
            if not self.nodes:
                self._emergency_sample()
            try:
                return rbf.fit(
                    kind,
                    np.array(self.nodes),
                    np.array(self.values),
                    self.spec,
                    clip_above_median=self.config.clip_codomain,
                )
            except (UnsolvableSystemError, DuplicateNodeError):
                if not self._restore(kind):
                    self._restart(kind)

    def _emergency_sample(self):
        # all evaluations so far failed; keep probing uniformly
        while not self.nodes:
            pts = problem.sample_uniform(self.spec, 1, self.rng_search)
            self.evaluate(self.spec.scale(pts[0]), "restore")

    def _restore(self, kind):
        swap = restoration_step(
            np.array(self.nodes), np.array(self.values), self.spec,
            self.subsolver, self.rng_search, kind,
        )
        if swap is None:
            return False
        i, candidate = swap
        value = self.evaluate(candidate, "restore")
        # the evaluate call appended the candidate; fold it into slot i
        if math.isfinite(value):
            self.nodes.pop()
            self.values.pop()
            self.nodes[i] = candidate
            self.values[i] = value
        else:
            del self.nodes[i]
            del self.values[i]
        return True

    def _restart(self, kind):
        if self.restarts >= self.config.max_restarts:
            raise _Aborted
        self.restarts += 1
        rng = np.random.default_rng([self.config.seed, 0, self.restarts])
        n_init = design.initial_sample_count(self.spec.ext_dim)
        pts = design.initial_design(self.spec, n_init, kind, rng)
        scaled = self.spec.scale(pts)
        incumbent = None
        if self.best_original is not None:
            incumbent = self.spec.scale(
                problem.encode(self.best_original, self.spec)
            )
            near = int(np.argmin(np.linalg.norm(scaled - incumbent, axis=1)))
            scaled = np.delete(scaled, near, axis=0)
        self.nodes = []
        self.values = []
        if incumbent is not None:
            self.nodes.append(incumbent)
            self.values.append(self.best_value)
        for row in scaled:
            if self.nodes and _kernels.min_dist(
                row[None, :], np.array(self.nodes)
            )[0] <= rbf.NODE_TOL:
                continue
            self.evaluate(row, "init")

    # -- refinement ----------------------------------------------------

    def _refine_eval(self, candidate):
        if len(self.trace) >= self.budget:
            raise _BudgetExhausted
        if self.nodes and _kernels.min_dist(
            np.asarray(candidate)[None, :], np.array(self.nodes)
        )[0] <= rbf.NODE_TOL:
            return None
        value = self.evaluate(candidate, "refine")
        return value if math.isfinite(value) else None

    def _run_refinement(self):
        cfg = self.config.refine
        state = refine.init_refinement(
            np.array(self.nodes), np.array(self.values), self.spec, cfg
        )
        if state is None:
            return False
        n = self.spec.ext_dim
        while state.stop_reason is None:
            refine.geometry_repair(state, self.spec, self.rng_search, self._refine_eval)
            if state.stop_reason is not None:
                break
            refine.refinement_iteration(
                state, self._refine_eval, self.spec, cfg, self.rng_search
            )
            if (
                state.stop_reason == "iteration_limit"
                and self.budget - len(self.trace) <= n + 1
            ):
                state.stop_reason = None  # spend the remaining budget locally
            if len(self.trace) >= self.budget:
                break
        return state.stop_reason == "iteration_limit"

    # -- main loop ------------------------------------------------------

    def run(self):
        spec, config = self.spec, self.config
        n = spec.ext_dim
        n_init = min(design.initial_sample_count(n), self.budget)
        rng_design = np.random.default_rng([config.seed, 0])
        try:
            if config.initial_points is not None:
                pts = np.array(
                    [problem.encode(p, spec) for p in config.initial_points]
                )
            else:
                pts = design.initial_design(
                    spec, n_init, self._rank_check_kind(), rng_design
                )
            for row in pts:
                self.evaluate(spec.scale(row), "init")

            cycle = search.CycleState(
                kappa=config.kappa, infstep_enabled=config.resolved_infstep()
            )
            local_kind = global_kind = self._rank_check_kind()
            cycles_since_refine = 0
            improved_since_refine = True
            last_stop_was_limit = False
            best_at_refine = self.best_value

            while len(self.trace) < self.budget and not self._out_of_time():
                if cycle.at_cycle_start():
                    local_kind, global_kind = self._cycle_kernels()
                kind = (
                    local_kind
                    if cycle.step >= cycle.kappa - 1
                    else global_kind
                )
                model = self._fit(kind)
                cycle.f_min = float(np.min(self.values))
                cycle.f_max = float(np.max(self.values))
                x = search.next_point(
                    config.algorithm,
                    cycle,
                    model,
                    spec,
                    self.subsolver,
                    self.rng_search,
                    msrsm_variant=config.msrsm_variant,
                    shortcut_rtol=config.shortcut_rtol,
                    target_margin=config.target_margin,
                )
                self.evaluate(x, cycle.phase())
                if cycle.advance():
                    cycles_since_refine += 1
                    if self.best_value < best_at_refine:
                        improved_since_refine = True
                    if (
                        config.refine_enabled
                        and refine.should_trigger(
                            cycles_since_refine,
                            improved_since_refine,
                            last_stop_was_limit,
                            config.refine,
                        )
                        and len(self.nodes) >= n + 1
                    ):
                        last_stop_was_limit = self._run_refinement()
                        cycles_since_refine = 0
                        improved_since_refine = False
                        best_at_refine = self.best_value
        except _BudgetExhausted:
            pass
        except _Aborted:
            self.trace.meta["aborted"] = True
        self.trace.meta["restarts"] = self.restarts
        self.trace.meta["kernel_history"] = list(self.selector.history)
        self.trace.meta["evaluations"] = len(self.trace)
        return self.best_original, self.best_value, self.trace


def run(spec, config=OptimizerConfig()):
    """Run the serial optimizer; returns ``(best point, best value, trace)``
    with the best point in original-space coordinates."""
    return _Run(spec, config).run()


def restoration_step(nodes, values, spec, subsolver, rng, kind):
    """Try to make the interpolation system solvable by replacing one node
    with a point of maximal minimum distance to the others.

    Scans nodes from newest to oldest; returns ``(index, replacement)`` in
    scaled coordinates on success (the caller evaluates the replacement),
    or None when every swap leaves the system ill conditioned.
    """
    nodes = np.asarray(nodes, dtype=float)
    k = nodes.shape[0]
    for i in range(k - 1, -1, -1):
        others = np.delete(nodes, i, axis=0)
        if others.shape[0] == 0:
            continue

        def objective(pts):
            return -_kernels.min_dist(spec.scale(pts), others)

        x, _, _, _ = subsolver.minimize(objective, spec, rng)
        candidate = spec.scale(x)
        trial = nodes.copy()
        trial[i] = candidate
        if rbf.system_condition_ok(kind, trial, spec):
            return i, candidate
    return None


def write_summary(path, spec, config, best_original, best_value, trace):
    """Persist the run summary as JSON."""
    payload = {
        "problem": spec.name,
        "algorithm": config.algorithm,
        "subsolver": config.subsolver,
        "seed": config.seed,
        "budget": config.budget,
        "best_value": best_value,
        "best_point": None
        if best_original is None
        else [float(v) for v in best_original],
        "evaluations": trace.meta.get("evaluations", len(trace)),
        "restarts": trace.meta.get("restarts", 0),
        "aborted": trace.meta.get("aborted", False),
        "kernel_history": trace.meta.get("kernel_history", []),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
    return payload
