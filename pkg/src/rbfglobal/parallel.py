"""Asynchronous master-worker optimizer.

A master owns all optimizer state and hands two kinds of task to
workers: objective evaluations (type 1, slow) and next-point
computations (type 2, fast).  Evaluations take priority; within a kind
tasks run first come, first served.  When at least two workers exist,
one is dedicated to refinement tasks.  Whenever a next-point computation
finishes, a temporary interpolation node with value
``max(f_min, s_k(x))`` is installed so no point is ever evaluated twice
concurrently; the temporary node is replaced by the true value when its
evaluation completes.  There is no restoration here: if the system
cannot be solved, completed tasks keep draining, then the algorithm
restarts.

Two executors are provided: real threads for genuinely slow
thread-safe oracles, and a deterministic discrete-event simulation with
a virtual clock and log-normal evaluation latencies, used for
reproducible tests.
"""

from __future__ import annotations

import heapq
import math
import queue as queue_mod
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels, design, modelsel, problem, rbf, refine, search
from .engine import EvaluationTrace, OptimizerConfig
from .exceptions import DuplicateNodeError, UnsolvableSystemError
from .subsolver import Subsolver

EVAL_F = "eval_f"            # type 1
COMPUTE_POINT = "compute_point"  # type 2


@dataclass(eq=False)
class Task:
    kind: str
    payload: dict
    submit_order: int
    refinement_flag: bool = False
    retries: int = 0


@dataclass(eq=False)
class TemporaryNode:
    point: np.ndarray
    value: Optional[float]  # None before any true evaluation exists
    task_order: int = -1


@dataclass(eq=False)
class Worker:
    ident: int
    refinement_only: bool = False
    busy: Optional[Task] = None


def make_temporary_value(f_min, s_value):
    """Placeholder value for a point whose evaluation is in flight:
    the surrogate estimate, clipped from below at the best known value."""
    return max(f_min, s_value)


def _eligible(worker, task, dedicated_exists):
    if worker.refinement_only:
        return task.refinement_flag
    return not (dedicated_exists and task.refinement_flag)


def next_task(queue, idle_workers, dedicated_exists=None):
    """The highest-priority task some idle worker may run, or None.

    Evaluations beat next-point computations; ties go to the lowest
    submit order.  A worker flagged ``refinement_only`` accepts only
    refinement tasks, and when such a worker exists anywhere in the pool
    refinement tasks go only to it.
    """
    if not idle_workers:
        return None
    if dedicated_exists is None:
        dedicated_exists = any(w.refinement_only for w in idle_workers)
    ordered = sorted(
        queue, key=lambda t: (0 if t.kind == EVAL_F else 1, t.submit_order)
    )
    for task in ordered:
        if any(_eligible(w, task, dedicated_exists) for w in idle_workers):
            return task
    return None


class _SimulatedExecutor:
    """Discrete-event executor with a virtual clock."""

    def __init__(self, spec, latency, rng):
        self.spec = spec
        self.latency = latency
        self.rng = rng
        self.now = 0.0
        self.seq = 0
        self.events = []

    def submit(self, worker, task):
        self.seq += 1
        if task.kind == EVAL_F:
            result = _call_oracle(self.spec, task.payload["original"])
            mu, sigma, cap = self.latency
            duration = min(float(self.rng.lognormal(mu, sigma)), cap)
        else:
            result = None
            duration = 0.0
        heapq.heappush(
            self.events, (self.now + duration, self.seq, worker, task, result)
        )

    def pending(self):
        return bool(self.events)

    def next_completion(self):
        t, _, worker, task, result = heapq.heappop(self.events)
        self.now = t
        return t, worker, task, result

    def shutdown(self):
        pass


class _ThreadExecutor:
    """Real threads; evaluations run concurrently in a pool."""

    def __init__(self, spec, workers):
        if not spec.objective_thread_safe:
            raise ValueError("objective is not declared thread safe")
        self.spec = spec
        self.pool = ThreadPoolExecutor(max_workers=max(workers, 1))
        self.completions = queue_mod.Queue()
        self.inflight = 0
        self.start = None
        self.lock = threading.Lock()
        import time

        self._clock = time.monotonic
        self.t0 = self._clock()

    def submit(self, worker, task):
        with self.lock:
            self.inflight += 1

        def job():
            if task.kind == EVAL_F:
                result = _call_oracle(self.spec, task.payload["original"])
            else:
                result = None
            self.completions.put((self._clock() - self.t0, worker, task, result))

        self.pool.submit(job)

    def pending(self):
        with self.lock:
            return self.inflight > 0

    def next_completion(self):
        t, worker, task, result = self.completions.get()
        with self.lock:
            self.inflight -= 1
        return t, worker, task, result

    def shutdown(self):
        self.pool.shutdown(wait=False)


def _call_oracle(spec, original):
    try:
        value = float(spec.objective(original))
    except Exception as exc:  # a crashing oracle is reported, not fatal
        return exc
    return value if math.isfinite(value) else math.inf


class _Master:
    def __init__(self, spec, config, workers, executor):
        self.spec = spec
        self.config = config
        self.n = spec.ext_dim
        self.budget = config.budget or 50 * (self.n + 1)
        self.workers = [
            Worker(i, refinement_only=(i == 0 and workers >= 2))
            for i in range(workers)
        ]
        self.rng_search = np.random.default_rng([config.seed, 1])
        latency = config.simulate_latency or (3.0, 0.5, 300.0)
        if executor == "simulated":
            self.executor = _SimulatedExecutor(
                spec, latency, np.random.default_rng([config.seed, 2])
            )
        elif executor == "threads":
            self.executor = _ThreadExecutor(spec, workers)
        else:
            raise ValueError(f"unknown executor {executor!r}")
        self.subsolver = Subsolver(config.subsolver, config.ga, config.sampling)
        self.fixed_kind = None if config.rbf == "auto" else rbf.RbfKind(config.rbf)
        self.selector = modelsel.ModelSelState(max_executions=config.model_select_max)
        self.local_kind = self.global_kind = self.fixed_kind or rbf.RbfKind(
            "thin_plate_spline"
        )

        self.trace = EvaluationTrace()
        self.nodes = []
        self.values = []
        self.temps = []
        self.pending = []
        self.submit_counter = 0
        self.committed = 0       # evaluations done, in flight, or promised
        self.done = 0
        self.fit_blocked = False
        self.aborted = False
        self._model = None
        self.best_value = math.inf
        self.best_original = None
        self.has_dedicated = any(w.refinement_only for w in self.workers)

        self.cycle = search.CycleState(
            kappa=config.kappa, infstep_enabled=config.resolved_infstep()
        )
        self.cycles_since_refine = 0
        self.improved_since_refine = True
        self.last_stop_was_limit = False
        self.best_at_refine = math.inf
        self.ref_state = None
        self.ref_pending = None   # ("geometry", idx) or ("descent", candidate)
        self.ref_active = False
        self.ref_needs_reinit = False
        self.ref_committed = 0
        self.restarts = 0

        self.stats = {
            "max_inflight_evals": 0,
            "duplicate_rejections": 0,
            "concurrent_duplicates": 0,
            "temps_created": 0,
            "temps_resolved": 0,
            "makespan": 0.0,
        }
        self._inflight_points = []

    # -- helpers --------------------------------------------------------

    def _next_order(self):
        self.submit_counter += 1
        return self.submit_counter

    def _known_points(self):
        pts = list(self.nodes) + [t.point for t in self.temps]
        return np.array(pts) if pts else np.empty((0, self.n))

    def _fit_points(self):
        pts = list(self.nodes)
        vals = list(self.values)
        for t in self.temps:
            if t.value is not None:
                pts.append(t.point)
                vals.append(t.value)
        return np.array(pts), np.array(vals)

    def _queue_eval(self, point_scaled, phase, refinement=False):
        known = self._known_points()
        if known.size and _kernels.min_dist(
            np.asarray(point_scaled)[None, :], known
        )[0] <= rbf.NODE_TOL:
            self.stats["duplicate_rejections"] += 1
            return False
        value = None
        if self.values:
            f_min = min(self.values)
            s_val = f_min
            if self._model is not None:
                s_val = rbf.predict(self._model, np.asarray(point_scaled))
            value = make_temporary_value(f_min, s_val)
        temp = TemporaryNode(
            point=np.asarray(point_scaled, dtype=float),
            value=value,
            task_order=self._next_order(),
        )
        self.temps.append(temp)
        self.stats["temps_created"] += 1
        original = problem.decode(self.spec.unscale(temp.point), self.spec)
        self.pending.append(
            Task(
                kind=EVAL_F,
                payload={
                    "scaled": temp.point,
                    "original": original,
                    "phase": phase,
                    "temp": temp,
                },
                submit_order=temp.task_order,
                refinement_flag=refinement,
            )
        )
        return True

    def _queue_compute(self, refinement=False):
        step = None
        if not refinement:
            if self.cycle.at_cycle_start():
                self._select_kernels()
            step = self.cycle.step
            if self.cycle.advance():
                self.cycles_since_refine += 1
                self._maybe_trigger_refinement()
        self.pending.append(
            Task(
                kind=COMPUTE_POINT,
                payload={"step": step},
                submit_order=self._next_order(),
                refinement_flag=refinement,
            )
        )
        self.committed += 1
        if refinement:
            self.ref_committed += 1

    def _select_kernels(self):
        if self.fixed_kind is not None:
            return
        if self.nodes:
            self.local_kind, self.global_kind = modelsel.choose_models(
                self.selector, np.array(self.nodes), np.array(self.values), self.spec
            )

    # -- refinement management -------------------------------------------

    def _refinement_budget_ok(self):
        return self.ref_committed + 1 <= 0.25 * max(self.committed, 1)

    def _maybe_trigger_refinement(self):
        if not self.config.refine_enabled or self.ref_active:
            return
        if self.best_value < self.best_at_refine:
            self.improved_since_refine = True
        if (
            refine.should_trigger(
                self.cycles_since_refine,
                self.improved_since_refine,
                self.last_stop_was_limit,
                self.config.refine,
            )
            and len(self.nodes) >= self.n + 1
            and self._refinement_budget_ok()
            and self.committed < self.budget
            and not self.aborted
        ):
            self.ref_active = True
            self.ref_state = None
            self._queue_compute(refinement=True)

    def _end_refinement(self, stop_reason):
        self.last_stop_was_limit = stop_reason == "iteration_limit"
        self.ref_active = False
        self.ref_state = None
        self.ref_pending = None
        self.cycles_since_refine = 0
        self.improved_since_refine = False
        self.best_at_refine = self.best_value

    def _refinement_step(self):
        """Produce the next refinement candidate, or end the phase."""
        cfg = self.config.refine
        if self.ref_state is None or self.ref_needs_reinit:
            self.ref_needs_reinit = False
            self.ref_state = refine.init_refinement(
                np.array(self.nodes), np.array(self.values), self.spec, cfg
            )
            if self.ref_state is None:
                self._end_refinement(None)
                return
        state = self.ref_state
        attempts = 0
        while state.stop_reason is None:
            prop = refine.propose_geometry_point(state, self.spec)
            if prop is not None:
                idx, candidate = prop
                attempts += 1
                if attempts > 5:
                    state.stop_reason = "geometry_failure"
                    break
                if self._queue_eval(candidate, "refine", refinement=True):
                    self.ref_pending = ("geometry", idx, candidate)
                    return
                continue
            candidate = refine.propose_descent_point(
                state, self.spec, cfg, self.rng_search
            )
            if candidate is None:
                break
            if self._queue_eval(candidate, "refine", refinement=True):
                self.ref_pending = ("descent", candidate)
                return
            refine.apply_descent_result(state, candidate, None, cfg)
        self._end_refinement(state.stop_reason)

    # -- completion handling ----------------------------------------------

    def _handle_eval(self, when, task, result):
        temp = task.payload["temp"]
        if isinstance(result, Exception):
            if task.retries == 0 and self.committed < self.budget:
                task.retries = 1
                self.committed += 1  # the retry burns an extra oracle call
                self.executor.submit(None, task)
                return
            result = math.inf
        self.temps.remove(temp)
        self._inflight_points = [
            p for p in self._inflight_points
            if p is not task.payload["scaled"]
        ]
        self.stats["temps_resolved"] += 1
        self.done += 1
        value = float(result)
        self.trace.append(
            task.payload["original"], task.payload["scaled"], value, when,
            task.payload["phase"],
        )
        if math.isfinite(value):
            self.nodes.append(temp.point)
            self.values.append(value)
            if value < self.best_value:
                self.best_value = value
                self.best_original = task.payload["original"]
                if not task.refinement_flag and self.ref_active:
                    self.ref_needs_reinit = True
        self.fit_blocked = False

        if task.refinement_flag and self.ref_active:
            self._consume_refinement_eval(value)

    def _consume_refinement_eval(self, value):
        state = self.ref_state
        kind = self.ref_pending
        self.ref_pending = None
        if state is None or kind is None:
            self._end_refinement(None)
            return
        fval = value if math.isfinite(value) else None
        if kind[0] == "geometry":
            _, idx, candidate = kind
            if fval is not None:
                state.points[idx] = candidate
                state.values[idx] = fval
                if fval < state.f_bar:
                    state.f_bar = fval
                    state.x_bar = candidate.copy()
        else:
            refine.apply_descent_result(state, kind[1], fval, self.config.refine)
        if state.stop_reason is not None:
            self._end_refinement(state.stop_reason)
        elif (
            self._refinement_budget_ok()
            and self.committed < self.budget
            and not self.aborted
        ):
            self._queue_compute(refinement=True)
        else:
            self._end_refinement(None)

    def _handle_compute(self, task):
        if task.refinement_flag:
            self._refinement_step()
            if self.ref_pending is None and not self.ref_active:
                self.committed -= 1  # refinement ended without spawning an eval
                self.ref_committed -= 1
            return
        if self.done + self._inflight_evals() >= self.budget:
            self.committed -= 1
            return
        pts, vals = self._fit_points()
        if pts.shape[0] == 0:
            self._reschedule_compute(task)
            return
        kind = (
            self.local_kind
            if task.payload["step"] is not None
            and task.payload["step"] >= self.cycle.kappa - 1
            else self.global_kind
        )
        try:
            model = rbf.fit(
                kind, pts, vals, self.spec,
                clip_above_median=self.config.clip_codomain,
            )
        except (UnsolvableSystemError, DuplicateNodeError):
            if self._inflight_evals() or any(
                t.kind == EVAL_F for t in self.pending
            ):
                self._reschedule_compute(task)
            else:
                self.committed -= 1
                self._restart()
            return
        self._model = model
        state = search.CycleState(
            kappa=self.cycle.kappa,
            infstep_enabled=self.cycle.infstep_enabled,
            step=task.payload["step"],
            f_min=float(np.min(self.values)) if self.values else math.inf,
            f_max=float(np.max(self.values)) if self.values else -math.inf,
        )
        try:
            x = search.next_point(
                self.config.algorithm,
                state,
                model,
                self.spec,
                self.subsolver,
                self.rng_search,
                msrsm_variant=self.config.msrsm_variant,
                shortcut_rtol=self.config.shortcut_rtol,
                target_margin=self.config.target_margin,
            )
        except Exception:
            self.committed -= 1
            return
        if not self._queue_eval(x, state.phase()):
            self.committed -= 1

    def _reschedule_compute(self, task):
        self.fit_blocked = True
        self.pending.insert(0, task)

    def _inflight_evals(self):
        return sum(
            1 for w in self.workers if w.busy is not None and w.busy.kind == EVAL_F
        )

    def _restart(self):
        self.restarts += 1
        if self.restarts > self.config.max_restarts:
            self.trace.meta["aborted"] = True
            self.aborted = True
            return
        rng = np.random.default_rng([self.config.seed, 0, self.restarts])
        n_init = design.initial_sample_count(self.n, threads=len(self.workers))
        pts = design.initial_design(
            self.spec, n_init, self.fixed_kind or rbf.RbfKind("thin_plate_spline"),
            rng,
        )
        scaled = self.spec.scale(pts)
        self.nodes = []
        self.values = []
        self._model = None
        if self.best_original is not None:
            incumbent = self.spec.scale(
                problem.encode(self.best_original, self.spec)
            )
            near = int(np.argmin(np.linalg.norm(scaled - incumbent, axis=1)))
            scaled = np.delete(scaled, near, axis=0)
            self.nodes.append(incumbent)
            self.values.append(self.best_value)
        for row in scaled:
            if self.committed >= self.budget:
                break
            if self._queue_eval(row, "init"):
                self.committed += 1

    # -- main loop ----------------------------------------------------------

    def run(self):
        rng_design = np.random.default_rng([self.config.seed, 0])
        n_init = min(
            design.initial_sample_count(self.n, threads=len(self.workers)),
            self.budget,
        )
        if self.config.initial_points is not None:
            pts = np.array(
                [problem.encode(p, self.spec) for p in self.config.initial_points]
            )
        else:
            pts = design.initial_design(
                self.spec, n_init,
                self.fixed_kind or rbf.RbfKind("thin_plate_spline"), rng_design,
            )
        for row in self.spec.scale(pts):
            if self.committed >= self.budget:
                break
            if self._queue_eval(row, "init"):
                self.committed += 1

        while True:
            self._assign()
            busy = any(w.busy is not None for w in self.workers)
            if not busy and not self.pending:
                if (
                    self.committed >= self.budget
                    or self.done >= self.budget
                    or self.aborted
                ):
                    break
                # nothing runnable: force more work onto the queue
                self._queue_compute()
                self._assign()
                if all(w.busy is None for w in self.workers) and not self.pending:
                    break
            if not self.executor.pending():
                if not busy:
                    break
                continue
            when, worker, task, result = self.executor.next_completion()
            self.stats["makespan"] = max(self.stats["makespan"], when)
            if worker is not None:
                worker.busy = None
            if task.kind == EVAL_F:
                self._handle_eval(when, task, result)
            else:
                self._handle_compute(task)
        self.executor.shutdown()
        self.trace.meta["restarts"] = self.restarts
        self.trace.meta["evaluations"] = len(self.trace)
        self.trace.meta["stats"] = dict(self.stats)
        self.trace.meta["kernel_history"] = list(self.selector.history)
        self.trace.meta["makespan"] = self.stats["makespan"]
        return self.best_original, self.best_value, self.trace

    def _assign(self):
        while True:
            idle = [w for w in self.workers if w.busy is None]
            if not idle:
                return
            # top up the queue so idle non-dedicated workers have work
            spare = [w for w in idle if not w.refinement_only]
            queued_for_them = sum(
                1 for t in self.pending
                if not t.refinement_flag or not any(
                    w.refinement_only for w in self.workers
                )
            )
            while (
                spare
                and queued_for_them < len(spare)
                and self.committed < self.budget
                and not self.fit_blocked
                and not self.aborted
            ):
                self._queue_compute()
                queued_for_them += 1
            candidates = list(self.pending)
            if self.fit_blocked:
                candidates = [t for t in candidates if t.kind == EVAL_F]
            task = next_task(candidates, idle, dedicated_exists=self.has_dedicated)
            if task is None:
                return
            self.pending.remove(task)
            worker = self._worker_for(task, idle)
            worker.busy = task
            if task.kind == EVAL_F:
                point = task.payload["scaled"]
                for other in self._inflight_points:
                    if np.linalg.norm(point - other) <= rbf.NODE_TOL:
                        self.stats["concurrent_duplicates"] += 1
                self._inflight_points.append(point)
            self.stats["max_inflight_evals"] = max(
                self.stats["max_inflight_evals"], self._inflight_evals()
            )
            self.executor.submit(worker, task)

    def _worker_for(self, task, idle):
        for w in idle:
            if _eligible(w, task, self.has_dedicated):
                return w
        return idle[0]


def run_parallel(spec, config=OptimizerConfig(), workers=2, executor="simulated"):
    """Run the asynchronous optimizer; returns ``(best point, best value,
    trace)`` with the trace ordered by completion time."""
    if workers < 1:
        raise ValueError("need at least one worker")
    return _Master(spec, config, workers, executor).run()
