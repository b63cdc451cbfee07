"""Command-line interface.

Subcommands: ``solve`` runs the optimizer on a problem definition file,
``bench`` drives the benchmark suite, ``list-instances`` prints the
test-function registry.  Exit status: 0 on success, 1 for a malformed
problem or suite file, 2 when the run aborted.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import bench, engine, parallel, problem, testbed
from .engine import OptimizerConfig

_RBF_CHOICES = ("auto", "linear", "cubic", "multiquadric", "thin_plate", "gaussian")


def _rbf_name(flag):
    return "thin_plate_spline" if flag == "thin_plate" else flag


def _parse_latency(text):
    try:
        scheme, params = text.split(":", 1)
        if scheme != "lognormal":
            raise ValueError
        mu, sigma, cap = (float(v) for v in params.split(","))
        return mu, sigma, cap
    except ValueError:
        raise argparse.ArgumentTypeError(
            "expected lognormal:mu,sigma,cap"
        ) from None


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="rbfglobal",
        description="Global derivative-free optimization with RBF surrogates",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="optimize a problem definition file")
    solve.add_argument("problem_file")
    solve.add_argument("--algorithm", choices=("msrsm", "gutmann"), default="msrsm")
    solve.add_argument("--subsolver", choices=("ga", "sampling"), default="ga")
    solve.add_argument("--budget", type=int, default=None)
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--threads", type=int, default=1)
    solve.add_argument("--rbf", choices=_RBF_CHOICES, default="auto")
    solve.add_argument("--refine-freq", type=int, default=3,
                       help="full search cycles between refinement phases"
                       " (0 disables refinement)")
    solve.add_argument("--kappa", type=int, default=5)
    solve.add_argument("--simulate-latency", type=_parse_latency, default=None,
                       metavar="lognormal:mu,sigma,cap")
    solve.add_argument("--out", default=None,
                       help="output directory (default: $RBFGLOBAL_OUT_DIR or .)")

    bench_cmd = sub.add_parser("bench", help="benchmark harness")
    bench_sub = bench_cmd.add_subparsers(dest="bench_command", required=True)
    bench_run = bench_sub.add_parser("run", help="run a benchmark suite")
    bench_run.add_argument("--suite", required=True, help="suite JSON file")
    bench_run.add_argument("--seeds", type=int, default=5)
    bench_run.add_argument("--tau", default="1e-2,1e-4",
                           help="comma-separated tolerances")
    bench_run.add_argument("--out", required=True)
    bench_run.add_argument("--budget-multiplier", type=int, default=50)
    bench_run.add_argument("--workers", type=int, default=1)

    sub.add_parser("list-instances", help="print the instance registry")
    return parser


def _solve(args):
    try:
        spec = problem.load_problem(args.problem_file)
    except FileNotFoundError:
        print(f"error: cannot read {args.problem_file}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(
            f"error: {args.problem_file}: line {exc.lineno}, column {exc.colno}:"
            f" {exc.msg}",
            file=sys.stderr,
        )
        return 1
    except (ValueError, KeyError) as exc:
        print(f"error: {args.problem_file}: {exc}", file=sys.stderr)
        return 1

    config = OptimizerConfig(
        algorithm=args.algorithm,
        subsolver=args.subsolver,
        budget=args.budget,
        seed=args.seed,
        rbf=_rbf_name(args.rbf),
        kappa=args.kappa,
        refine_enabled=args.refine_freq > 0,
        simulate_latency=args.simulate_latency,
    )
    if args.refine_freq > 0:
        config = replace(
            config, refine=replace(config.refine, trigger_cycles=args.refine_freq)
        )

    if args.threads >= 2:
        executor = "simulated" if args.simulate_latency else "threads"
        best, value, trace = parallel.run_parallel(
            spec, config, workers=args.threads, executor=executor
        )
    else:
        best, value, trace = engine.run(spec, config)

    out_dir = Path(args.out or os.environ.get("RBFGLOBAL_OUT_DIR", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    trace.to_csv(out_dir / "trace.csv")
    engine.write_summary(out_dir / "summary.json", spec, config, best, value, trace)
    if best is None:
        print("no finite objective value found")
    else:
        coords = " ".join(repr(float(v)) for v in best)
        print(f"best value: {value!r}")
        print(f"best point: {coords}")
    return 2 if trace.meta.get("aborted") else 0


def _bench_run(args):
    try:
        with open(args.suite) as fh:
            raw = json.load(fh)
        instances = raw["instances"]
        if not isinstance(instances, list) or not all(
            isinstance(n, str) for n in instances
        ):
            raise ValueError("field 'instances' must be a list of names")
        for name in instances:
            testbed.builtin(name)  # fail fast on unknown names
        algorithms = {}
        for label, overrides in raw.get(
            "algorithms", {"default": {}}
        ).items():
            if "rbf" in overrides:
                overrides = dict(overrides, rbf=_rbf_name(overrides["rbf"]))
            algorithms[label] = OptimizerConfig(**overrides)
    except FileNotFoundError:
        print(f"error: cannot read {args.suite}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(
            f"error: {args.suite}: line {exc.lineno}, column {exc.colno}: {exc.msg}",
            file=sys.stderr,
        )
        return 1
    except (KeyError, TypeError, ValueError) as exc:
        print(f"error: {args.suite}: {exc}", file=sys.stderr)
        return 1

    tau_list = [float(t) for t in args.tau.split(",") if t]
    bench.run_suite(
        instances,
        algorithms,
        seeds=args.seeds,
        tau_list=tau_list,
        out_dir=args.out,
        budget_multiplier=args.budget_multiplier,
        workers=args.workers,
    )
    print(f"reports written to {args.out}")
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    if args.command == "solve":
        return _solve(args)
    if args.command == "bench":
        return _bench_run(args)
    if args.command == "list-instances":
        for name in testbed.registry():
            print(name)
        print("# any name also accepts an @s<k> suffix, e.g. branin@s2")
        return 0
    return 1


if __name__ == "__main__":
    sys.exit(main())
