"""Benchmark the numba-accelerated kernels against the numpy fallbacks.

Run:  python benchmarks/bench_kernels.py

The same functions back the surrogate hot paths (pairwise distances,
candidate-to-node min distances, kernel application, batched surrogate
prediction).  The active backend in the library is controlled by the
RBFGLOBAL_NUMBA environment variable; this script times both paths in
one process.
"""

import time

import numpy as np

from rbfglobal import _kernels

SIZES = [
    (200, 50, 5),
    (500, 150, 10),
    (2000, 300, 20),
]
REPEATS = 20


def _time(fn, *args):
    fn(*args)  # warmup (and JIT compile for the numba path)
    best = np.inf
    for _ in range(REPEATS):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    try:
        nb_pairwise, nb_min_dist, nb_phi, nb_predict = _kernels._build_numba()
    except ImportError:
        print("numba not importable; nothing to compare")
        return
    numpy_fns = _kernels.numpy_backend
    rng = np.random.default_rng(0)

    header = f"{'case':<34}{'numpy':>12}{'numba':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for m, k, n in SIZES:
        x = rng.uniform(size=(m, n))
        nodes = rng.uniform(size=(k, n))
        lam = rng.normal(size=k)
        alin = rng.normal(size=n)
        dists = numpy_fns["pairwise_dist"](x, nodes)
        cases = [
            (f"pairwise_dist {m}x{k} d={n}",
             numpy_fns["pairwise_dist"], nb_pairwise, (x, nodes)),
            (f"min_dist      {m}x{k} d={n}",
             numpy_fns["min_dist"], nb_min_dist, (x, nodes)),
            (f"phi(cubic)    {m}x{k}",
             lambda c, g, r: numpy_fns["phi"](c, g, r),
             nb_phi, (_kernels.CUBIC, 1.0, dists)),
            (f"predict       {m}x{k} d={n}",
             numpy_fns["predict"], nb_predict,
             (x, nodes, lam, alin, 0.5, _kernels.THIN_PLATE_SPLINE, 1.0)),
        ]
        for label, np_fn, nb_fn, args in cases:
            t_np = _time(np_fn, *args)
            t_nb = _time(nb_fn, *args)
            print(f"{label:<34}{t_np * 1e3:>10.3f}ms{t_nb * 1e3:>10.3f}ms"
                  f"{t_np / t_nb:>9.2f}x")
        print()


if __name__ == "__main__":
    main()
