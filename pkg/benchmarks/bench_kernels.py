"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py --n 200000 --repeat 5
"""

import argparse
import time

import numpy as np

from mobiscope import _kernels as K


def _track(rng, n):
    t = np.cumsum(rng.choice([60.0, 300.0], size=n))
    jumps = rng.random(n) < 0.02
    lat = 1.35 + np.cumsum(np.where(jumps, rng.normal(0, 0.02, n), 0.0)) + rng.normal(0, 1e-4, n)
    lon = 103.8 + np.cumsum(np.where(jumps, rng.normal(0, 0.02, n), 0.0)) + rng.normal(0, 1e-4, n)
    return lat, lon, t, t + 60.0


def _best(fn, repeat):
    fn()  # warm-up, includes jit compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100_000, help="fixes per track")
    ap.add_argument("--users", type=int, default=2000, help="rows for nearest-centroid assignment")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    lat, lon, s, e = _track(rng, args.n)
    offset = 480 * 60.0
    first = int(np.floor((s.min() + offset) / 86400))
    n_days = int(np.ceil((e.max() + offset) / 86400)) - first + 1
    X = rng.random((args.users, 20))
    C = rng.random((3, 20))

    cases = [
        ("stay_runs", K._stay_runs_jit, K._stay_runs_np, (lat, lon, s, e, 0.2, 1200.0)),
        ("day_coverage", K._day_coverage_jit, K._day_coverage_np, (s, e, offset, first, n_days)),
        ("assign_nearest", K._assign_nearest_jit, K._assign_nearest_np, (X, C)),
    ]
    print(f"numba available: {K.HAVE_NUMBA}; default path: {'jit' if K.USE_JIT else 'numpy'}")
    print(f"{'kernel':<16}{'jit (ms)':>12}{'numpy (ms)':>12}{'speedup':>10}")
    for name, jit_fn, np_fn, fargs in cases:
        tj = _best(lambda f=jit_fn, a=fargs: f(*a), args.repeat)
        tn = _best(lambda f=np_fn, a=fargs: f(*a), args.repeat)
        print(f"{name:<16}{tj * 1e3:>12.2f}{tn * 1e3:>12.2f}{tn / tj:>9.1f}x")


if __name__ == "__main__":
    main()
