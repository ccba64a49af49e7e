"""Time the compiled and the plain numpy inner loops on identical inputs.

    python benchmarks/bench_backends.py --n 2000 4000 --paths 50
"""

import argparse
import time

import numpy as np

from vouest import _accel, _loops


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[1000, 4000], help="grid sizes")
    ap.add_argument("--paths", type=int, default=20, help="paths per Euler batch")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is unavailable (or VOUEST_DISABLE_NUMBA is set); nothing to compare")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<10}{'n':>8}{'numpy s':>12}{'numba s':>12}{'speedup':>10}{'max rel diff':>15}")
    for n in args.n:
        dt = 0.05
        t = np.arange(1, n + 1) * dt
        a = np.concatenate([[1.5], -0.5 * np.diff(np.concatenate([[0.0], t ** 0.25])) / n])
        rhs = rng.standard_normal(n)
        kern = np.concatenate([[0.0], t ** -0.25])
        xi = rng.standard_normal((args.paths, n))
        cases = {
            "toeplitz": ((a, rhs), _loops.toeplitz_solve_numpy, _loops.toeplitz_solve_numba),
            "euler": ((kern, xi, 1.0, 1.2, -1.0, 0.3, dt), _loops.euler_batch_numpy, _loops.euler_batch_numba),
        }
        for name, (fargs, slow, fast) in cases.items():
            fast(*fargs)  # compile outside the timing
            ts = best_of(lambda: slow(*fargs), args.repeat)
            tf = best_of(lambda: fast(*fargs), args.repeat)
            ref = slow(*fargs)
            diff = np.max(np.abs(fast(*fargs) - ref)) / max(np.max(np.abs(ref)), 1e-300)
            print(f"{name:<10}{n:>8}{ts:>12.4f}{tf:>12.4f}{ts / tf:>10.1f}{diff:>15.2e}")


if __name__ == "__main__":
    main()
