"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat R]

Both backends receive identical pre-drawn random arrays, so the timings
compare the same work.
"""

import argparse
import timeit

import numpy as np

from monitored_dots import _kernels_py

try:
    from monitored_dots import _kernels
except ImportError:
    _kernels = None


def langevin_case(impl, n=8, walkers=64, pool=4000):
    gen = np.random.default_rng(0)
    z0 = np.sort(gen.standard_normal((walkers, n)) * 2.0, axis=1)[:, ::-1].copy()
    normals = gen.standard_normal((walkers, pool, n))

    def call():
        z = z0.copy()
        s_rem = np.full(walkers, 0.5)
        pos = np.zeros(walkers, dtype=np.int64)
        impl.langevin_run(z, s_rem, normals, pos, 1e-3, 1e-20)

    return call


def metropolis_case(impl, n=8, chains=64, sweeps=200):
    gen = np.random.default_rng(1)
    s = 1.0
    c = 2.0 * (n + 1 - 2 * np.arange(1, n + 1)) * s
    z0 = np.tile(c, (chains, 1)) + 0.01 * gen.standard_normal((chains, n))
    z0 = np.sort(z0, axis=1)[:, ::-1].copy()
    scale = np.full(n, 0.5)
    xi = gen.standard_normal((chains, sweeps, n))
    log_u = np.log(gen.random((chains, sweeps, n)))
    out = np.empty((chains, sweeps // 10, n))

    def call():
        impl.metropolis_sweeps(z0.copy(), s, scale, xi, log_u, 10, out)

    return call


def drift_case(impl, n=32, walkers=256):
    z = np.sort(np.random.default_rng(2).standard_normal((walkers, n)) * 3.0, axis=1)[:, ::-1].copy()
    return lambda: impl.coth_drift(z)


CASES = {
    "langevin_run (N=8, 64 walkers, s=0.5)": langevin_case,
    "metropolis_sweeps (N=8, 64 chains, 200 sweeps)": metropolis_case,
    "coth_drift (N=32, 256 walkers)": drift_case,
}


def best_time(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled kernels not built; timing the numpy fallback only")
    print(f"{'kernel':50s} {'numpy [s]':>10s} {'cython [s]':>11s} {'speedup':>8s}")
    for label, make in CASES.items():
        t_py = best_time(make(_kernels_py), args.repeat)
        if _kernels is None:
            print(f"{label:50s} {t_py:10.4f} {'-':>11s} {'-':>8s}")
            continue
        t_cy = best_time(make(_kernels), args.repeat)
        print(f"{label:50s} {t_py:10.4f} {t_cy:11.4f} {t_py / t_cy:8.1f}")


if __name__ == "__main__":
    main()
