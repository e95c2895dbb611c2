"""Compare the numba and pure-numpy kernel backends.

Run twice, once per backend:

    python3 benchmarks/bench_kernels.py
    HIERCAST_NO_NUMBA=1 python3 benchmarks/bench_kernels.py

or let the script fork itself for both (default):

    python3 benchmarks/bench_kernels.py --both
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np


def _bench(fn, *args, repeat=5, warmup=1):
    for _ in range(warmup):
        fn(*args)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def run_single():
    from hiercast import kernels

    rng = np.random.default_rng(0)
    results = []

    B, w, c_in, c_out, ks = 64, 30, 16, 16, 4
    x = rng.standard_normal((B, w, c_in))
    k = rng.standard_normal((ks, c_in, c_out))
    bias = rng.standard_normal(c_out)
    gout = rng.standard_normal((B, w, c_out))
    results.append(("conv1d_same (64x30x16)",
                    _bench(kernels.conv1d_same, x, k, bias)))
    results.append(("conv1d_same_grad (64x30x16)",
                    _bench(kernels.conv1d_same_grad, x, k, gout)))

    y = rng.standard_normal(1460).cumsum() + 100.0
    results.append(("ses_fit (T=1460)", _bench(kernels.ses_fit, y, 0.3)))
    results.append(("holt_fit (T=1460)", _bench(kernels.holt_fit, y, 0.3, 0.1)))
    results.append(("hw_add_fit (T=1460, m=7)",
                    _bench(kernels.hw_add_fit, y, 7, 0.3, 0.1, 0.1)))

    print(f"backend: {kernels.BACKEND}")
    for name, secs in results:
        print(f"  {name:34s} {secs * 1e6:10.1f} us")


def run_both():
    here = os.path.abspath(__file__)
    for env_flag in ("0", "1"):
        env = dict(os.environ, HIERCAST_NO_NUMBA=env_flag)
        subprocess.run([sys.executable, here, "--single"], env=env, check=True)


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--single", action="store_true",
                        help="benchmark only the backend selected by "
                             "HIERCAST_NO_NUMBA")
    parser.add_argument("--both", action="store_true")
    args = parser.parse_args()
    if args.single:
        run_single()
    else:
        run_both()
