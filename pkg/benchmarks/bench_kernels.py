"""Time each numba kernel against its pure-Python body.

    python3 benchmarks/bench_kernels.py [--n 20000] [--repeat 5] [--end-to-end]

``--end-to-end`` also times a small ``amolab eigen`` run in two fresh
interpreters, once compiled and once with ``AMOLAB_NO_NUMBA=1``.
"""
import argparse
import os
import subprocess
import sys
import tempfile
import time
import timeit

import numpy as np

from amolab import kernels
from amolab._accel import HAVE_NUMBA


def cases(n, rng):
    V = 2 * np.e * np.cos(2 * np.pi * (0.1 + 0.6180339887 * np.arange(n)))
    E = 0.37
    m = 64
    c = rng.uniform(-1, 1, m)
    return {
        "transfer_log": (V, E),
        "cumulative_log_norms": (V, E, False),
        "sturm_count": (V, E),
        "determinant_log_recursion": (V, E),
        "propagate": (V, E, 0.3, 1.0, 0.0),
        "lagrange_log_max": (c, m // 2, -1.0, 1.0),
    }


def bench(fn, args, repeat):
    fn(*args)  # compile / warm up
    t = timeit.Timer(lambda: fn(*args))
    n, _ = t.autorange()
    return min(t.repeat(repeat, n)) / n


def end_to_end():
    cfg = ["eigen", "--set", "box=600", "--set", "window=300", "--set", "upper=200"]
    out = {}
    for label, env in (("numba", {}), ("numpy", {"AMOLAB_NO_NUMBA": "1"})):
        with tempfile.TemporaryDirectory() as d:
            t0 = time.perf_counter()
            subprocess.run([sys.executable, "-m", "amolab.cli", *cfg, "--out", d], env={**os.environ, **env},
                           capture_output=True, check=False)
            out[label] = time.perf_counter() - t0
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=20000, help="chain length for the recursions")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--end-to-end", action="store_true")
    a = ap.parse_args()
    if not HAVE_NUMBA:
        sys.exit("numba is disabled (AMOLAB_NO_NUMBA set or not installed); nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'numba':>12s} {'python':>12s} {'speedup':>9s}")
    for name, args in cases(a.n, rng).items():
        k = getattr(kernels, name)
        tj = bench(k, args, a.repeat)
        tp = bench(k.py_func, args, a.repeat)
        print(f"{name:28s} {tj * 1e3:10.3f}ms {tp * 1e3:10.3f}ms {tp / tj:8.1f}x")
    if a.end_to_end:
        r = end_to_end()
        print(f"eigen run (box 600): numba {r['numba']:.1f}s, numpy fallback {r['numpy']:.1f}s")


if __name__ == "__main__":
    main()
