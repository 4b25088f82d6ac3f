"""Compare the compiled and numpy eigensum kernels.

    python benchmarks/bench_sums.py [--repeat 20]

Times the fused mode-sum kernel at several sizes, then a full RF risk
solve with each backend (in a subprocess, since the backend is fixed at
import time).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from rfrisk import _sums

SOLVE = ("import timeit; from rfrisk import *; "
         "ts = make_powerlaw_structure(PowerlawTask(1.5, 1.5), 10000).with_noise(0.5); "
         "print(BACKEND, min(timeit.repeat(lambda: rf_risk(ts, 256, 512, 1e-3), number=5, repeat={r})) / 5)")


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--repeat", type=int, default=20)
    args = p.parse_args()
    try:
        from rfrisk import _csums
    except ImportError:
        _csums = None
        print("compiled extension not built; numpy timings only")
    print(f"{'modes':>9} {'numpy (us)':>12} {'cython (us)':>12} {'speedup':>8}")
    for m in (1_000, 10_000, 100_000, 1_000_000):
        lam = np.arange(1, m + 1, dtype=float) ** -1.5
        vsq, w = lam.copy(), np.ones(m)
        number = max(1, 200_000 // m)
        t_np = min(timeit.repeat(lambda: _sums.weighted_sums_numpy(lam, vsq, w, 1e-3),
                                 number=number, repeat=args.repeat)) / number
        row = f"{m:>9} {t_np * 1e6:>12.1f}"
        if _csums is not None:
            t_c = min(timeit.repeat(lambda: _csums.weighted_sums(lam, vsq, w, 1e-3),
                                    number=number, repeat=args.repeat)) / number
            row += f" {t_c * 1e6:>12.1f} {t_np / t_c:>8.2f}"
        print(row)
    print("\nfull rf_risk solve (10^4 modes + tail):")
    for flag in ("0", "1"):
        env = dict(os.environ, RFRISK_PURE_PYTHON=flag)
        out = subprocess.run([sys.executable, "-c", SOLVE.format(r=max(3, args.repeat // 4))],
                             env=env, capture_output=True, text=True, check=True)
        name, secs = out.stdout.split()
        print(f"  {name:>7}: {float(secs) * 1e3:.2f} ms")


if __name__ == "__main__":
    main()
