"""Benchmark the compiled gradient kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--n N] [--d D] [--b B] [--reps R]
"""

import argparse
import timeit

import numpy as np

from svradmm import _kernels_py as kpy

try:
    from svradmm import _kernels_c as kc
except ImportError:
    kc = None


def bench(fn, reps):
    return min(timeit.repeat(fn, number=reps, repeat=5)) / reps


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--d", type=int, default=100)
    ap.add_argument("--b", type=int, default=16)
    ap.add_argument("--reps", type=int, default=200)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    Z = rng.standard_normal((args.n, args.d))
    o = np.sign(rng.standard_normal(args.n))
    x = rng.standard_normal(args.d)
    xs = rng.standard_normal(args.d)
    idx = rng.choice(args.n, args.b, replace=False)
    z_snap = kpy.full_gradient(Z, o, 0, 0.01, xs)

    backends = [("python", kpy)] + ([("c", kc)] if kc else [])
    cases = {
        "full_gradient": lambda k: k.full_gradient(Z, o, 0, 0.01, x),
        "batch_gradient": lambda k: k.batch_gradient(Z, o, 0, 0.01, x, idx),
        "vr_gradient": lambda k: k.vr_gradient(Z, o, 0, 0.01, x, xs, z_snap,
                                               idx),
        "total_loss": lambda k: k.total_loss(Z, o, 0, 0.01, x),
    }
    print(f"n={args.n} d={args.d} b={args.b} reps={args.reps}")
    print(f"{'kernel':<16}" + "".join(f"{name:>12}" for name, _ in backends)
          + ("     speedup" if kc else ""))
    for cname, call in cases.items():
        times = [bench(lambda k=kern: call(k), args.reps)
                 for _, kern in backends]
        row = f"{cname:<16}" + "".join(f"{t * 1e6:>10.1f}us" for t in times)
        if kc:
            row += f"{times[0] / times[1]:>11.2f}x"
        print(row)


if __name__ == "__main__":
    main()
