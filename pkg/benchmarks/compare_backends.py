"""Compiled vs pure-Python kernel timings, plus the dense reference.

    python3 benchmarks/compare_backends.py [--sizes 256,1024] [--blocks 4,8,16] [--reps 50]
"""

import argparse
import time

import numpy as np

from circrnn import _backend
from circrnn.bench import bench_case, machine_note


def _fft_time(name, k, rows, reps):
    a = np.random.default_rng(0).standard_normal((rows, k)).astype(complex)
    kern = _backend.load(name)
    kern.fft_rows(a, False)
    t0 = time.perf_counter()
    for _ in range(reps):
        kern.fft_rows(a, False)
    return (time.perf_counter() - t0) / reps


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="256,1024")
    ap.add_argument("--blocks", default="4,8,16")
    ap.add_argument("--reps", type=int, default=50)
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    blocks = [int(s) for s in args.blocks.split(",")]
    names = _backend.available()
    print(machine_note())
    print(f"backends: {', '.join(names)}")
    if "compiled" not in names:
        print("compiled extension not built; only the Python fallback is timed")

    print(f"\nblock matvec, microseconds per call (median of {args.reps})")
    print(f"{'n':>6} {'k':>4} {'dense':>10}" + "".join(f"{n:>12}" for n in names))
    for n in sizes:
        for k in blocks:
            rows = bench_case(n, k, args.reps, backends=names)
            by = {r.backend: r.seconds_per_matvec * 1e6 for r in rows if r.path == "fft"}
            dense = rows[0].seconds_per_matvec * 1e6
            print(f"{n:>6} {k:>4} {dense:>10.1f}" + "".join(f"{by[b]:>12.1f}" for b in names))

    print("\nrow-wise FFT of a (n/k, k) batch, microseconds per call")
    print(f"{'n':>6} {'k':>4}" + "".join(f"{n:>12}" for n in names))
    for n in sizes:
        for k in blocks:
            print(f"{n:>6} {k:>4}" + "".join(f"{_fft_time(b, k, n // k, args.reps) * 1e6:>12.1f}" for b in names))


if __name__ == "__main__":
    main()
