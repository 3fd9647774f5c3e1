"""Compare the compiled and NumPy kernels on Shepard and MLS grid evaluation.

    python benchmarks/bench_backends.py [--h 0.02] [--repeats 5]

Prints the median single-threaded time per backend and degree, the speed-up,
and the multi-threaded compiled time.
"""
import argparse
import statistics
import time

import numpy as np

from msqi import _backend
from msqi.pointset import Domain, grid_axes, grid_points, halton_tile
from msqi.quasi_interp import QuasiInterpolant


def median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", type=float, default=0.02, help="fill distance of the site set")
    ap.add_argument("--nu", type=float, default=3.0)
    ap.add_argument("--grid-step", type=float, default=0.01)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    D = Domain(-1, 1, -1, 1)
    X = halton_tile(D, args.h)
    delta = args.nu * args.h
    pts = grid_points(*grid_axes(D.inset(delta), args.grid_step))
    vals = np.sin(3 * X.sites[:, 0]) * np.cos(2 * X.sites[:, 1])
    backends = _backend.available()
    print(f"{len(X)} sites, {len(pts)} grid nodes, delta={delta:g}, backends={backends}")
    print(f"{'degree':>6} {'backend':>8} {'1 thread [s]':>13} {'all threads [s]':>16}")
    for degree in (0, 1, 2):
        base = None
        for name in backends:
            op = QuasiInterpolant(X, vals, delta, degree, backend=name)
            with _backend.single_threaded():
                t1 = median_time(lambda: op.evaluate_many(pts), args.repeats)
            tn = median_time(lambda: op.evaluate_many(pts), args.repeats)
            ref = op.evaluate_many(pts)
            if base is None:
                base = (t1, ref)
                extra = ""
            else:
                diff = np.nanmax(np.abs(ref - base[1]))
                extra = f"  speed-up x{base[0] / t1:.1f}, max diff {diff:.1e}"
            print(f"{degree:>6} {name:>8} {t1:>13.4f} {tn:>16.4f}{extra}")


if __name__ == "__main__":
    main()
