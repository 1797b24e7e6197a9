"""Compiled kernels versus the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--sizes 8 32 128]

Prints median seconds per call and the speed-up for the assignment solver
and the RLE codec. Both backends are checked to agree before timing.
"""
import argparse
import statistics
import sys
import timeit

import numpy as np

from querytrack import kernels


def _time(fn, repeat, number):
    return statistics.median(timeit.repeat(fn, repeat=repeat, number=number)) / number


def bench_solver(sizes, repeat):
    rng = np.random.default_rng(0)
    rows = []
    for n in sizes:
        cost = rng.uniform(size=(n, n))
        a = kernels.solve_square(cost, "compiled")
        b = kernels.solve_square(cost, "python")
        assert np.array_equal(a, b), f"backends disagree at n={n}"
        number = max(1, 2000 // (n * n))
        rows.append((f"solve {n}x{n}",
                     _time(lambda: kernels.solve_square(cost, "compiled"), repeat, number),
                     _time(lambda: kernels.solve_square(cost, "python"), repeat, number)))
    return rows


def bench_rle(sizes, repeat):
    rng = np.random.default_rng(1)
    rows = []
    for n in sizes:
        # disk-like blobs, the shape masks actually have
        yy, xx = np.mgrid[0:n, 0:n]
        mask = (yy - n / 2) ** 2 + (xx - n / 3) ** 2 < (n / 4) ** 2
        mask ^= rng.random((n, n)) < 0.01
        runs = kernels.rle_encode(mask, "compiled")
        assert list(runs) == list(kernels.rle_encode(mask, "python"))
        number = max(1, 20000 // (n * n) + 1)
        rows.append((f"encode {n}x{n}",
                     _time(lambda: kernels.rle_encode(mask, "compiled"), repeat, number),
                     _time(lambda: kernels.rle_encode(mask, "python"), repeat, number)))
        rows.append((f"decode {n}x{n}",
                     _time(lambda: kernels.rle_decode(runs, n * n, "compiled"), repeat, number),
                     _time(lambda: kernels.rle_decode(runs, n * n, "python"), repeat, number)))
    return rows


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--sizes", type=int, nargs="+", default=[4, 16, 64, 128])
    args = p.parse_args(argv)
    if kernels.BACKEND != "compiled":
        print("compiled extension not available; build it with `pip install --no-build-isolation -e .`",
              file=sys.stderr)
        return 1
    rows = bench_solver(args.sizes, args.repeat) + bench_rle(args.sizes, args.repeat)
    print(f"{'kernel':<16}{'compiled':>14}{'fallback':>14}{'speed-up':>10}")
    for name, fast, slow in rows:
        print(f"{name:<16}{fast * 1e6:>12.1f}us{slow * 1e6:>12.1f}us{slow / fast:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
