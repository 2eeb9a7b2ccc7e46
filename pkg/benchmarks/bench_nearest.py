"""Time the compiled and numpy nearest-foreground transforms.

    python3 benchmarks/bench_nearest.py [--sizes 64 128 288 352] [--repeat 5]

Both backends are checked for identical output before timing.
"""

import argparse
import timeit

import numpy as np

from adsnet import kernels


def blob_mask(side: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[:side, :side]
    m = np.zeros((side, side), dtype=bool)
    for _ in range(3):
        cy, cx = rng.uniform(0.2, 0.8, 2) * side
        m |= np.hypot(yy - cy, xx - cx) < rng.uniform(0.05, 0.2) * side
    return m


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 288, 352])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if kernels.nearest_foreground_compiled is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation` first")

    print(f"{'side':>6} {'python ms':>11} {'compiled ms':>12} {'speedup':>8}")
    for side in args.sizes:
        m = blob_mask(side, side)
        for a, b in zip(kernels.nearest_foreground_python(m), kernels.nearest_foreground_compiled(m)):
            np.testing.assert_array_equal(a, b)
        py = min(timeit.repeat(lambda: kernels.nearest_foreground_python(m), number=1, repeat=args.repeat))
        cc = min(timeit.repeat(lambda: kernels.nearest_foreground_compiled(m), number=1, repeat=args.repeat))
        print(f"{side:>6} {py * 1e3:>11.2f} {cc * 1e3:>12.3f} {py / cc:>7.1f}x")


if __name__ == "__main__":
    main()
