"""Time the compiled raster kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Both backends are checked for identical output before timing.
"""

import argparse
import time

import numpy as np

from smokeynet import kernels
from smokeynet.preprocess import DESK, FIGLIB


def _star(rng, cx, cy, r, n=40):
    angles = np.sort(rng.uniform(0, 2 * np.pi, n))
    radii = r * rng.uniform(0.4, 1.0, n)
    return cx + radii * np.cos(angles), cy + radii * np.sin(angles)


def cases(rng):
    h, w = FIGLIB.shape
    polys = [_star(rng, rng.uniform(0, w), rng.uniform(0, h), rng.uniform(20, 300)) for _ in range(20)]

    def fill(backend):
        mask = np.zeros((h, w), dtype=np.uint8)
        for xs, ys in polys:
            backend.fill_polygon(mask, np.ascontiguousarray(xs), np.ascontiguousarray(ys))
        return mask

    mask = (rng.random((h, w)) < 0.05).astype(np.uint8)

    def counts(backend):
        return np.asarray(backend.tile_counts(mask, FIGLIB.tile_size, FIGLIB.stride, FIGLIB.rows, FIGLIB.cols))

    prev = rng.random((h, w), dtype=np.float32)
    cur = rng.random((h, w), dtype=np.float32)

    def diff(backend):
        return np.asarray(backend.abs_diff_threshold(prev, cur, 0.1))

    small = (rng.random(DESK.shape) < 0.05).astype(np.uint8)

    def counts_desk(backend):
        return np.asarray(backend.tile_counts(small, DESK.tile_size, DESK.stride, DESK.rows, DESK.cols))

    return {
        "fill_polygon x20 (1040x1856)": fill,
        "tile_counts (1040x1856)": counts,
        "tile_counts (144x256)": counts_desk,
        "abs_diff_threshold (1040x1856)": diff,
    }


def best_of(fn, backend, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn(backend)
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if not kernels.compiled_available():
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    compiled, python = kernels.get_backend("compiled"), kernels.get_backend("python")

    print(f"{'kernel':34s} {'compiled ms':>12s} {'python ms':>10s} {'speedup':>8s}")
    for name, fn in cases(np.random.default_rng(args.seed)).items():
        if not np.array_equal(fn(compiled), fn(python)):
            raise SystemExit(f"{name}: backends disagree")
        tc = best_of(fn, compiled, args.repeat)
        tp = best_of(fn, python, args.repeat)
        print(f"{name:34s} {1e3 * tc:12.3f} {1e3 * tp:10.3f} {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
