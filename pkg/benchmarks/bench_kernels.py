"""Compare the numba kernels with their numpy fallbacks.

Run: python benchmarks/bench_kernels.py [--repeat N]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from odopal import kernels
from odopal._accel import HAS_NUMBA
from odopal.colour import build_palette


def _best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def _with_backend(name, fn):
    saved = kernels._assign_impl, kernels._transfer_impl, kernels._fill_impl
    if name == "numba":
        impls = kernels._assign_labels_nb, kernels._transfer_pass_nb, kernels._polygon_fill_nb
    else:
        impls = kernels._assign_labels_np, kernels._transfer_pass_np, kernels._polygon_fill_np
    kernels._assign_impl, kernels._transfer_impl, kernels._fill_impl = impls
    try:
        return fn()
    finally:
        kernels._assign_impl, kernels._transfer_impl, kernels._fill_impl = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not HAS_NUMBA:
        print("numba not available; nothing to compare")
        return

    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 256, (200_000, 3)).astype(np.float64)
    centroids = rng.integers(0, 256, (5, 3)).astype(np.float64)
    labels = rng.integers(0, 5, pixels.shape[0]).astype(np.int64)
    counts = np.bincount(labels, minlength=5).astype(np.int64)
    ang = np.sort(rng.uniform(0, 2 * np.pi, 64))
    xs = 500 + 400 * np.cos(ang) * rng.uniform(0.6, 1.0, 64)
    ys = 500 + 400 * np.sin(ang) * rng.uniform(0.6, 1.0, 64)
    part = rng.integers(0, 256, (40_000, 3))

    cases = [
        ("assign 200k x 5", lambda: kernels.assign_labels(pixels, centroids)),
        ("transfer pass 200k x 5", lambda: kernels.transfer_pass(pixels, labels.copy(), centroids.copy(),
                                                                 counts.copy())),
        ("fill 64-gon 1000x1000", lambda: kernels.polygon_fill(xs, ys, 1000, 1000)),
        ("build_palette 40k px", lambda: build_palette(part, 5, seed=0)),
    ]
    # compile once
    _with_backend("numba", lambda: [fn() for _, fn in cases])

    print(f"{'case':26s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speedup':>8s}")
    for name, fn in cases:
        t_nb = _with_backend("numba", lambda: _best_of(fn, args.repeat))
        t_np = _with_backend("numpy", lambda: _best_of(fn, args.repeat))
        print(f"{name:26s} {t_nb * 1e3:11.2f} {t_np * 1e3:11.2f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
