#!/usr/bin/env python3
"""Benchmark of the two kernel backends (compiled extension vs numpy).

Times conv2d and maxpool2d, forward and backward, at the shapes the
desk-scale and full-size extractors actually use. Run after building the
extension in place:

    python setup.py build_ext --inplace
    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from wadapt.kernels import available_backends

CONV_CASES = [
    # name, x shape, w shape, stride, padding
    ("toy conv1   16x1x64x64  k3 s(2,2)", (16, 1, 64, 64), (8, 1, 3, 3), (2, 2), (1, 1)),
    ("toy conv2   16x8x16x16  k3 s(2,2)", (16, 8, 16, 16), (16, 8, 3, 3), (2, 2), (1, 1)),
    ("full conv1  16x1x64x64  k11 s(2,3)", (16, 1, 64, 64), (48, 1, 11, 11), (2, 3), (5, 5)),
    ("full conv2  16x48x32x11 k5 s(2,3)", (16, 48, 32, 11), (128, 48, 5, 5), (2, 3), (2, 2)),
    ("full conv3  16x128x8x2  k3 s(1,1)", (16, 128, 8, 2), (192, 128, 3, 3), (1, 1), (1, 1)),
]

POOL_CASES = [
    ("toy pool    16x8x32x32  k3 s(2,2)", (16, 8, 32, 32), 3, (2, 2), (1, 1)),
    ("full pool1  16x48x32x22 k3 s(1,2)", (16, 48, 32, 22), 3, (1, 2), (1, 1)),
]


def timeit(fn, reps=30):
    fn()
    best = np.inf
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(reps):
            fn()
        best = min(best, (time.perf_counter() - t0) / reps)
    return best * 1e3


def main():
    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    rng = np.random.default_rng(0)

    header = f"{'case':38s} {'dir':4s}" + "".join(f" {name:>10s}" for name in backends)
    if len(backends) == 2:
        header += f" {'speedup':>9s}"
    print(header)
    print("-" * len(header))

    def row(name, direction, times):
        line = f"{name:38s} {direction:4s}" + "".join(f" {t:8.2f}ms" for t in times)
        if len(times) == 2 and times[1] > 0:
            line += f" {times[0] / times[1]:8.2f}x"
        print(line)

    for name, xs, ws, stride, pad in CONV_CASES:
        x = rng.normal(size=xs)
        w = rng.normal(size=ws)
        b = rng.normal(size=ws[0])
        fwd_times, bwd_times = [], []
        for mod in backends.values():
            out, cache = mod.conv2d_forward(x, w, b, stride, pad)
            g = rng.normal(size=out.shape)
            fwd_times.append(timeit(lambda m=mod: m.conv2d_forward(x, w, b, stride, pad)))
            bwd_times.append(timeit(
                lambda m=mod, c=cache: m.conv2d_backward(g, x, w, stride, pad, c)))
        row(name, "fwd", fwd_times)
        row(name, "bwd", bwd_times)

    for name, xs, kernel, stride, pad in POOL_CASES:
        x = rng.normal(size=xs)
        fwd_times, bwd_times = [], []
        for mod in backends.values():
            out, idx = mod.maxpool2d_forward(x, kernel, stride, pad)
            g = rng.normal(size=out.shape)
            fwd_times.append(timeit(lambda m=mod: m.maxpool2d_forward(x, kernel, stride, pad)))
            bwd_times.append(timeit(
                lambda m=mod, i=idx: m.maxpool2d_backward(g, x.shape, kernel, stride, pad, i)))
        row(name, "fwd", fwd_times)
        row(name, "bwd", bwd_times)


if __name__ == "__main__":
    main()
