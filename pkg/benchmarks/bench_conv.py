#!/usr/bin/env python3
"""Benchmark the compiled conv kernels against the NumPy fallback.

Shapes mirror the hot paths: template batches through small conv stacks and
the many-crop batches of texture optimization.
"""

import time

import numpy as np

from divsynth.kernels import _ref

try:
    from divsynth.kernels import _convkernels
except ImportError:
    _convkernels = None

CASES = [
    ("templates 6x1x16x16, 4 kernels 7x7", (6, 1, 16, 16), (4, 1, 7, 7), 1),
    ("texture crops 289x1x16x16, 4 kernels 7x7", (289, 1, 16, 16), (4, 1, 7, 7), 1),
    ("rgb batch 8x3x24x24, 8 kernels 5x5", (8, 3, 24, 24), (8, 3, 5, 5), 1),
    ("strided 16x4x32x32, 8 kernels 3x3 s2", (16, 4, 32, 32), (8, 4, 3, 3), 2),
]


def time_call(fn, *args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    rng = np.random.default_rng(0)
    backends = [("python", _ref)]
    if _convkernels is not None:
        backends.append(("cython", _convkernels))
    else:
        print("compiled kernels not built; showing the fallback only\n")

    header = f"{'case':45} {'pass':9}" + "".join(f"{name:>12}" for name, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label, xshape, wshape, stride in CASES:
        x = rng.standard_normal(xshape)
        w = rng.standard_normal(wshape)
        y = _ref.conv2d_forward(x, w, stride)
        gy = rng.standard_normal(y.shape)
        for passname, call in (
            ("forward", lambda impl: impl.conv2d_forward(x, w, stride)),
            ("bwd in", lambda impl: impl.conv2d_backward_input(gy, w, x.shape, stride)),
            ("bwd kern", lambda impl: impl.conv2d_backward_kernel(gy, x, wshape[2:], stride)),
        ):
            times = [time_call(call, impl) for _, impl in backends]
            row = f"{label:45} {passname:9}" + "".join(f"{t * 1e3:10.2f}ms" for t in times)
            if len(times) == 2:
                row += f"{times[0] / times[1]:9.1f}x"
            print(row)


if __name__ == "__main__":
    main()
