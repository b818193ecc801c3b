"""Compare the compiled and NumPy convolution lowering kernels.

    python3 benchmarks/bench_kernels.py [--repeat N]

Times im2col, col2im and a full conv2d forward+backward at shapes taken from
the network (48x48 training patches, 64 channels, 3x3 and 5x5 paths) with each
backend swapped in, and prints the median wall time and speedup.
"""
import argparse
import statistics
import time

import numpy as np

from mgan import _kernels_py, kernels, ops
from mgan.autograd import Tensor

try:
    from mgan import _kernels as _compiled
except ImportError:
    _compiled = None

CASES = [
    # (N, C, H, W, k)
    (1, 64, 48, 48, 3),
    (1, 64, 48, 48, 5),
    (4, 64, 48, 48, 3),
    (1, 192, 48, 48, 3),
    (16, 16, 24, 24, 3),
]


def _median_time(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def _conv_step(x, w, b):
    def run():
        xt = Tensor(x, requires_grad=True)
        out = ops.conv2d(xt, Tensor(w, requires_grad=True), Tensor(b, requires_grad=True), padding=w.shape[-1] // 2)
        out.backward(np.ones_like(out.data))
    return run


def bench(impl, case, repeat):
    N, C, H, W, k = case
    rng = np.random.default_rng(0)
    x = rng.standard_normal((N, C, H, W)).astype(np.float32)
    w = (rng.standard_normal((64, C, k, k)) * 0.01).astype(np.float32)
    b = np.zeros(64, np.float32)
    p = k // 2
    cols = impl.im2col(x, k, k, 1, p)
    saved = kernels.im2col, kernels.col2im
    kernels.im2col, kernels.col2im = impl.im2col, impl.col2im
    try:
        return {
            "im2col": _median_time(lambda: impl.im2col(x, k, k, 1, p), repeat),
            "col2im": _median_time(lambda: impl.col2im(cols, x.shape, k, k, 1, p), repeat),
            "conv fwd+bwd": _median_time(_conv_step(x, w, b), repeat),
        }
    finally:
        kernels.im2col, kernels.col2im = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _compiled is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation` first")
    print(f"{'shape':<22}{'kernel':<14}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}")
    for case in CASES:
        py = bench(_kernels_py, case, args.repeat)
        cy = bench(_compiled, case, args.repeat)
        label = "x".join(map(str, case[:4])) + f" k{case[4]}"
        for name in py:
            print(f"{label:<22}{name:<14}{py[name] * 1e3:>10.2f}{cy[name] * 1e3:>11.2f}{py[name] / cy[name]:>8.2f}x")


if __name__ == "__main__":
    main()
