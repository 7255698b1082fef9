"""Compare the compiled and numpy kernel backends on conv-sized workloads.

Times im2col/col2im directly and a full conv2d forward+backward through
the tensor layer, at the shapes the training loop actually uses.  Run as

    python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from liquiform import backend
from liquiform import tensor as T
from liquiform.tensor import Tensor

CASES = [
    # (label, batch, c_in, h, w, c_out, k, stride)
    ("encoder 64x64", 8, 16, 64, 64, 16, 3, 1),
    ("downsample", 8, 32, 32, 32, 64, 3, 2),
    ("bottleneck", 8, 128, 8, 8, 128, 3, 1),
    ("stem 7x7", 8, 3, 64, 64, 16, 7, 1),
]


def time_call(fn, repeats: int) -> float:
    fn()  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_backend(name: str, repeats: int) -> dict[str, dict[str, float]]:
    backend.select_backend(name)
    rng = np.random.default_rng(0)
    results: dict[str, dict[str, float]] = {}
    for label, b, c_in, h, w, c_out, k, stride in CASES:
        x = rng.random((b, c_in, h, w), dtype=np.float32)
        pad = k // 2
        ho = backend.conv_out_size(h, k, stride, pad)
        wo = backend.conv_out_size(w, k, stride, pad)
        cols = backend.im2col(x, k, k, stride, pad)

        xt = Tensor(x)
        wt = Tensor(rng.random((c_out, c_in, k, k), dtype=np.float32),
                    requires_grad=True)
        bt = Tensor(rng.random(c_out, dtype=np.float32), requires_grad=True)

        def fwd_bwd():
            wt.grad = bt.grad = None
            T.mean_all(T.conv2d(xt, wt, bt, stride=stride, padding=pad)).backward()

        results[label] = {
            "im2col": time_call(lambda: backend.im2col(x, k, k, stride, pad), repeats),
            "col2im": time_call(
                lambda: backend.col2im(cols, b, c_in, h, w, k, k, stride, pad),
                repeats),
            "conv2d fwd+bwd": time_call(fwd_bwd, repeats),
        }
        del ho, wo
    return results


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timed repetitions per case (best is kept)")
    args = parser.parse_args()

    if not backend.ext_available():
        print("compiled extension not built; timing the numpy backend only\n")
        names = ["python"]
    else:
        names = ["python", "ext"]

    timings = {name: bench_backend(name, args.repeats) for name in names}
    backend.select_backend(None)  # restore the environment-driven choice

    width = max(len(label) for label, *_ in CASES)
    for op in ("im2col", "col2im", "conv2d fwd+bwd"):
        print(f"{op}:")
        header = f"  {'case'.ljust(width)}  " + "".join(f"{n:>12}" for n in names)
        if len(names) == 2:
            header += f"{'speedup':>10}"
        print(header)
        for label, *_ in CASES:
            row = f"  {label.ljust(width)}  "
            row += "".join(f"{timings[n][label][op] * 1e3:10.2f}ms" for n in names)
            if len(names) == 2:
                ratio = timings["python"][label][op] / timings["ext"][label][op]
                row += f"{ratio:9.1f}x"
            print(row)
        print()


if __name__ == "__main__":
    main()
