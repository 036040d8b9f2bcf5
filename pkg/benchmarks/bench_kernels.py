"""Compare compiled and numpy kernels on the default network's layer shapes.

    python benchmarks/bench_kernels.py [--repeat 20] [--dtype float32]

Prints median milliseconds per call and the max abs difference between
backends. Also times one full forward+backward pass of the default network
under each backend.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from convprobe import kernels
from convprobe.network import build_network, default_spec

# (batch, in channels, time, out channels, kernel) as seen inside the default net
CONV_SHAPES = [
    (32, 8, 522, 25, 10),
    (32, 25, 171, 50, 10),
    (32, 50, 54, 100, 10),
    (32, 100, 15, 200, 10),
]


def _median_ms(fn, repeat: int) -> float:
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return 1e3 * float(np.median(times))


def bench_convs(repeat: int, dtype) -> None:
    rng = np.random.default_rng(0)
    names = kernels.available_backends()
    print(f"conv1d ({np.dtype(dtype).name}), median ms: forward / backward-input / backward-weight")
    for B, C, T, O, K in CONV_SHAPES:
        x = rng.standard_normal((B, C, T)).astype(dtype)
        w = rng.standard_normal((O, C, K)).astype(dtype)
        b = rng.standard_normal(O).astype(dtype)
        go = rng.standard_normal((B, O, T - K + 1)).astype(dtype)
        row = []
        outs = {}
        for name in names:
            m = kernels.get_backend(name)
            f = _median_ms(lambda: m.conv1d_forward(x, w, b), repeat)
            bi = _median_ms(lambda: m.conv1d_backward_input(go, w, T), repeat)
            bw = _median_ms(lambda: m.conv1d_backward_weight(go, x, K), repeat)
            outs[name] = m.conv1d_forward(x, w, b)
            row.append(f"{name}: {f:7.2f} / {bi:7.2f} / {bw:7.2f}")
        diff = ""
        if len(outs) == 2:
            diff = f"  max|diff| {np.max(np.abs(outs['cython'] - outs['python'])):.2e}"
        print(f"  x={(B, C, T)} w={(O, C, K)}  " + "  ".join(row) + diff)


def bench_pool(repeat: int, dtype) -> None:
    rng = np.random.default_rng(1)
    x = rng.standard_normal((32, 25, 513)).astype(dtype)
    print("maxpool1d (32, 25, 513) size 3 stride 3, median ms: forward / backward")
    for name in kernels.available_backends():
        m = kernels.get_backend(name)
        out, idx = m.maxpool1d_forward(x, 3, 3)
        go = np.ones_like(out)
        f = _median_ms(lambda: m.maxpool1d_forward(x, 3, 3), repeat)
        b = _median_ms(lambda: m.maxpool1d_backward(go, idx, 513), repeat)
        print(f"  {name}: {f:7.2f} / {b:7.2f}")


def bench_network(repeat: int) -> None:
    net = build_network(default_spec(), 0)
    rng = np.random.default_rng(2)
    x = rng.standard_normal((32, 8, 522)).astype(np.float32)
    y = rng.integers(0, 2, 32)
    print("default network, batch 32, median ms: forward / loss+gradients")
    for name in kernels.available_backends():
        with kernels.use_backend(name):
            f = _median_ms(lambda: net.forward(x), repeat)
            g = _median_ms(lambda: net.loss_and_grads(x, y), repeat)
        print(f"  {name}: {f:7.2f} / {g:7.2f}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    args = ap.parse_args()
    print(f"backends: {kernels.available_backends()} (active: {kernels.BACKEND})")
    bench_convs(args.repeat, np.dtype(args.dtype))
    bench_pool(args.repeat, np.dtype(args.dtype))
    bench_network(max(3, args.repeat // 4))


if __name__ == "__main__":
    main()
