"""Time the compiled kernels against the NumPy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from adanca.numerics import _pykernels as py
from adanca.numerics import kernels


def cases():
    g = np.random.default_rng(0)
    x = g.normal(size=(64, 8, 8, 64)).astype(np.float32)
    k = g.normal(size=(64, 3, 3)).astype(np.float32)
    flat = g.normal(size=64 * 64 * 320).astype(np.float32)
    state = np.array([1, 2, 3, 4], dtype=np.uint64)
    out = np.empty(100_000, np.uint64)
    return [
        ("dwconv_forward  [64,8,8,64] d=2", lambda m: m.dwconv_forward(x, k, 2)),
        ("dwconv_backward_input", lambda m: m.dwconv_backward_input(x, k, 2)),
        ("dwconv_backward_kernel", lambda m: m.dwconv_backward_kernel(x, x, 3, 2)),
        ("gelu_forward    1.3M float32", lambda m: m.gelu_forward(flat)),
        ("xoshiro_fill    100k draws", lambda m: m.xoshiro_fill(state, out)),
    ]


def best_ms(fn, repeat):
    return 1e3 * min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    compiled = kernels.compiled_backend
    if compiled is None:
        print("compiled extension not built; only the fallback is timed")
    print(f"{'kernel':34s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, run in cases():
        repeat = 1 if name.startswith("xoshiro") else args.repeat
        t_py = best_ms(lambda: run(py), repeat)
        if compiled is None:
            print(f"{name:34s} {t_py:10.2f}")
            continue
        t_c = best_ms(lambda: run(compiled), args.repeat)
        print(f"{name:34s} {t_py:10.2f} {t_c:10.2f} {t_py / t_c:7.1f}x")


if __name__ == "__main__":
    main()
