"""Time the compiled kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from graphpde import _kernels_py

try:
    from graphpde import _kernels as compiled
except ImportError:
    compiled = None


def cases():
    rng = np.random.default_rng(0)
    pts = rng.random((2000, 2))
    deg = rng.integers(4, 8, size=3000)
    indptr = np.concatenate([[0], np.cumsum(deg)]).astype(np.int64)
    values = rng.standard_normal((int(indptr[-1]), 60))
    act = np.tanh(rng.standard_normal((18000, 60)))
    grad = rng.standard_normal((18000, 60))
    return [
        ("bowyer_watson 2000 pts", "bowyer_watson", (pts,)),
        ("segment_sum 3000 x 60", "segment_sum", (indptr, values)),
        ("tanh_grad 18000 x 60", "tanh_grad_inplace", (grad, act)),
    ]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if compiled is None:
        print("compiled extension not built; only the fallback is timed")
    print(f"{'kernel':28s} {'python ms':>10s} {'compiled ms':>12s} {'speedup':>8s}")
    for label, name, call_args in cases():
        py = getattr(_kernels_py, name)
        n = 1 if name == "bowyer_watson" else args.repeat
        t_py = min(timeit.repeat(lambda: py(*[np.copy(a) for a in call_args]), number=1, repeat=n)) * 1e3
        if compiled is None:
            print(f"{label:28s} {t_py:10.2f} {'-':>12s} {'-':>8s}")
            continue
        fn = getattr(compiled, name)
        t_c = min(timeit.repeat(lambda: fn(*[np.copy(a) for a in call_args]), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:28s} {t_py:10.2f} {t_c:12.2f} {t_py / t_c:7.1f}x")


if __name__ == "__main__":
    main()
