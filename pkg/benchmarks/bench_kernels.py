"""Time the numba kernels against their pure-numpy twins.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``. Each kernel is
called once first so compilation is not timed.
"""

import argparse
import timeit

import numpy as np

from nsp import _kernels


def cases(gen):
    logw = np.log(gen.random(40))
    u_urn = gen.random((200, 100))
    a = gen.integers(0, 10, size=2000)
    b = gen.integers(0, 12, size=2000)
    K, D = 30, 2
    ns = gen.integers(1, 50, size=K).astype(float)
    sx = gen.normal(size=(K, D))
    sxx = np.stack([np.eye(D) * n + np.outer(s, s) / n for n, s in zip(ns, sx)])
    x = gen.normal(size=D)
    psi0 = np.eye(D) * 0.05
    return {
        "log_categorical": (logw, 0.37),
        "urn_labels": (100, 1.5, 0.3, 0.0, 0.0, u_urn),
        "co_occupancy": (a, b, 10, 12),
        "niw_log_predictive": (ns, sx, sxx, x, 0.01, 10.0, psi0),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    if _kernels.numba_impl is None:
        raise SystemExit("numba is not installed")
    gen = np.random.default_rng(0)
    print(f"{'kernel':<22}{'numpy (us)':>14}{'numba (us)':>14}{'speedup':>10}")
    for name, call_args in cases(gen).items():
        times = {}
        for impl in (_kernels.numpy_impl, _kernels.numba_impl):
            fn = getattr(impl, name)
            fn(*call_args)
            t = timeit.timeit(lambda: fn(*call_args), number=args.repeat)
            times[impl.name] = 1e6 * t / args.repeat
        print(f"{name:<22}{times['numpy']:>14.2f}{times['numba']:>14.2f}{times['numpy'] / times['numba']:>10.1f}")


if __name__ == "__main__":
    main()
