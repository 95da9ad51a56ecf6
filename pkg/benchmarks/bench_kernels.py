"""Time the compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``.
"""
import timeit

import numpy as np

from mdeflow._backend import compiled_kernels, python_kernels


def cases(rng):
    n = 20_000
    x = np.sort(rng.normal(size=n))
    y = np.sort(rng.normal(size=n))
    cw = np.cumsum(np.full(n, 1.0 / n))
    cw[-1] = 1.0
    cwy = np.cumsum(rng.dirichlet(np.ones(n)))
    cwy[-1] = 1.0
    a, b = rng.normal(size=(800, 2)), rng.normal(size=(800, 2))
    C = python_kernels.cost_matrix(a, b, 2.0)
    g, logb = rng.normal(size=800), np.full(800, -np.log(800))
    return {
        "wasserstein_1d_pow (20k x 20k)": lambda k: k.wasserstein_1d_pow(x, cw, y, cwy, 2.0),
        "systematic_indices (20k -> 10k)": lambda k: k.systematic_indices(cwy, 10_000, 0.37),
        "cost_matrix (800 x 800, p=2)": lambda k: k.cost_matrix(a, b, 2.0),
        "softmin_rows (800 x 800)": lambda k: k.softmin_rows(C, g, logb, 0.05),
    }


def main():
    if compiled_kernels is None:
        raise SystemExit("compiled extension not built; run pip install -e . --no-build-isolation")
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'python ms':>10s} {'compiled ms':>12s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        t = {}
        for label, k in (("python", python_kernels), ("compiled", compiled_kernels)):
            r = timeit.Timer(lambda: fn(k)).autorange()
            t[label] = min(timeit.repeat(lambda: fn(k), number=r[0], repeat=5)) / r[0] * 1e3
        print(f"{name:34s} {t['python']:10.3f} {t['compiled']:12.3f} {t['python'] / t['compiled']:8.2f}x")


if __name__ == "__main__":
    main()
