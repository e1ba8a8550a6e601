"""Time the numba kernels against their numpy fallbacks.

Run with ``python benchmarks/bench_kernels.py``. The first numba call is
made before timing so compilation is excluded.
"""

import timeit

import numpy as np

from mdlina import _kernels as K


def _cases(rng):
    F = rng.standard_normal((5, 2000))
    B = np.tril(rng.standard_normal((5, 5)), -1)
    x = rng.standard_normal(1000)
    y = rng.standard_normal(1000)
    return {
        "abs_residuals q=5 n=2000": (K.abs_residuals, K.abs_residuals_numpy, (F, B, 1e-8)),
        "hsic_moments m=1000": (K.hsic_moments, K.hsic_moments_numpy, (x, y, 1.0, 1.0)),
        "median_abs_diff m=1000": (K.median_abs_diff, K.median_abs_diff_numpy, (x,)),
    }


def main(repeat=5):
    if not K.HAVE_NUMBA:
        print("numba unavailable or disabled; only the numpy path exists")
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, (fast, slow, args) in _cases(rng).items():
        fast(*args)
        number = 5
        tf = min(timeit.repeat(lambda: fast(*args), number=number, repeat=repeat)) / number
        ts = min(timeit.repeat(lambda: slow(*args), number=number, repeat=repeat)) / number
        print(f"{name:28s} {tf * 1e3:10.3f} {ts * 1e3:10.3f} {ts / tf:8.1f}")


if __name__ == "__main__":
    main()
