"""Time the numba and numpy implementations of the ESP kernels side by side.

    python3 benchmarks/bench_backends.py --dims 5,10,20,40 --n 200 --order 5

Both backends are imported in one process through ``esp.BACKENDS``, so the
environment flag is not needed here. Results are checked for agreement
before timing.
"""

import argparse
import time

import numpy as np

from fanova_shapley import esp


def best_of(func, repeats):
    func()  # compile / warm caches
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        func()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(d, n, order, rng):
    Z = rng.normal(size=(d, n))
    w = rng.uniform(size=order)
    zbar = rng.uniform(0.1, 1.0, size=d)
    grams = rng.normal(size=(d, n * 8))
    return {
        "esp_stable": (grams, order),
        "loo": (Z, w),
        "pair": (zbar, w[: max(1, order - 1)]),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", default="5,10,20,40")
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--order", type=int, default=5)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    print("kernel,d,numba_seconds,numpy_seconds,speedup")
    for d in [int(t) for t in args.dims.split(",")]:
        for name, call_args in cases(d, args.n, args.order, rng).items():
            fast = esp.BACKENDS["numba"][name]
            slow = esp.BACKENDS["numpy"][name]
            np.testing.assert_allclose(fast(*call_args), slow(*call_args), rtol=1e-10, atol=1e-12)
            t_fast = best_of(lambda: fast(*call_args), args.repeats)
            t_slow = best_of(lambda: slow(*call_args), args.repeats)
            print(f"{name},{d},{t_fast:.3e},{t_slow:.3e},{t_slow / t_fast:.1f}")


if __name__ == "__main__":
    main()
