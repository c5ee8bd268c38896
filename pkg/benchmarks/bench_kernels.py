"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends are called explicitly through ``backend=`` so a single process
measures each; results are also checked for bitwise equality.
"""

import argparse
import time

import numpy as np

from itostrat import kernels


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(rng):
    dW = rng.standard_normal((256, 1, 2**14)) * 2**-7
    x0 = np.ones(256)
    sig = np.array([1.0])
    flat = rng.standard_normal((64, 2**14))
    yield "linear_scalar_paths ito_em 256x2^14", lambda b: kernels.linear_scalar_paths(x0, 0.0, sig, dW, 2**-14, "ito_em", True, b)
    yield "linear_scalar_paths strat_heun 256x2^14", lambda b: kernels.linear_scalar_paths(x0, 0.0, sig, dW, 2**-14, "strat_heun", True, b)
    yield "block_sums 64x2^14 /64", lambda b: kernels.block_sums(flat, 64, b)
    yield "compensated_cumsum 64x2^14", lambda b: kernels.compensated_cumsum(flat, b)

    def acc(b):
        total = np.zeros(4096)
        comp = np.zeros(4096)
        for row in flat[:, :4096]:
            kernels.neumaier_accumulate(total, comp, row, b)
        return total + comp

    yield "neumaier_accumulate 64 x 4096", acc


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    try:
        kernels.backend_module("cython")
        have_c = True
    except ImportError:
        have_c = False
    print(f"default backend: {kernels.BACKEND}")
    print(f"{'kernel':42s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s}  equal")
    for name, fn in cases(np.random.default_rng(0)):
        tp, op = _time(lambda: fn("python"), args.repeat)
        if have_c:
            tc, oc = _time(lambda: fn("cython"), args.repeat)
            eq = bool(np.array_equal(op, oc))
            print(f"{name:42s} {tp:11.4f} {tc:11.4f} {tp / tc:8.1f}  {eq}")
        else:
            print(f"{name:42s} {tp:11.4f} {'n/a':>11s} {'':8s}  -")


if __name__ == "__main__":
    main()
