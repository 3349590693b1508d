"""Compare the numba kernels against the pure-numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--sizes 10 30 60] [--repeat 20]

Each kernel is compiled once before timing; reported times are the best of
``--repeat`` runs. Results of both backends are checked for agreement.
"""
import argparse
import timeit

import numpy as np

from bmforge import _kernels


def cases(n, p, rng):
    m = n
    A = rng.standard_normal((m, n, n))
    A = A + A.transpose(0, 2, 1)
    X = rng.standard_normal((n, n))
    X = X + X.T
    V = rng.standard_normal((n, p))
    g = rng.standard_normal(m)
    k = n * p - m // 2
    B = rng.standard_normal((k, n, p))
    offsets = np.arange(0, n + 1, 2 if n % 2 == 0 else 1, dtype=np.int64)
    return {
        "apply_A": (A, X),
        "adjoint": (A, g),
        "jacobian": (A, V),
        "hessian_form": (X, B),
        "row_normalize": (V,),
        "block_normalize": (V, offsets),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[10, 30, 60])
    ap.add_argument("--p", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if _kernels.numba_impl is None:
        raise SystemExit("numba is not installed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'n':>5}{'numpy [us]':>14}{'numba [us]':>14}{'speedup':>10}")
    for n in args.sizes:
        for name, inputs in cases(n, args.p, rng).items():
            f_np = getattr(_kernels.numpy_impl, name)
            f_nb = getattr(_kernels.numba_impl, name)
            ref = f_np(*inputs)
            got = f_nb(*inputs)  # compiles
            if not np.allclose(ref, got, rtol=1e-10, atol=1e-10):
                raise SystemExit(f"{name}: backends disagree at n={n}")
            t_np = min(timeit.repeat(lambda: f_np(*inputs), number=1, repeat=args.repeat))
            t_nb = min(timeit.repeat(lambda: f_nb(*inputs), number=1, repeat=args.repeat))
            print(f"{name:<16}{n:>5}{t_np * 1e6:>14.1f}{t_nb * 1e6:>14.1f}"
                  f"{t_np / t_nb:>10.2f}")


if __name__ == "__main__":
    main()
