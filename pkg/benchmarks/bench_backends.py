"""Compare the compiled kernels with the NumPy fallback.

    python benchmarks/bench_backends.py [--n 1000] [--repeat 5]

The bootstrap row contrasts the gemm path used by both backends with a
per-replicate call into the compiled pair sum.
"""

import argparse
import timeit

import numpy as np

from klcetest import _pure

try:
    from klcetest import _ext
except ImportError:
    _ext = None


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--d", type=int, default=3)
    ap.add_argument("--bootstrap", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    X = rng.standard_normal((args.n, args.d))
    Q = rng.standard_normal((args.n // 4, args.d))
    e = rng.uniform(-1, 1, args.n)
    M = _pure.rbf_gram(X, 1.0)
    y, w = rng.standard_normal(args.n), np.ones(args.n)
    idx = rng.integers(0, args.n, (args.bootstrap, args.n))

    cases = {
        "rbf_gram": (lambda: _pure.rbf_gram(X, 1.0), lambda: _ext.rbf_gram(X, 1.0)),
        "rbf_cross": (lambda: _pure.rbf_cross(Q, X, 1.0), lambda: _ext.rbf_cross(Q, X, 1.0)),
        "offdiag_quadratic": (lambda: _pure.offdiag_quadratic(e, M),
                              lambda: _ext.offdiag_quadratic(e, M)),
        "pava": (lambda: _pure.pava(y, w), lambda: _ext.pava(y, w)),
        f"bootstrap x{args.bootstrap}": (
            lambda: _pure.bootstrap_offdiag(e, M, idx),
            lambda: [_ext.offdiag_quadratic(np.ascontiguousarray(e[r]), M) for r in idx]),
    }
    print(f"n={args.n} d={args.d}, best of {args.repeat} (seconds)")
    print(f"{'kernel':<22}{'pure':>12}{'compiled':>12}{'speedup':>10}")
    for name, (pure, comp) in cases.items():
        tp = best(pure, args.repeat)
        if _ext is None:
            print(f"{name:<22}{tp:>12.5f}{'n/a':>12}{'':>10}")
            continue
        tc = best(comp, args.repeat)
        print(f"{name:<22}{tp:>12.5f}{tc:>12.5f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
