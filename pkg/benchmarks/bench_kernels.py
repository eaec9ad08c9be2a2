"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel and input size with the best-of-N wall time of
each backend and the speedup. Both backends are checked for equal output
first, so a fast wrong kernel cannot look good.
"""

import argparse
import timeit

import numpy as np

from tard._core import compiled_backend, python_backend


def cases(rng):
    for n in (1_000, 100_000):
        s = rng.standard_normal(n)
        yield "window_min", f"n={n}, l=10", (s, 10)
    for n in (64, 256):
        a, b = rng.standard_normal((n, 10)), rng.standard_normal((n, 10))
        gammas = np.array([0.5, 1.0, 2.0, 4.0, 8.0])
        yield "rbf_gram", f"{n}x{n}x10, 5 kernels", (a, b, gammas)
    for n in (200, 20_000):
        scores = rng.integers(0, n // 4, n) / 4.0
        truth = rng.integers(0, 2, n)
        yield "rank_auc", f"n={n}, ties", (scores, truth)


def _same(x, y) -> bool:
    if isinstance(x, tuple):
        return all(_same(a, b) for a, b in zip(x, y))
    return np.allclose(x, y, rtol=1e-12, atol=1e-12)


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    if compiled_backend is None:
        raise SystemExit("compiled backend not built (or TARD_PURE_PYTHON set); nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<11} {'input':<24} {'python ms':>10} {'compiled ms':>12} {'speedup':>8}")
    for name, label, inputs in cases(rng):
        fp, fc = getattr(python_backend, name), getattr(compiled_backend, name)
        if not _same(fp(*inputs), fc(*inputs)):
            raise SystemExit(f"{name}: backends disagree on {label}")
        number = 3
        tp = min(timeit.repeat(lambda: fp(*inputs), number=number, repeat=args.repeat)) / number
        tc = min(timeit.repeat(lambda: fc(*inputs), number=number, repeat=args.repeat)) / number
        print(f"{name:<11} {label:<24} {tp * 1e3:>10.3f} {tc * 1e3:>12.3f} {tp / tc:>7.1f}x")


if __name__ == "__main__":
    main()
