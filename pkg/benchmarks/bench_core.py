"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_core.py --n 4000 --repeat 3
"""

import argparse
import time

import numpy as np

from fieldreuse import _pycore

try:
    from fieldreuse import _core
except ImportError:
    _core = None

QPSK = np.array([-1 - 1j, -1 + 1j, 1 - 1j, 1 + 1j]) / np.sqrt(2)


def _cases(n, K, rng):
    f = QPSK[rng.integers(0, 4, n)]
    y = np.zeros((K, n + 10), dtype=complex)
    for k in range(K):
        h = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        yk = np.convolve(f, h)
        y[k, :yk.size] = yk
    y += 0.05 * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
    qf = 0.1 * (rng.standard_normal((K, 6)) + 0j)
    qb = 0.1 * (rng.standard_normal(2) + 0j)
    m = np.zeros(n, dtype=complex)
    bits = rng.integers(0, 2, 2 * (n + 2))
    return {
        "dfe_run (lms)": lambda mod: mod.dfe_run(y, qf, qb, 5, n, m, QPSK, f, 0.005),
        "rls_dfe": lambda mod: mod.rls_dfe(y, 6, 2, 5, n, 0.99, 0.01, m, QPSK, f),
        "rls_track": lambda mod: mod.rls_track(y[:, :n], f, 3, 0.99, 0.01),
        "viterbi_hard": lambda mod: mod.viterbi_hard(bits, n, (0o7, 0o5), 3),
    }


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=4000, help="symbols per kernel call")
    p.add_argument("--K", type=int, default=4, help="receive channels")
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    cases = _cases(args.n, args.K, np.random.default_rng(args.seed))
    print(f"{'kernel':<16}{'python [s]':>12}{'compiled [s]':>14}{'speed-up':>10}")
    for name, call in cases.items():
        t_py = best_time(lambda: call(_pycore), args.repeat)
        if _core is None:
            print(f"{name:<16}{t_py:>12.4f}{'n/a':>14}{'':>10}")
            continue
        t_c = best_time(lambda: call(_core), args.repeat)
        print(f"{name:<16}{t_py:>12.4f}{t_c:>14.4f}{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
