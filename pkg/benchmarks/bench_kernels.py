"""Compare the numba and pure-numpy kernels.

Run with ``python benchmarks/bench_kernels.py``.  Times are the best of
``--repeat`` runs after one warm-up call (which also triggers compilation).
"""

import argparse
import os
import time

import numpy as np

from scenariocert import kernels
from scenariocert._numeric import PURE_NUMPY_ENV
from scenariocert.linalg_lp import LinearProgram, numeric_rank, solve_lp


def random_lp(m, d, seed):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(m, d))
    h = rng.uniform(0.5, 1.5, size=m)
    return LinearProgram(rng.normal(size=d), np.vstack([G, np.eye(d), -np.eye(d)]),
                         np.concatenate([h, np.full(2 * d, 10.0)]))


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def run(flavour, cases, repeat):
    os.environ[PURE_NUMPY_ENV] = "1" if flavour == "numpy" else "0"
    rows = []
    for name, fn in cases:
        rows.append((name, best_of(fn, repeat)))
    return rows


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    lps = {(m, d): random_lp(m, d, 1) for m, d in ((50, 10), (200, 20), (400, 40))}
    mats = {k: np.random.default_rng(k).normal(size=(k, k)) for k in (50, 200)}
    cases = [(f"solve_lp m={m} d={d}", (lambda lp=lp: solve_lp(lp))) for (m, d), lp in lps.items()]
    cases += [(f"numeric_rank {k}x{k}", (lambda M=M: numeric_rank(M))) for k, M in mats.items()]

    previous = os.environ.get(PURE_NUMPY_ENV)
    try:
        fast = run("numba", cases, args.repeat) if kernels.NUMBA_AVAILABLE else None
        slow = run("numpy", cases, args.repeat)
    finally:
        if previous is None:
            os.environ.pop(PURE_NUMPY_ENV, None)
        else:
            os.environ[PURE_NUMPY_ENV] = previous

    print(f"{'case':<28}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for i, (name, t_np) in enumerate(slow):
        t_nb = fast[i][1] if fast else float("nan")
        print(f"{name:<28}{1e3 * t_nb:>12.2f}{1e3 * t_np:>12.2f}{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()
