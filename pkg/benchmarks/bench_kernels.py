"""Compiled vs numpy kernels on the grid-chain hot loops.

    python benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import time

import numpy as np

from llmo.agents import SyntheticAgent
from llmo.grid import Grid
from llmo.kernels import backends


def timeit(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    impls = backends()
    rng = np.random.default_rng(0)

    cases = []
    g = Grid.unit(4, 2, 1)
    r = np.array([0.0, 0.34, 0.27, 0.22])
    lam = SyntheticAgent.random(g, rng).lam
    for L in (1, 2, 3):
        lams = np.stack([lam] * L)
        cases.append((f"exact_transition S=16 L={L}",
                       lambda m, lams=lams: m.exact_transition(lams, r, 2, 4, False)))
    g2 = Grid.unit(6, 2, 2)  # 1296 states
    r2 = rng.permutation(36).astype(float)
    lam2 = SyntheticAgent.random(g2, rng).lam
    cases.append(("exact_transition S=1296 L=1", lambda m: m.exact_transition(lam2[None], r2, 2, 36, False)))
    cdf = np.cumsum(lam.T, axis=1)[None]
    N, T = 100_000, 50
    init = rng.integers(0, 16, N)
    u = rng.random((T, N, 1))
    cases.append((f"simulate_chain N={N} T={T}", lambda m: m.simulate_chain(cdf, init, u, r, 2, 4, False)))
    codes = rng.integers(0, 16, (N, 3))
    ex = rng.integers(0, 16, N)
    cases.append((f"select_codes N={N} L=3", lambda m: m.select_codes(codes, ex, r, 2, 4, False)))

    names = list(impls)
    print(f"{'case':34s}" + "".join(f"{n:>12s}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in cases:
        times = [timeit(lambda m=impls[n]: fn(m), args.repeat) for n in names]
        row = f"{label:34s}" + "".join(f"{t * 1e3:10.1f}ms" for t in times)
        if len(times) > 1:
            row += f"{times[0] / times[1]:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
