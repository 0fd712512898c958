"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Covers a batched Jacobi eigensolve, the funding driver over a path cloud,
and one full backward solve with each backend patched in.
"""

import argparse
import time

import numpy as np

from bsdefund import BsdeProblem, Generator, TimeGrid, kernels, simulate_paths, solve_backward
from bsdefund.market import MarketModel


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def use(module):
    kernels.jacobi_eigh = module.jacobi_eigh
    kernels.funding_fl = module.funding_fl


def cases():
    rng = np.random.default_rng(0)
    g = rng.standard_normal((20_000, 4, 4))
    batch = g @ np.swapaxes(g, 1, 2)
    y = rng.standard_normal(200_000)
    w = rng.standard_normal((200_000, 3))
    model = MarketModel(
        d=3, horizon=1.0, s0=np.full(3, 100.0), mu=np.array([0.05, 0.04, 0.06]),
        sigma=np.array([[0.2, 0.0, 0.0], [0.05, 0.25, 0.0], [0.02, 0.03, 0.3]]),
        kappa=np.zeros(3), rate_l=0.01, rate_b=0.03, rate_ib=np.array([0.02, 0.025, 0.015]))
    paths = simulate_paths(model, TimeGrid(25, 1.0), 20_000, 1)
    problem = BsdeProblem.build(Generator.funding(model).negated(), paths,
                                lambda s: np.maximum(s[:, 0] - 100.0, 0.0))
    return {
        "jacobi_eigh (20000 x 4x4)": lambda k: k.jacobi_eigh(batch),
        "funding_fl (200000 x d=3)": lambda k: k.funding_fl(y, w, 0.01, 0.03, np.array([0.02, 0.025, 0.015])),
        "backward solve (20000 paths, 25 steps, d=3)": lambda k: (use(k), solve_backward(problem)),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    compiled, python = kernels.compiled_kernels, kernels.python_kernels
    if compiled is None:
        print("compiled kernels are not built; only the fallback is timed")
    saved = kernels.jacobi_eigh, kernels.funding_fl
    print(f"{'case':46s} {'compiled':>10s} {'fallback':>10s} {'speedup':>8s}")
    try:
        for name, fn in cases().items():
            t_py = best_of(lambda: fn(python), args.repeat)
            if compiled is None:
                print(f"{name:46s} {'-':>10s} {t_py:10.4f} {'-':>8s}")
                continue
            t_c = best_of(lambda: fn(compiled), args.repeat)
            print(f"{name:46s} {t_c:10.4f} {t_py:10.4f} {t_py / t_c:7.1f}x")
    finally:
        kernels.jacobi_eigh, kernels.funding_fl = saved


if __name__ == "__main__":
    main()
