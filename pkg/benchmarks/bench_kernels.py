"""Compare the compiled and pure-Python kernels on identical inputs.

Run with ``python benchmarks/bench_kernels.py [--repeat R]``. For each kernel
the script reports the best wall time per call of both backends, the speedup
and whether the outputs agree bit for bit.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from dnls_phase import _kernels_py, kernels
from dnls_phase.gibbs_sampler import neighbor_table
from dnls_phase.lattice_spectrum import TorusSpec


def best_time(func, repeat: int) -> tuple[float, object]:
    best, result = float("inf"), None
    for _ in range(repeat):
        start = time.perf_counter()
        result = func()
        best = min(best, time.perf_counter() - start)
    return best, result


def sweep_case(n: int, seed: int = 0):
    spec = TorusSpec(3, n)
    rng = np.random.default_rng(seed)
    re0 = rng.normal(size=spec.N) * 0.5
    im0 = rng.normal(size=spec.N) * 0.5
    noise = rng.normal(size=(spec.N, 2)) * np.sqrt(0.5)
    unif = rng.random(spec.N)
    nbr = neighbor_table(spec)
    mass0 = float(np.sum(re0**2 + im0**2))
    coupling = (2.0 / spec.N) * 0.5

    def run(impl):
        def call():
            re, im = re0.copy(), im0.copy()
            out = impl.metropolis_sweep(re, im, nbr, 0.5, coupling, 3.0, 0.6, float(spec.N), mass0, noise, unif)
            return re, im, out

        return call

    return f"metropolis sweep, N={spec.N}", run


def returns_case(walks: int, steps: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    directions = rng.integers(0, 6, size=(walks, steps)).astype(np.int8)

    def run(impl):
        return lambda: impl.count_returns(directions, 3)

    return f"return counting, {walks} walks x {steps} steps", run


def same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return bool(np.array_equal(np.asarray(a), np.asarray(b)))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if kernels.compiled is None:
        print("compiled extension not built; only the Python backend is available")
        return
    cases = [sweep_case(4), sweep_case(8), sweep_case(16), returns_case(20000, 1000)]
    print(f"{'kernel':<42}{'compiled [s]':>14}{'python [s]':>14}{'speedup':>10}{'identical':>11}")
    for label, run in cases:
        t_c, out_c = best_time(run(kernels.compiled), args.repeat)
        t_p, out_p = best_time(run(_kernels_py), max(1, args.repeat // 2))
        print(f"{label:<42}{t_c:>14.2e}{t_p:>14.2e}{t_p / t_c:>10.1f}{str(same(out_c, out_p)):>11}")


if __name__ == "__main__":
    main()
