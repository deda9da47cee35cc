"""Benchmark the compiled kernels against the pure numpy fallback.

Times the three hot kernels on simulation-shaped workloads, then one full
Monte-Carlo experiment through each backend.

    python benchmarks/bench_kernels.py
"""

import os
import subprocess
import sys
import time

import numpy as np

from eqalloc._kernels import available_backends, get_backend


def timeit(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_backend(impl, rng):
    results = {}

    uniforms = rng.random((20_000, 15))

    def srswor():
        for u in uniforms:
            impl.srswor_indices(70, 15, u)

    results["srswor_indices (20k draws of 15/70)"] = timeit(srswor)

    shares = rng.uniform(0.5, 2.0, 25)
    shares /= shares.sum()
    cum = np.cumsum(shares) * 5
    cum[-1] = 5.0
    starts = rng.random(20_000)

    def systematic():
        for s in starts:
            impl.systematic_positions(cum, float(s))

    results["systematic_positions (20k draws of 5/25)"] = timeit(systematic)

    contrib = rng.uniform(100.0, 900.0, 6)
    draws = rng.integers(0, 6, size=(200, 5)).astype(np.int64)

    def replicate():
        for _ in range(3_000):
            impl.replicate_sums(contrib, draws, 1.2)

    results["replicate_sums (3k calls, B=200, n_h=6)"] = timeit(replicate, repeats=3)
    return results


def bench_experiment(backend):
    """Full experiment in a subprocess so the backend choice is clean."""
    code = (
        "import time\n"
        "from eqalloc import Budgets, SchemeId, allocate, round_allocation\n"
        "from eqalloc.population import derive_hr\n"
        "from eqalloc.simulate import FrameParams, generate_frame, simulate_allocation\n"
        "params = FrameParams(subpopulations=3, psu_strata=2, psus_per_stratum=25,\n"
        "                     units_per_cell=70, psu_spread=0.6, size_spread=0.15)\n"
        "frame = generate_frame(params, seed=101)\n"
        "pop = frame.to_population()\n"
        "coeffs = derive_hr(pop)\n"
        "res = allocate(coeffs, SchemeId.TWO_STAGE_HR, Budgets(x=30.0, z=450.0))\n"
        "res = round_allocation(res, pop, coeffs=coeffs, observe_zero_cells=True)\n"
        "t0 = time.perf_counter()\n"
        "simulate_allocation(frame, res, replicates=500, n_boot=200, seed=42)\n"
        "print(time.perf_counter() - t0)\n"
    )
    env = dict(os.environ, EQALLOC_BACKEND=backend)
    out = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True, env=env
    )
    if out.returncode != 0:
        raise RuntimeError(out.stderr)
    return float(out.stdout.strip())


def main():
    backends = available_backends()
    print(f"available backends: {backends}")
    if "c" not in backends:
        print("compiled kernels not built; run pip install -e . first")

    rows = {}
    for name in backends:
        rng = np.random.default_rng(7)
        rows[name] = bench_backend(get_backend(name), rng)

    width = max(len(k) for r in rows.values() for k in r)
    print(f"\n{'kernel':<{width}}  " + "  ".join(f"{b:>10}" for b in backends)
          + ("     speedup" if len(backends) == 2 else ""))
    for key in next(iter(rows.values())):
        line = f"{key:<{width}}  " + "  ".join(
            f"{rows[b][key] * 1e3:>8.2f}ms" for b in backends
        )
        if len(backends) == 2:
            line += f"  {rows[backends[1]][key] / rows[backends[0]][key]:>9.1f}x"
        print(line)

    print("\nfull experiment (500 replicates, 200 bootstrap, ~10k units):")
    for name in backends:
        elapsed = bench_experiment(name)
        print(f"  {name:>6}: {elapsed:.2f} s")


if __name__ == "__main__":
    main()
