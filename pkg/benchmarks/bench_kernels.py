"""Compare the compiled kernels with the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat 3]

Each kernel is timed on both backends and checked for agreement.
"""

import argparse
import time

import numpy as np

from avgspde._backend import available_backends
from avgspde.integrators import SimParams, linear_coef_table, step_coefficients
from avgspde.models import benchmark_spec
from avgspde.noise import ProcessTag, derive_keys
from avgspde.oracle import mode_blocks


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the fallback is available")

    spec = benchmark_spec()
    n, M, steps = 8, 200, 512
    params = SimParams(epsilon=2.0**-6, T=0.5, n=n)
    coef = step_coefficients(spec, n, params.coupled_step, params.epsilon)
    table = linear_coef_table(spec, coef, n)
    keys1 = derive_keys(0, np.arange(M), ProcessTag.W1)
    keys2 = derive_keys(0, np.arange(M), ProcessTag.W2)
    x0 = np.zeros((M, n))
    x0[:, 0] = 1.0
    B, f, D = mode_blocks(spec, 2.0**-9, n)
    m0 = np.zeros((n, 2))
    m0[0, 0] = 1.0
    nsteps = np.full(n, 20000)

    def paths(k):
        x, y, xb = x0.copy(), np.zeros((M, n)), x0.copy()
        k.linear_paths(x, y, xb, keys1, keys2, table, 0, steps, True, True)
        return np.concatenate([x, y, xb])

    cases = {
        "normals (1000 x 20000)": lambda k: k.normals(derive_keys(1, np.arange(1000), ProcessTag.AUX), 0, 20000),
        f"linear_paths ({M} paths x {steps} steps)": paths,
        "rk4_moments (8 modes x 20000 steps)": lambda k: k.rk4_moments(B, f, D, m0, nsteps, 0.5),
    }
    print(f"{'kernel':42s} " + " ".join(f"{name:>12s}" for name in backends) + "   speedup  max|diff|")
    for label, fn in cases.items():
        timings, outputs = {}, {}
        for name, k in backends.items():
            timings[name], outputs[name] = best_of(lambda: fn(k), args.repeat)
        row = f"{label:42s} " + " ".join(f"{timings[name]:11.4f}s" for name in backends)
        if len(backends) == 2:
            diff = float(np.max(np.abs(outputs["compiled"] - outputs["python"])))
            row += f"   {timings['python'] / timings['compiled']:7.1f}x  {diff:.2e}"
        print(row)


if __name__ == "__main__":
    main()
