#!/usr/bin/env python3
"""Compare the compiled and pure-NumPy RK4 kernels.

Times the integrator on the workloads that dominate benchmark runs: a
batched population extraction (many short traces) and one long trace.
Checks agreement while it is at it.

Usage: python benchmarks/backend_benchmark.py [--repeats 3]
"""
import argparse
import time

import numpy as np

from ecgdenoise._kernels import _mcsharry_np, available_backends
from ecgdenoise.simulate import DEFAULT_PARAMS


def _args(n_traces, n_steps, stride=4, fs=500.0):
    p = DEFAULT_PARAMS
    rng = np.random.default_rng(0)
    a = np.tile(p.a, (n_traces, 1)) * rng.uniform(0.8, 1.2, (n_traces, 1))
    return (
        a, np.tile(p.b, (n_traces, 1)), np.tile(p.theta, (n_traces, 1)),
        np.zeros(n_traces), np.full(n_traces, p.omega),
        np.full(n_traces, -1.0), np.zeros(n_traces), np.zeros(n_traces),
        1.0 / (4.0 * fs), n_steps, stride,
    )


def _time(fn, args, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3)
    opts = parser.parse_args()

    backends = [("python", _mcsharry_np.rk4_mcsharry)]
    if "native" in available_backends():
        from ecgdenoise._kernels import _mcsharry_cy

        backends.insert(0, ("native", _mcsharry_cy.rk4_mcsharry))
    else:
        print("note: compiled kernel not built; showing python only")

    workloads = [
        ("population x1000 (4 cycles each)", _args(1000, 8000)),
        ("population x100  (4 cycles each)", _args(100, 8000)),
        ("single 60 s trace", _args(1, 120_000)),
    ]
    print(f"{'workload':<36}" + "".join(f"{name:>12}" for name, _ in backends)
          + ("      speedup" if len(backends) == 2 else ""))
    for label, args in workloads:
        times = []
        outputs = []
        for _, fn in backends:
            elapsed, out = _time(fn, args, opts.repeats)
            times.append(elapsed)
            outputs.append(out)
        row = f"{label:<36}" + "".join(f"{t:>11.3f}s" for t in times)
        if len(backends) == 2:
            row += f"{times[1] / times[0]:>12.1f}x"
            for got, want in zip(outputs[0], outputs[1]):
                np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-12)
        print(row)
    if len(backends) == 2:
        print("outputs agree to rtol 1e-9")


if __name__ == "__main__":
    main()
