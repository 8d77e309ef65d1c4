"""Time the compiled allocation kernels against the pure-Python fallback.

Usage: ``python benchmarks/bench_kernels.py [--repeat N]``. Also times a
whole engine run of a shipped scenario under each backend, in a
subprocess so the backend switch takes effect at import.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from netslice import kernels

SHAPES = [(4, 50), (8, 200), (16, 1000)]


def inputs(n_ue, n_cell, rng):
    rate = rng.uniform(0, 1000, size=(n_ue, n_cell))
    avg = rng.uniform(1, 500, size=n_ue)
    backlog = rng.choice([0.0, 5e3, 1e9], size=n_ue)
    score = rng.uniform(0, 6, size=(n_ue, n_cell))
    eligible = rng.random((n_ue, n_cell)) < 0.8
    return rate, avg, backlog, score, eligible


def bench_kernels(repeat):
    impls = kernels.implementations()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<14}{'shape':>12}" + "".join(f"{name + ' us':>14}" for name in impls) + f"{'speedup':>10}")
    for shape in SHAPES:
        rate, avg, backlog, score, eligible = inputs(*shape, rng)
        calls = {
            "pf_assign": lambda impl: kernels.pf_assign(rate, avg, backlog, impl=impl),
            "rr_assign": lambda impl: kernels.rr_assign(rate, backlog, 0, impl=impl),
            "argmax_owner": lambda impl: kernels.argmax_owner(score, eligible, impl=impl),
        }
        for name, call in calls.items():
            times = {}
            for label, impl in impls.items():
                n = max(1, repeat // (shape[1] // 50 or 1))
                times[label] = min(timeit.repeat(lambda: call(impl), number=n, repeat=3)) / n * 1e6
            speed = times["python"] / times["cython"] if "cython" in times else float("nan")
            row = f"{name:<14}{str(shape):>12}" + "".join(f"{times[k]:>14.1f}" for k in impls) + f"{speed:>9.1f}x"
            print(row)


ENGINE_SNIPPET = (
    "import time; from netslice import kernels; from netslice.runner import load_scenario, run; "
    "from netslice.runner.scenario import shipped; s = load_scenario(shipped('{name}')); "
    "t = time.perf_counter(); d = run(s).digest(); "
    "print(kernels.BACKEND, round(time.perf_counter() - t, 3), d[:16])"
)


def bench_engine(name):
    print(f"\nengine run of '{name}' (backend, seconds, digest prefix):")
    for pure in (False, True):
        env = dict(os.environ)
        env.pop("NETSLICE_PURE_PYTHON", None)
        if pure:
            env["NETSLICE_PURE_PYTHON"] = "1"
        out = subprocess.run([sys.executable, "-c", ENGINE_SNIPPET.format(name=name)], env=env,
                             capture_output=True, text=True, check=True)
        print("  " + out.stdout.strip())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--scenario", default="multiplexing")
    args = ap.parse_args()
    print(f"active backend: {kernels.BACKEND}\n")
    bench_kernels(args.repeat)
    bench_engine(args.scenario)


if __name__ == "__main__":
    main()
