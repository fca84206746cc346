"""Compare the compiled and pure-Python Brownian knot stores.

Three workloads:

* ``extend``: every path is extended on a uniform grid (what uniform
  schemes ask for);
* ``bridge``: random interior queries into already-sampled paths (what a
  finer level of a coupled ladder asks for);
* ``scheme2``: a full adaptive run of Example 2, where the store competes
  with the rest of the step.

Each workload is run on both backends from the same seed, and the sampled
values are checked to be bit-identical before timings are reported.

    python3 benchmarks/bench_brownian.py [--paths 2000] [--repeat 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from mvsde.models import make_example
from mvsde.randomness import BrownianPaths, SeedSpec, available_backends, gaussian_initials
from mvsde.schemes import SchemeConfig, run_scheme


def extend(backend, n, steps=256):
    p = BrownianPaths(SeedSpec(1), n, 1, backend=backend)
    idx = np.arange(n)
    out = None
    for k in range(1, steps + 1):
        out = p.sample(idx, np.full(n, k / steps))
    return out


def bridge(backend, n, queries=64):
    p = BrownianPaths(SeedSpec(2), n, 1, backend=backend)
    idx = np.arange(n)
    for k in range(1, 9):
        p.sample(idx, np.full(n, k / 8))
    rng = np.random.default_rng(0)
    out = None
    for _ in range(queries):
        out = p.sample(idx, rng.uniform(0.0, 1.0, n))
    return out


def scheme2(backend, n):
    ex = make_example("ex2", n=n)
    seed = SeedSpec(3)
    x0 = gaussian_initials(seed, ex.initial_law, n)
    paths = BrownianPaths(seed, n, 1, backend=backend)
    return run_scheme(ex.model, x0, paths, SchemeConfig("scheme2_adaptive_euler", delta=2**-6),
                      ex.step).final


WORKLOADS = {"extend": extend, "bridge": bridge, "scheme2": scheme2}


def best_time(fn, repeat):
    best, result = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernel not built; only the Python store is available")
    print(f"{'workload':10s} " + " ".join(f"{b:>10s}" for b in backends) + "   speedup")
    for name, fn in WORKLOADS.items():
        times, results = [], []
        for b in backends:
            t, r = best_time(lambda: fn(b, args.paths), args.repeat)
            times.append(t)
            results.append(r)
        if not all(np.array_equal(results[0], r) for r in results[1:]):
            raise SystemExit(f"{name}: backends disagree")
        speed = f"{times[-1] / times[0]:8.1f}x" if len(times) > 1 else "       -"
        print(f"{name:10s} " + " ".join(f"{t:9.3f}s" for t in times) + f"  {speed}")


if __name__ == "__main__":
    main()
